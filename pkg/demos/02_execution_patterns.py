"""
The three execution patterns
============================

parallel_for, parallel_reduce and parallel_scan run the same body on a
serial executor or a worker pool.  Reductions follow a combination tree
fixed by the index range, so a floating-point sum is bitwise identical for
every worker count -- the property the whole image pipeline's
reproducibility rests on.
"""

import numpy as np

from xtrace import Executor, RangePolicy, parallel_for, parallel_reduce, parallel_scan

values = np.random.default_rng(7).uniform(-1.0, 1.0, 50_000)
policy = RangePolicy(0, len(values))

# parallel_for: disjoint output slots, any executor
squares = np.zeros(len(values))
with Executor.workers(4) as ex:
    parallel_for(ex, "square", policy, lambda i: squares.__setitem__(i, values[i] ** 2))
print(f"parallel_for filled {np.count_nonzero(squares)} slots")

# parallel_reduce: the float sum is a pure function of the range
sums = {}
for n in (1, 2, 4, 8):
    with Executor.workers(n) as ex:
        sums[n] = parallel_reduce(ex, "sum", policy,
                                  lambda i: float(values[i]), lambda a, b: a + b, 0.0)
with Executor.serial() as ex:
    serial_sum = parallel_reduce(ex, "sum", policy,
                                 lambda i: float(values[i]), lambda a, b: a + b, 0.0)
print(f"serial sum     = {serial_sum!r}")
for n, s in sums.items():
    marker = "bitwise equal" if s == serial_sum else "MISMATCH"
    print(f"workers({n}) sum = {s!r}  <- {marker}")

# parallel_scan: inclusive prefix maxima of the squared values
with Executor.workers(4) as ex:
    running_max = parallel_scan(ex, "cummax", RangePolicy(0, 10),
                                lambda i: squares[i], max)
print("first 10 running maxima:", [f"{v:.3f}" for v in running_max])
