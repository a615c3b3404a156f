"""Backend-agnostic execution patterns: for / reduce / scan over pluggable executors.

The layer makes one promise beyond plain parallelism: every pattern result
is a pure function of (range, body/map, combine) and never of worker count
or scheduling order.  Reductions and scans follow a combination tree fixed
by the index range alone; parallel_for bodies own disjoint output slots, so
ordering cannot matter.

Worker backends are threads.  Kernel bodies spend their time inside numpy,
which releases the GIL, so threads scale for the workloads this package
dispatches.  Bodies must receive plain-value contexts only (arrays, scalars,
frozen dataclasses) -- never a handle to a mutable owning object.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .errors import PatternFault

__all__ = [
    "Executor",
    "RangePolicy",
    "TimingRecord",
    "default_worker_count",
    "parallel_for",
    "parallel_for_blocks",
    "parallel_reduce",
    "parallel_scan",
    "kernel_timer",
]

WORKERS_ENV_VAR = "XTRACE_WORKERS"

# Ranges at or below this size are not worth fanning out to the pool.
_SERIAL_CUTOFF = 2

# Fixed chunk length for the scan; range-determined grouping keeps results
# independent of worker count even for non-associative float combines.
_SCAN_CHUNK = 2048


class TimingRecord(NamedTuple):
    label: str
    ms: float


def default_worker_count() -> int:
    """Worker count from the XTRACE_WORKERS env var, else the CPU count."""
    raw = os.environ.get(WORKERS_ENV_VAR)
    if raw is not None:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV_VAR} must be an integer >= 1, got {raw!r}")
        if n < 1:
            raise ValueError(f"{WORKERS_ENV_VAR} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


@dataclass
class Executor:
    """Where pattern iterations run: inline, or on a small thread pool.

    ``Executor.workers(1)`` behaves identically to ``Executor.serial()``;
    both take the inline path, and pooled runs produce the same values by
    construction anyway.  The timing log is only appended to between
    pattern invocations, never concurrently.
    """

    kind: str  # "serial" | "workers"
    n: int = 1
    name: str = ""
    timing_log: list[TimingRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("serial", "workers"):
            raise ValueError(f"unknown executor kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("worker count must be >= 1")
        if self.kind == "serial":
            self.n = 1
        if not self.name:
            self.name = "serial" if self.kind == "serial" else f"workers{self.n}"
        self._pool = None

    @classmethod
    def serial(cls, name: str = "") -> "Executor":
        return cls("serial", 1, name)

    @classmethod
    def workers(cls, n: int | None = None, name: str = "") -> "Executor":
        return cls("workers", n if n is not None else default_worker_count(), name)

    def fresh(self, name: str = "") -> "Executor":
        """Same kind and width, empty timing log, own pool."""
        return Executor(self.kind, self.n, name or self.name)

    @property
    def parallel(self) -> bool:
        return self.kind == "workers" and self.n > 1

    def _get_pool(self) -> ThreadPoolExecutor:
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.n)
        return self._pool

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self):
        return f"Executor({self.name})"


@dataclass(frozen=True)
class RangePolicy:
    """Half-open index range [start, end) with an optional minimum chunk size."""

    start: int
    end: int
    grain: int | None = None

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("range end must be >= start")
        if self.grain is not None and self.grain < 1:
            raise ValueError("grain must be >= 1")

    def __len__(self):
        return self.end - self.start

    def blocks(self, workers: int) -> list[tuple[int, int]]:
        """Contiguous blocks covering the range.

        Uses the explicit grain when given; otherwise roughly four blocks
        per worker to absorb per-index cost imbalance.  Callers that need
        block boundaries independent of worker count pass an explicit grain.
        """
        total = len(self)
        if total == 0:
            return []
        grain = self.grain
        if grain is None:
            grain = max(1, -(-total // (4 * workers)))
        return [
            (lo, min(lo + grain, self.end))
            for lo in range(self.start, self.end, grain)
        ]


def _run_blocks(executor: Executor, label: str, blocks, block_body):
    """Run block_body(lo, hi) over every block; surface the lowest failing index.

    block_body returns None on success or (index, exception) on failure.
    """
    faults = []
    if not executor.parallel or len(blocks) <= 1:
        for lo, hi in blocks:
            fault = block_body(lo, hi)
            if fault is not None:
                faults.append(fault)
                break  # later indices cannot precede this one serially
    else:
        pool = executor._get_pool()
        futures = [pool.submit(block_body, lo, hi) for lo, hi in blocks]
        for fut in futures:
            fault = fut.result()
            if fault is not None:
                faults.append(fault)
    if faults:
        index, exc = min(faults, key=lambda f: f[0])
        raise PatternFault(label, index, exc) from exc


def parallel_for(executor: Executor, label: str, policy: RangePolicy, body: Callable[[int], None]):
    """Invoke body exactly once per index in the range, in no guaranteed order.

    The body must touch only per-index or immutable state.  On a body
    exception the pattern aborts and raises PatternFault carrying the first
    (lowest) failing index.
    """

    def block_body(lo, hi):
        for i in range(lo, hi):
            try:
                body(i)
            except Exception as exc:  # noqa: BLE001 - surfaced via PatternFault
                return (i, exc)
        return None

    _run_blocks(executor, label, policy.blocks(executor.n), block_body)


def parallel_for_blocks(executor: Executor, label: str, policy: RangePolicy,
                        body: Callable[[int, int], None]):
    """Block variant of parallel_for: body receives [lo, hi) index spans.

    This is what the pixel kernels use; a vectorized body over a block is
    the per-index contract evaluated elementwise.  Exceptions that carry a
    ``pixel`` attribute locate the fault exactly; otherwise the block start
    is reported.
    """

    def block_body(lo, hi):
        try:
            body(lo, hi)
        except Exception as exc:  # noqa: BLE001
            return (getattr(exc, "pixel", lo), exc)
        return None

    _run_blocks(executor, label, policy.blocks(executor.n), block_body)


def _half(size: int) -> int:
    # Largest power of two strictly below size (size >= 2): the classic
    # pairwise-summation split.
    return 1 << ((size - 1).bit_length() - 1)


def parallel_reduce(executor: Executor, label: str, policy: RangePolicy,
                    map_fn: Callable[[int], object],
                    combine: Callable[[object, object], object],
                    identity: object):
    """Fold map_fn over the range with a combination tree fixed by the range.

    The tree splits every span at the largest power of two below its size,
    down to single elements, so the result is identical for any worker
    count -- including for floating-point combines, where the error behaves
    like pairwise summation.
    """
    total = len(policy)
    if total == 0:
        return identity

    def reduce_span(lo, hi):
        if hi - lo == 1:
            return map_fn(lo)
        mid = lo + _half(hi - lo)
        return combine(reduce_span(lo, mid), reduce_span(mid, hi))

    if not executor.parallel or total <= _SERIAL_CUTOFF:
        return reduce_span(policy.start, policy.end)

    # Evaluate a frontier of fixed tree nodes in the pool, then combine the
    # partial results following the identical tree shape.
    target = executor.n * 4
    frontier: list[tuple[int, int]] = [(policy.start, policy.end)]
    while len(frontier) < target:
        widest = max(frontier, key=lambda span: span[1] - span[0])
        if widest[1] - widest[0] <= 1:
            break
        frontier.remove(widest)
        lo, hi = widest
        mid = lo + _half(hi - lo)
        frontier.extend([(lo, mid), (mid, hi)])
    pool = executor._get_pool()
    partial = {
        span: pool.submit(reduce_span, *span) for span in frontier
    }

    def assemble(lo, hi):
        if (lo, hi) in partial:
            return partial[(lo, hi)].result()
        mid = lo + _half(hi - lo)
        return combine(assemble(lo, mid), assemble(mid, hi))

    try:
        return assemble(policy.start, policy.end)
    except PatternFault:
        raise
    except Exception as exc:  # noqa: BLE001
        raise PatternFault(label, getattr(exc, "pixel", policy.start), exc) from exc


def parallel_scan(executor: Executor, label: str, policy: RangePolicy,
                  map_fn: Callable[[int], object],
                  combine: Callable[[object, object], object]) -> list:
    """Inclusive prefix fold of map_fn over the range.

    Chunked two-phase scan with a fixed chunk length: local scans, a serial
    fold of chunk totals, then offset application.  For associative combines
    this equals the plain left fold; grouping is range-determined, so the
    output never depends on worker count.
    """
    total = len(policy)
    if total == 0:
        return []
    chunks = RangePolicy(policy.start, policy.end, _SCAN_CHUNK).blocks(1)
    local: list[list] = [None] * len(chunks)

    def scan_chunk(ci):
        lo, hi = chunks[ci]
        vals = []
        acc = None
        for i in range(lo, hi):
            v = map_fn(i)
            acc = v if acc is None else combine(acc, v)
            vals.append(acc)
        local[ci] = vals

    def run_over_chunks(fn):
        if not executor.parallel or len(chunks) <= 1:
            for ci in range(len(chunks)):
                fn(ci)
        else:
            pool = executor._get_pool()
            for fut in [pool.submit(fn, ci) for ci in range(len(chunks))]:
                fut.result()

    try:
        run_over_chunks(scan_chunk)
        offsets = [None] * len(chunks)
        running = None
        for ci in range(len(chunks) - 1):
            running = local[ci][-1] if running is None else combine(running, local[ci][-1])
            offsets[ci + 1] = running

        out: list = [None] * total

        def apply_chunk(ci):
            lo, hi = chunks[ci]
            off = offsets[ci]
            base = lo - policy.start
            if off is None:
                out[base:base + (hi - lo)] = local[ci]
            else:
                out[base:base + (hi - lo)] = [combine(off, v) for v in local[ci]]

        run_over_chunks(apply_chunk)
    except PatternFault:
        raise
    except Exception as exc:  # noqa: BLE001
        raise PatternFault(label, policy.start, exc) from exc
    return out


def kernel_timer(executor: Executor, label: str, action: Callable[[], None]) -> float:
    """Run action, record (label, elapsed ms) in the executor's timing log."""
    t0 = time.perf_counter()
    action()
    ms = (time.perf_counter() - t0) * 1e3
    executor.timing_log.append(TimingRecord(label, ms))
    return ms
