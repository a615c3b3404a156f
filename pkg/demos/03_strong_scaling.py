"""
Strong scaling at desk scale
============================

Fixed workload, growing rank count: ideal scaling halves the wall time per
doubling.  Images here are embarrassingly parallel, so on a machine with
enough cores the curve tracks the ideal line closely; the efficiency
column quantifies the gap.  Writes the scaling CSV consumed by
``xtrace report``.
"""

import os
from pathlib import Path

from xtrace import load_config, strong_scaling, write_scaling_csv

repo = Path(__file__).resolve().parent.parent
config = load_config(repo / "configs" / "example.toml")

cores = os.cpu_count() or 1
counts = [w for w in (1, 2, 4, 8) if w <= 2 * cores]
print(f"host has {cores} cores; sweeping rank counts {counts}")
print(f"workload: 48 images, {config.panel.slow_pixels} x {config.panel.fast_pixels} pixels\n")

rows = strong_scaling(config, n_images=48, worker_counts=counts, repeat=2,
                      io_enabled=False)
print(f"{'ranks':>6} {'wall_s':>9} {'speedup':>8} {'efficiency':>11}   ideal")
for row in rows:
    ideal = row.workers / rows[0].workers
    print(f"{row.workers:>6d} {row.wall_s:>9.3f} {row.speedup:>8.2f} "
          f"{row.efficiency:>11.2f}   {ideal:.1f}x")

out = repo / "demos" / "output"
out.mkdir(exist_ok=True)
write_scaling_csv(rows, out / "scaling.csv")
print(f"\nCSV written to {out / 'scaling.csv'}; render it with:")
print(f"  xtrace report --csv {out / 'scaling.csv'}")
