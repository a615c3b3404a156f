"""
Simulate one diffraction image
==============================

Loads the shipped example config, runs the full kernel pipeline for a
single shot (Bragg spots + water background folded into the 64-bit
accumulator), writes the raw image with its JSON sidecar, and renders an
8-bit preview you can open in any image viewer.
"""

from pathlib import Path

from xtrace import (
    Executor,
    image_stats,
    simulate_image,
    load_config,
    write_image,
    write_preview,
)

repo = Path(__file__).resolve().parent.parent
out_dir = repo / "demos" / "output"
out_dir.mkdir(exist_ok=True)

config = load_config(repo / "configs" / "example.toml")
print(f"crystal: {config.cell.a} x {config.cell.b} x {config.cell.c} Angstrom cell, "
      f"{config.n_cells} unit cells, {config.mosaic_domains} mosaic domains")
print(f"detector: {config.panel.slow_pixels} x {config.panel.fast_pixels} pixels at "
      f"{config.panel.distance * 1e3:.0f} mm")

with Executor.serial() as executor:
    image = simulate_image(config, image_seed=config.seed, executor=executor)
    for record in executor.timing_log:
        print(f"  {record.label:<18s} {record.ms:8.2f} ms")

stats = image_stats(image)
print(f"photons/pixel: min {stats.min:.3g}  max {stats.max:.3g}  mean {stats.mean:.3g}")

write_image(image, out_dir / "single_shot", panel=config.panel,
            spectrum=config.spectrum, seed=config.seed, image_index=0)
write_preview(image, out_dir / "single_shot.pgm")
print(f"wrote {out_dir / 'single_shot.bin'} (+ .json sidecar) and single_shot.pgm")
