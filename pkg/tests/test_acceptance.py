"""Acceptance suite: one test per acceptance criterion, stated tolerances.

Each test prints a PASS line with its runtime on success; run with
``pytest tests/test_acceptance.py -v -s`` to see one line per criterion.
"""

import os
import time

import numpy as np
import pytest

import scalar_reference as ref
from conftest import make_crystal, rotation_about
from malformed_fixtures import BACKGROUND_BAD, CONFIG_BAD, HKL_BAD

from xtrace.errors import ConfigError, ParseError
from xtrace.execution import Executor, RangePolicy, parallel_for, parallel_reduce, parallel_scan
from xtrace.io import (
    SimulationConfig,
    load_background,
    load_config,
    load_hkl,
    read_image,
    write_image,
)
from xtrace.kernels import (
    R_E_SQR,
    PixelBuffer,
    SpotsContext,
    add_array,
    add_background,
    lattice_transform,
    nanobragg_spots,
)
from xtrace.model import (
    BackgroundProfile,
    BeamSpectrum,
    DetectorPanel,
    MosaicDomainSet,
    StructureFactorTable,
    UnitCell,
    solid_angle,
)
from xtrace.scheduler import CampaignPlan, run_campaign, strong_scaling


def announce(name, t0):
    print(f"\nACCEPTANCE PASS: {name} ({time.perf_counter() - t0:.2f} s)")


def bench_config(slow=128, fast=128, oversample=1, seed=0):
    return SimulationConfig(
        cell=UnitCell(100.0, 100.0, 100.0, 90.0, 90.0, 90.0),
        n_cells=(5, 5, 5),
        panel=DetectorPanel(slow, fast, 100e-6, 0.1, ((slow - 1) / 2, (fast - 1) / 2)),
        spectrum=BeamSpectrum(samples=((1.0, 0.6), (1.01, 0.4)), fluence=1e24,
                              polarization_on=True),
        sf_table=StructureFactorTable({(1, 0, 0): 250.0}, default_f=100.0),
        background=BackgroundProfile(points=((0.0, 2.57), (0.07, 2.8), (0.3, 6.5))),
        mosaic_domains=2,
        mosaic_spread_deg=0.05,
        oversample=oversample,
        seed=seed,
    )


def test_oracle_equivalence_full_pipeline():
    """Spots + background + add_array on 4x4 vs the scalar reference, 1e-6 rel."""
    t0 = time.perf_counter()
    panel = DetectorPanel(4, 4, 100e-6, 0.1, (1.5, 1.5))
    beam = BeamSpectrum(samples=((1.0, 0.6), (1.05, 0.4)), fluence=1e24,
                        polarization_on=True)
    mosaic = MosaicDomainSet(np.stack([rotation_about([1, 0, 0], 0.02),
                                       rotation_about([0, 1, 1], -0.03)]),
                             spread_deg=0.03)
    crystal = make_crystal(n_cells=(5, 5, 5), mosaic=mosaic,
                           entries={(1, 0, 0): 250.0}, default_f=100.0)
    profile_pts = ((0.0, 2.57), (0.0365, 2.58), (0.07, 2.8), (0.12, 5.0))
    profile = BackgroundProfile(points=profile_pts)

    spots = PixelBuffer.zeros(panel.dims)
    nanobragg_spots(SpotsContext(crystal, panel, beam, oversample=2), spots)
    background = PixelBuffer.zeros(panel.dims)
    add_background(profile, panel, beam, 1.0, background)
    accumulator = PixelBuffer.zeros(panel.dims, "f64")
    add_array(accumulator, spots)
    add_array(accumulator, background)

    oracle = np.array(ref.ref_pipeline(
        (100.0, 100.0, 100.0, 90.0, 90.0, 90.0),
        tuple(map(tuple, np.eye(3))),
        [tuple(map(tuple, m)) for m in mosaic.rotations],
        (5, 5, 5),
        {(1, 0, 0): 250.0},
        100.0,
        {"slow_pixels": 4, "fast_pixels": 4, "pixel_size": 100e-6, "distance": 0.1,
         "beam_center": (1.5, 1.5), "fast_axis": (1.0, 0.0, 0.0),
         "slow_axis": (0.0, 1.0, 0.0)},
        {"samples": beam.samples, "fluence": beam.fluence,
         "polarization_on": True, "beam_direction": (0.0, 0.0, 1.0)},
        2,
        list(profile_pts),
        1.0,
        R_E_SQR,
    ))
    rel = np.abs(accumulator.data - oracle) / np.abs(oracle)
    assert rel.max() < 1e-6, f"max relative error {rel.max():.3e}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"runtime {elapsed:.2f} s exceeds 1 s budget"
    announce("oracle equivalence (4x4 pipeline, 1e-6 rel)", t0)


def test_executor_determinism_image_files(tmp_path):
    """16 images at 128x128: Serial vs Workers(2,4,8) produce identical files."""
    t0 = time.perf_counter()
    config = bench_config()
    reference_bytes = None
    for label, executor in [("serial", Executor.serial()),
                            ("w2", Executor.workers(2)),
                            ("w4", Executor.workers(4)),
                            ("w8", Executor.workers(8))]:
        out = tmp_path / label
        plan = CampaignPlan(n_images=16, ranks=1, io_enabled=True, seed=config.seed)
        with executor:
            run_campaign(plan, config, executor, out_dir=out)
        blob = b"".join(
            (out / f"img_{i:06d}.bin").read_bytes() for i in range(16))
        if reference_bytes is None:
            reference_bytes = blob
        else:
            assert blob == reference_bytes, f"{label} differs from serial"
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"runtime {elapsed:.1f} s exceeds 2 min budget"
    announce("executor determinism (16 images, serial vs workers 2/4/8)", t0)


def test_physics_invariants():
    """Lattice peak exact, scaling laws, grating null, inverse-square factor."""
    t0 = time.perf_counter()
    # integer-peak value is exactly Na * Nb * Nc (limit branch)
    crystal = make_crystal(n_cells=(5, 5, 5))
    assert abs(lattice_transform(crystal, 3.0, -1.0, 2.0)) == 125.0
    crystal = make_crystal(n_cells=(2, 3, 4))
    assert abs(lattice_transform(crystal, 1.0, 1.0, -1.0)) == 24.0

    # grating null at h = 1/Na within 1e-9
    crystal = make_crystal(n_cells=(5, 1, 1))
    assert abs(lattice_transform(crystal, 0.2, 0.0, 0.0)) < 1e-9

    # fluence linearity and default_f quadratic scaling within 1e-12 relative
    panel = DetectorPanel(4, 4, 100e-6, 0.1, (1.5, 1.5))

    def image(fluence, default_f):
        beam = BeamSpectrum(samples=((1.0, 1.0),), fluence=fluence)
        crystal = make_crystal(default_f=default_f)  # empty table
        out = PixelBuffer.zeros(panel.dims)
        nanobragg_spots(SpotsContext(crystal, panel, beam, oversample=2), out)
        return out.data.astype(np.float64)

    base = image(1e20, 50.0)
    # power-of-two factors are exactly representable through the 32-bit
    # kernel store, so the 1e-12 bound is meaningful; a non-binary factor
    # is additionally held to the float32 rounding bound
    rel = np.abs(image(2e20, 50.0) - 2.0 * base) / np.abs(2.0 * base)
    assert rel.max() < 1e-12
    rel = np.abs(image(1e20, 100.0) - 4.0 * base) / np.abs(4.0 * base)
    assert rel.max() < 1e-12
    rel = np.abs(image(7e20, 50.0) - 7.0 * base) / np.abs(7.0 * base)
    assert rel.max() < 1e-7

    # doubling the distance divides the on-axis solid angle by exactly 4
    near = solid_angle(panel, (0.0, 0.0, 0.1))
    far = solid_angle(panel, (0.0, 0.0, 0.2))
    assert near / far == 4.0
    announce("physics invariants (peak, scaling laws, null, inverse-square)", t0)


def test_strong_scaling_fig2_analog():
    """256 images, 128x128, ranks {1,2,4}: efficiency >= 0.7 at 4 on >= 4 cores."""
    cores = os.cpu_count() or 1
    if cores < 4:
        pytest.skip(
            f"criterion applies on a >= 4-core host; this host has {cores} cores "
            f"(hardware parallelism ceiling makes 4-worker efficiency unmeasurable)")
    t0 = time.perf_counter()
    config = bench_config(oversample=2)
    rows = strong_scaling(config, 256, [1, 2, 4])
    walls = [row.wall_s for row in rows]
    assert walls[1] < walls[0] and walls[2] < walls[1], f"not strictly decreasing: {walls}"
    assert rows[2].efficiency >= 0.7, f"efficiency at 4 workers = {rows[2].efficiency:.3f}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0, f"runtime {elapsed:.0f} s exceeds 10 min budget"
    announce(f"strong scaling (eff@4 = {rows[2].efficiency:.2f})", t0)


def test_multi_tenancy_and_io_hiding():
    """devices=1, 20 ms I/O latency: 2 ranks/device beat 1; I/O always costs."""
    t0 = time.perf_counter()
    config = bench_config(slow=64, fast=64)
    walls_io = {}
    walls_noio = {}
    for rpd in (1, 2):
        plan_io = CampaignPlan(n_images=64, devices=1, ranks_per_device=rpd,
                               io_enabled=True, io_latency_ms=20.0, seed=0)
        walls_io[rpd] = run_campaign(plan_io, config).total_wall_s
        plan_dry = CampaignPlan(n_images=64, devices=1, ranks_per_device=rpd,
                                io_enabled=False, seed=0)
        walls_noio[rpd] = run_campaign(plan_dry, config).total_wall_s
    throughput = {rpd: 64.0 / walls_io[rpd] for rpd in (1, 2)}
    assert throughput[2] > throughput[1], (
        f"sharing did not help: {throughput[2]:.1f} <= {throughput[1]:.1f} images/s")
    for rpd in (1, 2):
        assert walls_io[rpd] > walls_noio[rpd], (
            f"I/O run not slower at ranks_per_device={rpd}")
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"runtime {elapsed:.0f} s exceeds 5 min budget"
    announce(
        f"multi-tenancy / I/O hiding (throughput {throughput[1]:.1f} -> "
        f"{throughput[2]:.1f} images/s)", t0)


def test_pattern_layer_suite():
    """Exact for-counts; reduce/scan bitwise worker-count independence at 1e5."""
    t0 = time.perf_counter()
    import threading

    lock = threading.Lock()
    count = [0]

    def body(_):
        with lock:
            count[0] += 1

    with Executor.workers(8) as ex:
        parallel_for(ex, "count", RangePolicy(0, 100_000, grain=997), body)
    assert count[0] == 100_000

    rng = np.random.default_rng(2024)
    values = rng.uniform(-1.0, 1.0, 100_000)
    with Executor.serial() as ex:
        serial_sum = parallel_reduce(ex, "sum", RangePolicy(0, len(values)),
                                     lambda i: values[i], lambda a, b: a + b, 0.0)
        serial_scan = parallel_scan(ex, "scan", RangePolicy(0, 10_000),
                                    lambda i: values[i], lambda a, b: a + b)
    for n in (1, 2, 4, 8):
        with Executor.workers(n) as ex:
            got = parallel_reduce(ex, "sum", RangePolicy(0, len(values)),
                                  lambda i: values[i], lambda a, b: a + b, 0.0)
            assert got == serial_sum, f"reduce differs at workers({n})"
            got_scan = parallel_scan(ex, "scan", RangePolicy(0, 10_000),
                                     lambda i: values[i], lambda a, b: a + b)
            assert got_scan == serial_scan, f"scan differs at workers({n})"
    announce("pattern layer (invocation counts, reduce/scan determinism)", t0)


def test_add_array_upcast_fixture():
    """float32(0.1) accumulates to exactly 0.10000000149011612."""
    t0 = time.perf_counter()
    lhs = PixelBuffer((1, 1), "f64", [0.0])
    rhs = PixelBuffer((1, 1), "f32", [0.1])
    add_array(lhs, rhs)
    assert lhs.data[0] == 0.10000000149011612
    announce("add_array upcast semantics (0.1f fixture)", t0)


def test_io_round_trips_and_rejection(tmp_path):
    """Write/read identity, CRC validation, >= 10 located rejections per loader."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    buf = PixelBuffer((32, 32), "f64", rng.uniform(0.0, 1e-3, 1024))
    bin_path = write_image(buf, tmp_path / "img")
    data, sidecar = read_image(bin_path)
    assert np.array_equal(data.reshape(-1), buf.data.astype(np.float32))

    import zlib
    assert sidecar["crc32"] == zlib.crc32(bin_path.read_bytes())
    corrupted = bytearray(bin_path.read_bytes())
    corrupted[100] ^= 0x40
    bin_path.write_bytes(bytes(corrupted))
    with pytest.raises(ValueError, match="CRC"):
        read_image(bin_path)

    assert len(HKL_BAD) >= 10 and len(BACKGROUND_BAD) >= 10 and len(CONFIG_BAD) >= 10
    for name, text, fragment in HKL_BAD:
        p = tmp_path / f"hkl_{name}"
        p.write_text(text)
        with pytest.raises(ParseError) as info:
            load_hkl(p)
        assert fragment in str(info.value), name
    for name, text, fragment in BACKGROUND_BAD:
        p = tmp_path / f"bg_{name}"
        p.write_text(text)
        with pytest.raises(ParseError) as info:
            load_background(p)
        assert fragment in str(info.value), name
    for name, text, fragment in CONFIG_BAD:
        p = tmp_path / f"cfg_{name}.toml"
        p.write_text(text)
        with pytest.raises(ConfigError) as info:
            load_config(p)
        assert fragment in str(info.value), name
    announce(
        f"I/O round-trips + rejection corpus "
        f"({len(HKL_BAD)}+{len(BACKGROUND_BAD)}+{len(CONFIG_BAD)} bad fixtures)", t0)
