"""Campaign scheduler and benchmark harness.

Distributes batches of images across ranks, models device sharing with a
counting gate (at most ``devices`` ranks compute at once, I/O proceeds
outside the gate), and measures strong scaling and multi-tenancy throughput
at desk scale.  Ranks are local worker processes (no MPI); per-image
content is a pure function of (config, seed + image index), so images are
bitwise independent of ranks, devices, I/O settings and executor.
"""

from __future__ import annotations

import csv
import multiprocessing
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CampaignIOError, NumericalFault, PatternFault, XtraceError
from .execution import Executor, kernel_timer
from .io import SimulationConfig, write_image
from .kernels import PixelBuffer, SpotsContext, add_array, add_background, nanobragg_spots

__all__ = [
    "CampaignPlan",
    "CampaignReport",
    "KernelStat",
    "ScalingRow",
    "plan_batches",
    "simulate_image",
    "run_campaign",
    "strong_scaling",
    "write_scaling_csv",
    "write_kernel_csv",
    "SCALING_CSV_HEADER",
    "kernel_time_table",
]

SCALING_CSV_HEADER = ("workers", "wall_s", "speedup", "efficiency")


@dataclass(frozen=True)
class CampaignPlan:
    """How many images, spread over how many ranks sharing how many devices.

    ``first_image`` offsets the simulated index window to [first_image,
    first_image + n_images); seeds and file names follow the global index.
    """

    n_images: int
    ranks: int | None = None  # default: devices * ranks_per_device
    devices: int = 1
    ranks_per_device: int = 1
    io_enabled: bool = False
    io_latency_ms: float = 0.0
    seed: int = 0
    first_image: int = 0

    def __post_init__(self):
        if self.n_images < 1:
            raise ValueError("n_images must be >= 1")
        if self.devices < 1 or self.ranks_per_device < 1:
            raise ValueError("devices and ranks_per_device must be >= 1")
        if self.ranks is None:
            object.__setattr__(self, "ranks", self.devices * self.ranks_per_device)
        if self.ranks < 1:
            raise ValueError("ranks must be >= 1")
        if self.io_latency_ms < 0:
            raise ValueError("io_latency_ms must be >= 0")
        if self.first_image < 0:
            raise ValueError("first_image must be >= 0")

    @classmethod
    def from_config(cls, config: SimulationConfig, **overrides) -> "CampaignPlan":
        fields = dict(
            n_images=config.n_images,
            ranks=config.ranks,
            devices=config.devices,
            ranks_per_device=config.ranks_per_device,
            io_enabled=config.io_enabled,
            io_latency_ms=config.io_latency_ms,
            seed=config.seed,
        )
        fields.update(overrides)
        return cls(**fields)


class KernelStat(dict):
    """Aggregate timing for one kernel label: total/count/mean milliseconds."""

    def __init__(self, total_ms: float, count: int):
        super().__init__(total_ms=total_ms, count=count,
                         mean_ms=total_ms / count if count else 0.0)

    @property
    def mean_ms(self) -> float:
        return self["mean_ms"]


@dataclass
class CampaignReport:
    n_images: int
    ranks: int
    devices: int
    ranks_per_device: int
    io_enabled: bool
    io_latency_ms: float
    executor_name: str
    total_wall_s: float
    per_rank_counts: list[int]
    kernel_stats: dict[str, KernelStat]
    throughput_ips: float
    config_echo: dict
    flagged_images: list[tuple[int, int]] = field(default_factory=list)
    images: dict[int, np.ndarray] | None = None  # only when collect=True

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "ranks": self.ranks,
            "devices": self.devices,
            "ranks_per_device": self.ranks_per_device,
            "io_enabled": self.io_enabled,
            "io_latency_ms": self.io_latency_ms,
            "executor_name": self.executor_name,
            "total_wall_s": self.total_wall_s,
            "per_rank_counts": list(self.per_rank_counts),
            "kernel_stats": {k: dict(v) for k, v in self.kernel_stats.items()},
            "throughput_ips": self.throughput_ips,
            "flagged_images": [list(t) for t in self.flagged_images],
            "config_echo": self.config_echo,
        }


def plan_batches(n_images: int, ranks: int) -> list[tuple[int, tuple[int, int]]]:
    """Static contiguous partition of [0, n_images) over ranks.

    Sizes differ by at most one; the first ``n_images % ranks`` ranks take
    the extra image.  Deterministic, covers every index exactly once.
    """
    if ranks < 1:
        raise ValueError("ranks must be >= 1")
    base, extra = divmod(n_images, ranks)
    batches = []
    start = 0
    for rank in range(ranks):
        size = base + (1 if rank < extra else 0)
        batches.append((rank, (start, start + size)))
        start += size
    return batches


def simulate_image(config: SimulationConfig, image_seed: int,
                   executor: Executor | None = None) -> PixelBuffer:
    """One image through the full pipeline, returning the 64-bit accumulator.

    Bragg spots and (when configured) background each render into their own
    32-bit staging buffer, then fold into the accumulator.  Kernel times are
    recorded in the executor's log.
    """
    if executor is None:
        executor = Executor.serial()
    crystal = config.crystal_for_seed(image_seed)
    ctx = SpotsContext(crystal, config.panel, config.spectrum, config.oversample)
    dims = config.panel.dims
    spots = PixelBuffer.zeros(dims, "f32")
    kernel_timer(executor, "nanobragg_spots",
                 lambda: nanobragg_spots(ctx, spots, executor=executor))
    accumulator = PixelBuffer.zeros(dims, "f64")
    kernel_timer(executor, "add_array",
                 lambda: add_array(accumulator, spots, executor=executor))
    if config.background is not None:
        background = PixelBuffer.zeros(dims, "f32")
        kernel_timer(
            executor, "add_background",
            lambda: add_background(config.background, config.panel, config.spectrum,
                                   config.thickness_factor, background, executor=executor))
        kernel_timer(executor, "add_array",
                     lambda: add_array(accumulator, background, executor=executor))
    return accumulator


def image_file_stem(out_dir, index: int) -> Path:
    return Path(out_dir) / f"img_{index:06d}"


def _rank_task(rank: int, span: tuple[int, int], config: SimulationConfig,
               plan: CampaignPlan, out_dir, collect: bool,
               exec_kind: str, exec_n: int, gate, abort, queue=None) -> dict:
    """One rank's work loop; runs inline (single rank) or in a worker process.

    Compute happens inside the device gate, I/O outside it.  Returns (and,
    when in a process, queues) the rank's timing log, flagged images and
    collected buffers.
    """
    executor = Executor(exec_kind, exec_n, f"rank{rank}")
    flagged: list[tuple[int, int]] = []
    images: dict[int, np.ndarray] = {}
    io_failure = None
    error = None
    try:
        for index in range(*span):
            if abort.is_set():
                break
            image_seed = plan.seed + index
            try:
                with gate:
                    accumulator = simulate_image(config, image_seed, executor)
            except (NumericalFault, PatternFault) as exc:
                flagged.append((index, getattr(exc, "pixel", getattr(exc, "index", -1))))
                continue
            if plan.io_enabled:
                if out_dir is not None:
                    try:
                        kernel_timer(
                            executor, "write_image",
                            lambda: write_image(
                                accumulator, image_file_stem(out_dir, index),
                                panel=config.panel, spectrum=config.spectrum,
                                seed=image_seed, image_index=index))
                    except OSError as exc:
                        io_failure = (index, repr(exc))
                        abort.set()
                        break
                else:
                    time.sleep(plan.io_latency_ms / 1e3)
            if collect:
                images[index] = accumulator.data.copy()
    except Exception as exc:  # noqa: BLE001 - a rank must always report back
        error = repr(exc)
        abort.set()
    finally:
        executor.close()
    result = {
        "rank": rank,
        "timing": list(executor.timing_log),
        "flagged": flagged,
        "images": images,
        "io_failure": io_failure,
        "error": error,
    }
    if queue is not None:
        queue.put(result)
    return result


def _campaign_context():
    methods = multiprocessing.get_all_start_methods()
    return multiprocessing.get_context("fork" if "fork" in methods else None)


def run_campaign(plan: CampaignPlan, config: SimulationConfig,
                 executor: Executor | None = None, out_dir=None,
                 collect: bool = False) -> CampaignReport:
    """Simulate every planned image and return the campaign report.

    One worker per rank; a counting gate of capacity ``plan.devices``
    serializes the compute phase (ranks sharing a device), while I/O --
    a real write when ``out_dir`` is given, otherwise a simulated
    ``io_latency_ms`` sleep -- happens outside the gate so other ranks can
    compute meanwhile.  A numerical fault flags the image and the campaign
    continues; an I/O failure aborts the whole campaign.
    """
    if executor is None:
        executor = Executor.serial()
    if plan.io_enabled and out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    batches = [
        (rank, (lo + plan.first_image, hi + plan.first_image))
        for rank, (lo, hi) in plan_batches(plan.n_images, plan.ranks)
    ]

    t0 = time.perf_counter()
    if len(batches) == 1:
        results = [_rank_task(
            batches[0][0], batches[0][1], config, plan, out_dir, collect,
            executor.kind, executor.n, threading.BoundedSemaphore(plan.devices),
            threading.Event())]
    else:
        ctx = _campaign_context()
        gate = ctx.BoundedSemaphore(plan.devices)
        abort = ctx.Event()
        queue = ctx.SimpleQueue()
        procs = [
            ctx.Process(
                target=_rank_task,
                args=(rank, span, config, plan, out_dir, collect,
                      executor.kind, executor.n, gate, abort, queue),
                name=f"rank{rank}")
            for rank, span in batches
        ]
        for p in procs:
            p.start()
        # drain results before joining so a rank blocked on a large queue
        # payload cannot deadlock against the join
        results = [queue.get() for _ in procs]
        for p in procs:
            p.join()
    total_wall_s = time.perf_counter() - t0
    results.sort(key=lambda r: r["rank"])

    for result in results:
        if result["error"] is not None:
            raise XtraceError(f"rank {result['rank']} failed: {result['error']}")
    io_failures = [r["io_failure"] for r in results if r["io_failure"] is not None]
    if io_failures:
        index, cause = min(io_failures, key=lambda f: f[0])
        raise CampaignIOError(index, cause)

    flagged = sorted(
        (tuple(item) for result in results for item in result["flagged"]))
    images: dict[int, np.ndarray] = {}
    for result in results:
        images.update(result["images"])

    stats: dict[str, KernelStat] = {}
    totals: dict[str, list] = {}
    for result in results:
        for label, ms in result["timing"]:
            entry = totals.setdefault(label, [0.0, 0])
            entry[0] += ms
            entry[1] += 1
    for label, (total_ms, count) in totals.items():
        stats[label] = KernelStat(total_ms, count)

    return CampaignReport(
        n_images=plan.n_images,
        ranks=plan.ranks,
        devices=plan.devices,
        ranks_per_device=plan.ranks_per_device,
        io_enabled=plan.io_enabled,
        io_latency_ms=plan.io_latency_ms,
        executor_name=executor.name,
        total_wall_s=total_wall_s,
        per_rank_counts=[hi - lo for _, (lo, hi) in batches],
        kernel_stats=stats,
        throughput_ips=plan.n_images / total_wall_s if total_wall_s > 0 else float("inf"),
        config_echo={"config": config.echo, "plan": {
            "n_images": plan.n_images, "ranks": plan.ranks, "devices": plan.devices,
            "ranks_per_device": plan.ranks_per_device, "io_enabled": plan.io_enabled,
            "io_latency_ms": plan.io_latency_ms, "seed": plan.seed,
        }},
        flagged_images=flagged,
        images=images if collect else None,
    )


@dataclass(frozen=True)
class ScalingRow:
    workers: int
    wall_s: float
    speedup: float
    efficiency: float


def strong_scaling(config: SimulationConfig, n_images: int, worker_counts,
                   repeat: int = 1, out_dir=None, io_enabled: bool | None = None,
                   io_latency_ms: float | None = None) -> list[ScalingRow]:
    """Run the identical workload once per worker count; best of ``repeat``.

    Workers map to campaign ranks with one device each (no sharing), the
    strong-scaling analog of adding nodes.  Speedup is measured against the
    first (smallest) worker count.
    """
    worker_counts = list(worker_counts)
    if not worker_counts:
        raise ValueError("worker_counts must be non-empty")
    if any(b <= a for a, b in zip(worker_counts, worker_counts[1:])):
        raise ValueError("worker_counts must be ascending")
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    walls = []
    for w in worker_counts:
        plan = CampaignPlan(
            n_images=n_images, ranks=w, devices=w, ranks_per_device=1,
            io_enabled=config.io_enabled if io_enabled is None else io_enabled,
            io_latency_ms=config.io_latency_ms if io_latency_ms is None else io_latency_ms,
            seed=config.seed,
        )
        best = min(
            run_campaign(plan, config, Executor.serial(), out_dir=out_dir).total_wall_s
            for _ in range(repeat)
        )
        walls.append(best)
    w0, t0 = worker_counts[0], walls[0]
    rows = []
    for w, t in zip(worker_counts, walls):
        speedup = t0 / t
        rows.append(ScalingRow(w, t, speedup, speedup / (w / w0)))
    return rows


def write_scaling_csv(rows, path):
    """CSV per the scaling schema: workers,wall_s,speedup,efficiency."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCALING_CSV_HEADER)
        for row in rows:
            writer.writerow([row.workers, f"{row.wall_s:.6f}",
                             f"{row.speedup:.6f}", f"{row.efficiency:.6f}"])


def write_kernel_csv(reports, path):
    """Kernel-time CSV: header ``executor,<kernel labels>``, mean ms per cell."""
    if isinstance(reports, CampaignReport):
        reports = [reports]
    kernels: list[str] = []
    for report in reports:
        for label in report.kernel_stats:
            if label not in kernels:
                kernels.append(label)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["executor"] + kernels)
        for report in reports:
            row = [report.executor_name]
            for label in kernels:
                stat = report.kernel_stats.get(label)
                row.append(f"{stat.mean_ms:.6f}" if stat else "")
            writer.writerow(row)


def kernel_time_table(reports, fmt: str = "table") -> str:
    """Mean per-kernel times, one row per executor, plus speed-up rows.

    Speed-up is the percentage run-time reduction of an executor against the
    baseline (first) report: (baseline - value) / baseline.  Requires at
    least one timing per kernel in every report.
    """
    if isinstance(reports, CampaignReport):
        reports = [reports]
    if not reports:
        raise ValueError("kernel_time_table needs at least one report")
    kernels: list[str] = []
    for report in reports:
        for label in report.kernel_stats:
            if label not in kernels:
                kernels.append(label)
    if not kernels:
        raise ValueError("no kernel timings recorded")
    baseline = reports[0]
    for label in kernels:
        if label not in baseline.kernel_stats:
            raise ValueError(f"baseline executor has no timing for kernel {label!r}")

    header = [""] + kernels
    body = []
    for report in reports:
        row = [report.executor_name]
        for label in kernels:
            stat = report.kernel_stats.get(label)
            row.append(f"{stat.mean_ms:.2f} ms" if stat else "-")
        body.append(row)
    for report in reports[1:]:
        row = ["Speed-up" if len(reports) == 2 else f"Speed-up ({report.executor_name})"]
        for label in kernels:
            base = baseline.kernel_stats[label].mean_ms
            if base == 0.0:
                raise ValueError(f"zero-time baseline for kernel {label!r}")
            stat = report.kernel_stats.get(label)
            if stat is None:
                row.append("-")
            else:
                row.append(f"{(base - stat.mean_ms) / base * 100.0:+.1f} %")
        body.append(row)

    rows = [header] + body
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    if fmt == "md":
        lines = ["| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |"
                 for r in rows]
        lines.insert(1, "|" + "|".join("-" * (w + 2) for w in widths) + "|")
        return "\n".join(lines)
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)
