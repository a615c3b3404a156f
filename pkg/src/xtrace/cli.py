"""Command-line interface: simulate / benchmark / inspect / report.

Exit codes (stable, asserted by the test matrix):
  0  success
  1  config error, bad CSV schema
  2  I/O error (unreadable/missing files), usage errors from argparse
  3  numerical fault in a kernel
  4  image CRC mismatch
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import zlib
from pathlib import Path

from .errors import CampaignIOError, ConfigError, NumericalFault, ParseError, XtraceError
from .execution import Executor, default_worker_count
from .io import load_config, read_image
from .kernels import PixelBuffer, image_histogram, image_stats
from .scheduler import (
    SCALING_CSV_HEADER,
    CampaignPlan,
    kernel_time_table,
    run_campaign,
    strong_scaling,
    write_kernel_csv,
    write_scaling_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_CRC = 4


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _build_executor(args) -> Executor:
    if args.executor == "serial":
        return Executor.serial()
    n = args.workers if args.workers is not None else default_worker_count()
    return Executor.workers(n)


def _print_report_summary(report):
    print(f"simulated {report.n_images} images in {report.total_wall_s:.3f} s "
          f"({report.throughput_ips:.2f} images/s) on {report.ranks} rank(s), "
          f"{report.devices} device slot(s)")
    if report.kernel_stats:
        means = " | ".join(
            f"{label} {stat.mean_ms:.2f} ms" for label, stat in report.kernel_stats.items())
        print(f"kernel means: {means}")
    if report.flagged_images:
        detail = ", ".join(f"image {idx} (pixel {pixel})"
                           for idx, pixel in report.flagged_images)
        print(f"flagged by numerical faults: {detail}")


def cmd_simulate(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, ParseError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    executor = _build_executor(args)
    plan = CampaignPlan(
        n_images=args.images if args.images is not None else config.n_images,
        ranks=1,
        io_enabled=not args.no_io,
        io_latency_ms=0.0,
        seed=args.seed if args.seed is not None else config.seed,
        first_image=args.start_index,
    )
    try:
        report = run_campaign(plan, config, executor,
                              out_dir=None if args.no_io else args.out)
    except CampaignIOError as exc:
        return _fail(EXIT_IO, str(exc))
    except NumericalFault as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    finally:
        executor.close()
    _print_report_summary(report)
    if not args.no_io:
        print(f"output: {args.out} ({report.n_images} x .bin + .json)")
    if args.report_json:
        Path(args.report_json).write_text(
            json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    if report.flagged_images:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_benchmark(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, ParseError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    n_images = args.images if args.images is not None else config.n_images
    io_enabled = (not args.no_io) and (
        args.out is not None or args.io_latency_ms is not None or config.io_enabled)
    io_latency = args.io_latency_ms if args.io_latency_ms is not None else config.io_latency_ms

    try:
        if args.workers_list:
            worker_counts = [int(w) for w in args.workers_list.split(",")]
            rows = strong_scaling(
                config, n_images, worker_counts, repeat=args.repeat,
                out_dir=args.out, io_enabled=io_enabled, io_latency_ms=io_latency)
            print(f"{'workers':>8} {'wall_s':>10} {'speedup':>9} {'efficiency':>11}")
            for row in rows:
                print(f"{row.workers:>8d} {row.wall_s:>10.3f} "
                      f"{row.speedup:>9.3f} {row.efficiency:>11.3f}")
            if args.csv:
                write_scaling_csv(rows, args.csv)
                print(f"scaling CSV written to {args.csv}")
            if args.report_json:
                payload = {"scaling": [vars(r) for r in rows]}
                Path(args.report_json).write_text(
                    json.dumps(payload, indent=1) + "\n", encoding="utf-8")
            return EXIT_OK

        overrides = {"n_images": n_images, "io_enabled": io_enabled,
                     "io_latency_ms": io_latency}
        if args.ranks is not None:
            overrides["ranks"] = args.ranks
        if args.devices is not None:
            overrides["devices"] = args.devices
            if args.ranks is None:
                overrides["ranks"] = None  # re-derive from the device split
        if args.ranks_per_device is not None:
            overrides["ranks_per_device"] = args.ranks_per_device
            if args.ranks is None:
                overrides["ranks"] = None
        plan = CampaignPlan.from_config(config, **overrides)
        best = None
        for _ in range(args.repeat):
            report = run_campaign(plan, config, Executor.serial(), out_dir=args.out)
            if best is None or report.total_wall_s < best.total_wall_s:
                best = report
        _print_report_summary(best)
        print(kernel_time_table(best))
        if args.csv:
            write_kernel_csv(best, args.csv)
            print(f"kernel-time CSV written to {args.csv}")
        if args.report_json:
            Path(args.report_json).write_text(
                json.dumps(best.to_dict(), indent=1) + "\n", encoding="utf-8")
        return EXIT_OK
    except CampaignIOError as exc:
        return _fail(EXIT_IO, str(exc))
    except NumericalFault as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))


def cmd_inspect(args) -> int:
    path = Path(args.image)
    try:
        data, sidecar = read_image(path, verify_crc=False)
    except FileNotFoundError as exc:
        return _fail(EXIT_IO, str(exc))
    except (ValueError, OSError) as exc:
        return _fail(EXIT_IO, f"{path}: {exc}")
    with open(path if path.suffix == ".bin" else path.with_suffix(".bin"), "rb") as fh:
        payload = fh.read()
    if zlib.crc32(payload) != sidecar["crc32"]:
        return _fail(EXIT_CRC, f"{path}: CRC mismatch "
                               f"(sidecar {sidecar['crc32']}, payload {zlib.crc32(payload)})")

    buf = PixelBuffer(tuple(sidecar["dims"]), "f32", data.reshape(-1))
    with Executor.workers() as executor:
        stats = image_stats(buf, executor)
        lo, hi = stats.min, stats.max
        if lo == hi:
            hi = lo + 1.0
        hist = image_histogram(buf, 16, (lo, hi), executor)
    print(f"{path}: {sidecar['dims'][0]} x {sidecar['dims'][1]} pixels, CRC ok")
    print(f"min {stats.min:.6g}  max {stats.max:.6g}  "
          f"mean {stats.mean:.6g}  total {stats.total:.6g}")
    width = (hi - lo) / 16
    for b in range(16):
        print(f"  [{lo + b * width:12.5g}, {lo + (b + 1) * width:12.5g}) "
              f"{hist.counts[b]:>8d}  cum {hist.cumulative[b]:>8d}")
    if hist.underflow or hist.overflow:
        print(f"  underflow {hist.underflow}  overflow {hist.overflow}")
    return EXIT_OK


def _render_csv_table(header, rows, fmt):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    if fmt == "md":
        out = ["| " + " | ".join(str(c).ljust(w) for c, w in zip(r, widths)) + " |"
               for r in [header] + rows]
        out.insert(1, "|" + "|".join("-" * (w + 2) for w in widths) + "|")
        return "\n".join(out)
    lines = ["  ".join(str(c).rjust(w) for c, w in zip(r, widths))
             for r in [header] + rows]
    return "\n".join(lines)


def cmd_report(args) -> int:
    path = Path(args.csv)
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    if not rows:
        return _fail(EXIT_CONFIG, f"{path}: empty CSV")
    header, body = rows[0], rows[1:]

    if header[: len(SCALING_CSV_HEADER)] == list(SCALING_CSV_HEADER):
        if not body:
            return _fail(EXIT_CONFIG, f"{path}: no data rows")
        print(_render_csv_table(header, body, args.format))
        return EXIT_OK

    if header and header[0] == "executor" and len(header) > 1:
        if not body:
            return _fail(EXIT_CONFIG, f"{path}: no data rows")
        # rebuild the kernel-time layout with a speed-up row per variant
        kernels = header[1:]
        table_rows = [[r[0]] + [f"{float(v):.2f} ms" if v else "-" for v in r[1:]]
                      for r in body]
        baseline = body[0]
        for variant in body[1:]:
            row = ["Speed-up" if len(body) == 2 else f"Speed-up ({variant[0]})"]
            for b, v in zip(baseline[1:], variant[1:]):
                if not b or not v:
                    row.append("-")
                    continue
                base = float(b)
                if base == 0.0:
                    return _fail(EXIT_CONFIG, f"{path}: zero-time baseline")
                row.append(f"{(base - float(v)) / base * 100.0:+.1f} %")
            table_rows.append(row)
        print(_render_csv_table([""] + kernels, table_rows, args.format))
        return EXIT_OK

    missing = [c for c in SCALING_CSV_HEADER if c not in header]
    return _fail(
        EXIT_CONFIG,
        f"{path}: unrecognized schema; missing column(s) {', '.join(missing) or 'executor'}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xtrace",
        description="X-ray tracing simulator: diffraction images, scaling and "
                    "device-sharing benchmarks, image inspection.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate images and write them (or --no-io)")
    sim.add_argument("--config", required=True, help="TOML simulation config")
    io_group = sim.add_mutually_exclusive_group(required=True)
    io_group.add_argument("--out", help="output directory for .bin/.json images")
    io_group.add_argument("--no-io", action="store_true",
                          help="skip writing images (timing-only run)")
    sim.add_argument("--images", type=int, help="number of images (default: config)")
    sim.add_argument("--executor", choices=("serial", "workers"), default="serial")
    sim.add_argument("--workers", type=int,
                     help="worker count for --executor workers "
                          "(default: XTRACE_WORKERS or CPU count)")
    sim.add_argument("--seed", type=int, help="base seed (default: config)")
    sim.add_argument("--start-index", type=int, default=0,
                     help="first image index to simulate (default 0)")
    sim.add_argument("--report-json", help="write the campaign report as JSON")
    sim.set_defaults(func=cmd_simulate)

    bench = sub.add_parser("benchmark",
                           help="strong-scaling sweep or device-sharing campaign")
    bench.add_argument("--config", required=True)
    bench.add_argument("--images", type=int, help="workload size (default: config)")
    bench.add_argument("--workers-list",
                       help="comma-separated rank counts for the scaling sweep")
    bench.add_argument("--ranks", type=int, help="rank count (tenancy mode)")
    bench.add_argument("--devices", type=int, help="device slots (tenancy mode)")
    bench.add_argument("--ranks-per-device", type=int)
    bench.add_argument("--io-latency-ms", type=float,
                       help="simulated per-image write latency (enables I/O phase)")
    bench.add_argument("--no-io", action="store_true", help="disable the I/O phase")
    bench.add_argument("--out", help="write real images here during the benchmark")
    bench.add_argument("--csv", help="CSV output (scaling or kernel-time schema)")
    bench.add_argument("--repeat", type=int, default=1,
                       help="repeat runs, report the best (default 1)")
    bench.add_argument("--report-json", help="write the campaign report as JSON")
    bench.set_defaults(func=cmd_benchmark)

    ins = sub.add_parser("inspect", help="stats + histogram of a written image")
    ins.add_argument("image", metavar="IMAGE.bin")
    ins.set_defaults(func=cmd_inspect)

    rep = sub.add_parser("report", help="render a scaling or kernel-time CSV")
    rep.add_argument("--csv", required=True)
    rep.add_argument("--format", choices=("table", "md"), default="table")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (XtraceError, ValueError) as exc:
        # bad option values (e.g. a malformed XTRACE_WORKERS) are config errors
        return _fail(EXIT_CONFIG, str(exc))


if __name__ == "__main__":
    sys.exit(main())
