/**
 * Scripting bindings for the xtrace simulator.
 *
 * The native library stays the single source of truth: these bindings spawn
 * the `xtrace` CLI, consume its documented external surfaces (the raw
 * `.bin` + JSON-sidecar image format and the campaign report JSON), and
 * hand the values to scripts unchanged.  No physics is re-implemented here.
 *
 * Calls are blocking; concurrent callers are serialized by the synchronous
 * subprocess underneath.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export const VERSION = "0.1.0";

/** Sidecar metadata written next to every image. */
export interface ImageSidecar {
  dims: [number, number];
  dtype: string;
  byte_order: string;
  downcast: string;
  pixel_size_m: number | null;
  distance_m: number | null;
  wavelengths_angstrom: number[] | null;
  seed: number | null;
  image_index: number | null;
  crc32: number;
}

export interface SimulatedImage {
  /** Row-major pixel values, slow index outermost (exact upcast of the payload). */
  data: Float64Array;
  metadata: ImageSidecar;
}

/** Field names mirror the native campaign report. */
export interface CampaignReport {
  n_images: number;
  ranks: number;
  devices: number;
  ranks_per_device: number;
  io_enabled: boolean;
  io_latency_ms: number;
  executor_name: string;
  total_wall_s: number;
  per_rank_counts: number[];
  kernel_stats: Record<string, { total_ms: number; count: number; mean_ms: number }>;
  throughput_ips: number;
  flagged_images: Array<[number, number]>;
  config_echo: unknown;
}

export interface CampaignOptions {
  nImages: number;
  ranks?: number;
  devices?: number;
  ranksPerDevice?: number;
  /** Simulated per-image write latency; omit to disable the I/O phase. */
  ioLatencyMs?: number;
  /** Keep the native report JSON at this path instead of a temp file. */
  reportPath?: string;
}

function cliCommand(): string[] {
  const override = process.env.XTRACE_CLI;
  return override ? override.split(" "): ["xtrace"];
}

function runCli(args: string[]): void {
  const [cmd, ...prefix] = cliCommand();
  const proc = spawnSync(cmd, [...prefix, ...args], { encoding: "utf-8" });
  if (proc.error) {
    throw new Error(`failed to launch ${cmd}: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    // surface the native error text verbatim
    const detail = (proc.stderr || proc.stdout || "").trim();
    throw new Error(detail || `xtrace exited with code ${proc.status}`);
  }
}

/** A (config, worker count) pair bound to the native CLI. */
export class BoundSimulator {
  constructor(
    readonly configPath: string,
    readonly workers: number = 1,
  ) {}

  /**
   * Simulate one image by index; returns the pixel buffer (upcast to
   * float64, exactly) and the sidecar metadata.
   */
  simulateImage(imageIndex: number, workers?: number): SimulatedImage {
    const n = workers ?? this.workers;
    const scratch = mkdtempSync(join(tmpdir(), "xtrace-img-"));
    try {
      const args = [
        "simulate",
        "--config", this.configPath,
        "--images", "1",
        "--start-index", String(imageIndex),
        "--out", scratch,
      ];
      if (n > 1) {
        args.push("--executor", "workers", "--workers", String(n));
      }
      runCli(args);
      const stem = join(scratch, `img_${String(imageIndex).padStart(6, "0")}`);
      const payload = readFileSync(`${stem}.bin`);
      const metadata = JSON.parse(readFileSync(`${stem}.json`, "utf-8")) as ImageSidecar;
      const f32 = new Float32Array(
        payload.buffer, payload.byteOffset, payload.byteLength / 4);
      return { data: Float64Array.from(f32), metadata };
    } finally {
      rmSync(scratch, { recursive: true, force: true });
    }
  }

  /** Run a campaign and return the native report as a plain mapping. */
  runCampaign(options: CampaignOptions): CampaignReport {
    const scratch = options.reportPath
      ? null
      : mkdtempSync(join(tmpdir(), "xtrace-report-"));
    const reportPath = options.reportPath ?? join(scratch!, "report.json");
    try {
      const args = [
        "benchmark",
        "--config", this.configPath,
        "--images", String(options.nImages),
        "--report-json", reportPath,
      ];
      if (options.ranks !== undefined) args.push("--ranks", String(options.ranks));
      if (options.devices !== undefined) args.push("--devices", String(options.devices));
      if (options.ranksPerDevice !== undefined) {
        args.push("--ranks-per-device", String(options.ranksPerDevice));
      }
      if (options.ioLatencyMs !== undefined) {
        args.push("--io-latency-ms", String(options.ioLatencyMs));
      } else {
        args.push("--no-io");
      }
      runCli(args);
      return JSON.parse(readFileSync(reportPath, "utf-8")) as CampaignReport;
    } finally {
      if (scratch) rmSync(scratch, { recursive: true, force: true });
    }
  }
}

/** Simulate one image of a config (see BoundSimulator.simulateImage). */
export function simulateImage(
  configPath: string, imageIndex: number, workers = 1,
): SimulatedImage {
  return new BoundSimulator(configPath, workers).simulateImage(imageIndex);
}

/** Run a campaign for a config (see BoundSimulator.runCampaign). */
export function runCampaign(
  configPath: string, options: CampaignOptions,
): CampaignReport {
  return new BoundSimulator(configPath).runCampaign(options);
}
