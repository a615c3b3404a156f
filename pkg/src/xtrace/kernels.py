"""The three per-pixel kernels: Bragg spots, diffuse background, buffer add.

Each kernel is a pure function of (pixel index, read-only context) that owns
exactly one output slot, dispatched through the execution layer.  Bodies are
evaluated in vectorized blocks; the block grid is fixed by the image size
alone (never by worker count), so a given image is bitwise identical under
any executor.

Contexts carry plain values and read-only tables only.  Nothing in a kernel
body reaches back into a mutable owning object; everything it needs is
copied into the context up front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import NumericalFault, ShapeMismatchError
from .execution import Executor, RangePolicy, parallel_for_blocks, parallel_reduce, parallel_scan
from .model import BackgroundProfile, BeamSpectrum, CrystalModel, DetectorPanel

__all__ = [
    "R_E_SQR",
    "KERNEL_GRAIN",
    "PixelBuffer",
    "SpotsContext",
    "sincg",
    "lattice_transform",
    "nanobragg_spots",
    "add_background",
    "add_array",
    "image_stats",
    "image_histogram",
    "ImageStats",
    "HistogramResult",
]

# Classical electron radius squared, m^2.
R_E_SQR = 7.94079248e-30

# Pixel block size for kernel dispatch.  Fixed (not derived from worker
# count) so that block boundaries, and therefore every last bit of the
# output, are identical on every executor.
KERNEL_GRAIN = 4096

# Below this |sin x| the grating ratio switches to its analytic limit.
_SINC_LIMIT = 1e-12

_DTYPES = {"f32": np.float32, "f64": np.float64}


class PixelBuffer:
    """Flat row-major image buffer (slow index outermost) with fixed precision."""

    __slots__ = ("data", "dims", "precision")

    def __init__(self, dims: tuple[int, int], precision: str = "f32", data=None):
        if precision not in _DTYPES:
            raise ValueError("precision must be 'f32' or 'f64'")
        slow, fast = int(dims[0]), int(dims[1])
        if slow < 1 or fast < 1:
            raise ValueError("buffer dims must be positive")
        dtype = _DTYPES[precision]
        if data is None:
            data = np.zeros(slow * fast, dtype=dtype)
        else:
            data = np.asarray(data, dtype=dtype).reshape(-1)
            if data.size != slow * fast:
                raise ShapeMismatchError(
                    f"buffer length {data.size} != {slow}x{fast}"
                )
        self.data = data
        self.dims = (slow, fast)
        self.precision = precision

    @classmethod
    def zeros(cls, dims, precision="f32"):
        return cls(dims, precision)

    @property
    def n_pixels(self) -> int:
        return self.data.size

    def as_image(self) -> np.ndarray:
        """2-D (slow, fast) view of the flat data."""
        return self.data.reshape(self.dims)

    def copy(self) -> "PixelBuffer":
        return PixelBuffer(self.dims, self.precision, self.data.copy())

    def __repr__(self):
        return f"PixelBuffer({self.dims}, {self.precision})"


@dataclass(frozen=True)
class SpotsContext:
    """Read-only inputs of the spot kernel, flattened to plain values."""

    crystal: CrystalModel
    panel: DetectorPanel
    spectrum: BeamSpectrum
    oversample: int = 1
    r_e_sqr: float = R_E_SQR

    def __post_init__(self):
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")


def sincg(x: float, n: int) -> float:
    """Grating ratio sin(n x)/sin(x), with the analytic limit near sin(x) = 0."""
    sx = math.sin(x)
    if abs(sx) < _SINC_LIMIT:
        return n * math.cos(n * x) / math.cos(x)
    return math.sin(n * x) / sx


def lattice_transform(crystal: CrystalModel, h: float, k: float, l: float) -> float:
    """Finite-lattice interference amplitude at fractional Miller coordinates.

    Peaks at Na*Nb*Nc on integer (h, k, l); first null at 1/N off-peak.
    """
    na, nb, nc = crystal.n_cells
    return (
        sincg(math.pi * h, na) * sincg(math.pi * k, nb) * sincg(math.pi * l, nc)
    )


def _sincg_grid(t: np.ndarray, n: int) -> np.ndarray:
    """Vectorized sincg(pi * t, n)."""
    x = np.pi * t
    sx = np.sin(x)
    near = np.abs(sx) < _SINC_LIMIT
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sin(n * x) / np.where(near, 1.0, sx)
        limit = n * np.cos(n * x) / np.cos(x)
    return np.where(near, limit, ratio)


def _round_half_away_grid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0.0, np.floor(x + 0.5), np.ceil(x - 0.5))


class _PanelGeometry(NamedTuple):
    """Per-sub-pixel geometry shared by every image on the same panel."""

    s_out: np.ndarray       # (n_sub, n_pix, 3) unit scatter directions
    omega: np.ndarray       # (n_sub, n_pix) pixel solid angles, sr
    cos_two_theta: np.ndarray  # (n_sub, n_pix)
    sin_theta: np.ndarray   # (n_sub, n_pix); stol = sin_theta / wavelength


@lru_cache(maxsize=16)
def _panel_geometry(panel: DetectorPanel, beam_direction: tuple, oversample: int) -> _PanelGeometry:
    slow_idx, fast_idx = np.meshgrid(
        np.arange(panel.slow_pixels, dtype=float),
        np.arange(panel.fast_pixels, dtype=float),
        indexing="ij",
    )
    slow_idx = slow_idx.reshape(-1)
    fast_idx = fast_idx.reshape(-1)
    # Sub-samples sit at the centers of an oversample x oversample grid, so
    # oversample=1 samples the pixel center.
    offs = (np.arange(oversample, dtype=float) + 0.5) / oversample
    sub_s, sub_f = np.meshgrid(offs, offs, indexing="ij")
    sub_s = sub_s.reshape(-1, 1)
    sub_f = sub_f.reshape(-1, 1)

    beam = np.asarray(beam_direction, dtype=float)
    slow_axis = np.asarray(panel.slow_axis)
    fast_axis = np.asarray(panel.fast_axis)
    s_coord = ((slow_idx[None, :] + sub_s) - panel.beam_center[0]) * panel.pixel_size
    f_coord = ((fast_idx[None, :] + sub_f) - panel.beam_center[1]) * panel.pixel_size
    pos = (
        panel.distance * beam
        + s_coord[..., None] * slow_axis
        + f_coord[..., None] * fast_axis
    )  # (n_sub, n_pix, 3)

    r_sq = np.einsum("spx,spx->sp", pos, pos)
    r = np.sqrt(r_sq)
    s_out = pos / r[..., None]
    cos_obliquity = np.abs(s_out @ panel.normal())
    omega = (panel.pixel_size * panel.pixel_size / r_sq) * cos_obliquity
    cos_two_theta = np.clip(s_out @ beam, -1.0, 1.0)
    sin_theta = np.sqrt(0.5 * (1.0 - cos_two_theta))
    for arr in (s_out, omega, cos_two_theta, sin_theta):
        arr.setflags(write=False)
    return _PanelGeometry(s_out, omega, cos_two_theta, sin_theta)


def _omega_pol(geom: _PanelGeometry, polarization_on: bool) -> np.ndarray:
    if not polarization_on:
        return geom.omega
    c = geom.cos_two_theta
    return geom.omega * (0.5 * (1.0 + c * c))


def _check_dims(out: PixelBuffer, panel: DetectorPanel, precision: str):
    if out.dims != panel.dims:
        raise ShapeMismatchError(f"buffer dims {out.dims} != panel dims {panel.dims}")
    if out.precision != precision:
        raise ShapeMismatchError(f"kernel requires a {precision} buffer, got {out.precision}")


def _store_checked(out_slice: np.ndarray, values: np.ndarray, lo: int):
    # overflow surfaces as NumericalFault, not as a warning
    finite = np.isfinite(values)
    if not finite.all():
        raise NumericalFault(lo + int(np.argmin(finite)))
    out_slice[:] = values


def nanobragg_spots(ctx: SpotsContext, out: PixelBuffer, executor: Executor | None = None):
    """Simulate the Bragg spot image into a 32-bit buffer.

    Per pixel: classical-electron cross-section times fluence times the
    sub-pixel solid angle and polarization factor, times the mean squared
    structure-factor-weighted lattice amplitude over the sub-pixel grid,
    the mosaic domains and the weighted wavelength samples.  Solid angle
    and polarization vary per sub-pixel; the scattering angle is geometric,
    i.e. the central-wavelength angle shared by all spectrum samples.
    """
    _check_dims(out, ctx.panel, "f32")
    if executor is None:
        executor = Executor.serial()
    geom = _panel_geometry(ctx.panel, ctx.spectrum.beam_direction, ctx.oversample)
    beam = np.asarray(ctx.spectrum.beam_direction)
    rel = geom.s_out - beam  # q = rel / wavelength
    omega_pol = _omega_pol(geom, ctx.spectrum.polarization_on)

    bases = ctx.crystal.rotated_real_bases()  # (n_mos, 3, 3) rows a, b, c
    na, nb, nc = ctx.crystal.n_cells
    table = ctx.crystal.sf_table
    wavelengths = ctx.spectrum.wavelengths
    weights = ctx.spectrum.weights
    n_mos = len(ctx.crystal.mosaic)
    n_sub = ctx.oversample * ctx.oversample
    norm = float(weights.sum()) * n_mos * n_sub
    scale = ctx.r_e_sqr * ctx.spectrum.fluence / norm

    def body(lo, hi):
        rel_c = rel[:, lo:hi, :]
        op_c = omega_pol[:, lo:hi]
        acc = np.zeros(hi - lo)
        for m in range(n_mos):
            a_row, b_row, c_row = bases[m]
            sa = rel_c @ a_row  # (n_sub, chunk): h * wavelength
            sb = rel_c @ b_row
            sc = rel_c @ c_row
            for w in range(len(wavelengths)):
                inv_wl = 1.0 / wavelengths[w]
                h = sa * inv_wl
                k = sb * inv_wl
                l = sc * inv_wl
                f_latt = (
                    _sincg_grid(h, na) * _sincg_grid(k, nb) * _sincg_grid(l, nc)
                )
                f_cell = table.lookup_rounded(
                    _round_half_away_grid(h),
                    _round_half_away_grid(k),
                    _round_half_away_grid(l),
                )
                amp = f_cell * f_latt
                acc += weights[w] * np.sum(amp * amp * op_c, axis=0)
        with np.errstate(over="ignore"):
            values = (scale * acc).astype(np.float32)
        _store_checked(out.data[lo:hi], values, lo)

    policy = RangePolicy(0, out.n_pixels, KERNEL_GRAIN)
    parallel_for_blocks(executor, "nanobragg_spots", policy, body)


def add_background(profile: BackgroundProfile, panel: DetectorPanel,
                   spectrum: BeamSpectrum, thickness_factor: float,
                   out: PixelBuffer, executor: Executor | None = None):
    """Simulate diffuse (air/water) background into a 32-bit buffer.

    Per pixel: the interpolated background amplitude squared at that pixel's
    sin(theta)/lambda, averaged over the weighted wavelength samples, under
    the same cross-section, solid-angle and polarization factors as the spot
    kernel, scaled by ``thickness_factor``.  Evaluated at pixel centers.
    """
    _check_dims(out, panel, "f32")
    if executor is None:
        executor = Executor.serial()
    geom = _panel_geometry(panel, spectrum.beam_direction, 1)
    omega_pol = _omega_pol(geom, spectrum.polarization_on)[0]
    sin_theta = geom.sin_theta[0]
    stol_pts = profile.stol
    f_pts = profile.f_bg
    wavelengths = spectrum.wavelengths
    weights = spectrum.weights
    scale = R_E_SQR * spectrum.fluence * thickness_factor / float(weights.sum())

    def body(lo, hi):
        st = sin_theta[lo:hi]
        acc = np.zeros(hi - lo)
        for w in range(len(wavelengths)):
            f_bg = np.interp(st / wavelengths[w], stol_pts, f_pts)
            acc += weights[w] * (f_bg * f_bg)
        with np.errstate(over="ignore"):
            values = (scale * acc * omega_pol[lo:hi]).astype(np.float32)
        _store_checked(out.data[lo:hi], values, lo)

    policy = RangePolicy(0, out.n_pixels, KERNEL_GRAIN)
    parallel_for_blocks(executor, "add_background", policy, body)


def add_array(lhs: PixelBuffer, rhs: PixelBuffer, executor: Executor | None = None):
    """Accumulate a 32-bit kernel result into the 64-bit accumulator.

    lhs[j] += float64(rhs[j]); the upcast is exact, the add is 64-bit.
    """
    if lhs.dims != rhs.dims:
        raise ShapeMismatchError(f"dims {lhs.dims} != {rhs.dims}")
    if lhs.precision != "f64" or rhs.precision != "f32":
        raise ShapeMismatchError("add_array expects f64 lhs and f32 rhs")
    if executor is None:
        executor = Executor.serial()

    def body(lo, hi):
        lhs.data[lo:hi] += rhs.data[lo:hi]

    policy = RangePolicy(0, lhs.n_pixels, KERNEL_GRAIN)
    parallel_for_blocks(executor, "add_array", policy, body)


class ImageStats(NamedTuple):
    min: float
    max: float
    mean: float
    total: float


# Fixed block length for the stats/histogram reductions; range-determined
# grouping keeps float totals independent of worker count.
_STATS_BLOCK = 8192


def image_stats(buf: PixelBuffer, executor: Executor | None = None) -> ImageStats:
    """Exact min/max plus mean/total via the fixed-tree reduce pattern."""
    n = buf.n_pixels
    if n == 0:
        raise ValueError("image_stats requires a non-empty buffer")
    if executor is None:
        executor = Executor.serial()
    data = buf.data
    n_blocks = -(-n // _STATS_BLOCK)

    def block_summary(bi):
        chunk = data[bi * _STATS_BLOCK:(bi + 1) * _STATS_BLOCK]
        return (
            float(chunk.min()),
            float(chunk.max()),
            float(np.sum(chunk, dtype=np.float64)),
        )

    def combine(x, y):
        return (min(x[0], y[0]), max(x[1], y[1]), x[2] + y[2])

    mn, mx, total = parallel_reduce(
        executor, "image_stats", RangePolicy(0, n_blocks),
        block_summary, combine, (math.inf, -math.inf, 0.0),
    )
    return ImageStats(mn, mx, total / n, total)


@dataclass(frozen=True)
class HistogramResult:
    counts: np.ndarray      # int64, length n_bins
    cumulative: np.ndarray  # int64, inclusive prefix sums
    underflow: int
    overflow: int

    @property
    def n_binned(self) -> int:
        return int(self.counts.sum())


def image_histogram(buf: PixelBuffer, n_bins: int, value_range: tuple[float, float],
                    executor: Executor | None = None) -> HistogramResult:
    """Histogram of pixel values plus inclusive cumulative counts.

    Bin b covers [lo + b*w, lo + (b+1)*w) with the final bin closed above;
    values outside [lo, hi] land in the underflow/overflow counters.  The
    cumulative counts come from the scan pattern.
    """
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise ValueError("histogram range must satisfy lo < hi")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if buf.n_pixels == 0:
        raise ValueError("image_histogram requires a non-empty buffer")
    if executor is None:
        executor = Executor.serial()
    data = buf.data
    width = (hi - lo) / n_bins
    n_blocks = -(-buf.n_pixels // _STATS_BLOCK)

    def block_counts(bi):
        chunk = np.asarray(data[bi * _STATS_BLOCK:(bi + 1) * _STATS_BLOCK], dtype=float)
        under = chunk < lo
        over = chunk > hi
        idx = np.floor((chunk - lo) / width).astype(np.int64)
        idx = np.clip(idx, 0, n_bins - 1)  # closes the top bin at hi
        counts = np.bincount(idx[~(under | over)], minlength=n_bins)
        return np.concatenate((
            [int(under.sum())], counts.astype(np.int64), [int(over.sum())]
        ))

    totals = parallel_reduce(
        executor, "image_histogram", RangePolicy(0, n_blocks),
        block_counts, lambda a, b: a + b, np.zeros(n_bins + 2, dtype=np.int64),
    )
    counts = totals[1:-1]
    cumulative = np.array(
        parallel_scan(
            executor, "image_histogram_cdf", RangePolicy(0, n_bins),
            lambda b: int(counts[b]), lambda a, b: a + b,
        ),
        dtype=np.int64,
    )
    return HistogramResult(counts, cumulative, int(totals[0]), int(totals[-1]))
