"""Domain model for the diffraction simulator.

Crystal, detector and beam types plus the pure geometric/physical helpers
that the pixel kernels are built from.  Everything here is immutable after
construction and safe to share between any number of concurrent workers.

Unit conventions: lengths in the crystal/reciprocal space are Angstrom,
detector dimensions are meters, config files use degrees, everything
internal uses radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InvalidCellError, OutOfBoundsError

__all__ = [
    "UnitCell",
    "Orientation",
    "MosaicDomainSet",
    "StructureFactorTable",
    "CrystalModel",
    "DetectorPanel",
    "BeamSpectrum",
    "BackgroundProfile",
    "real_basis",
    "reciprocal_basis",
    "generate_mosaic_rotations",
    "pixel_lab_position",
    "fractional_miller",
    "solid_angle",
    "polarization_factor",
    "lookup_f",
    "round_half_away",
    "interp_background_f",
]

_ORTHO_TOL = 1e-10


def _as_unit(v, what: str, tol: float = 1e-12):
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > tol:
        raise GeometryError(f"{what} must be a unit vector, |v| = {n!r}")
    return v


@dataclass(frozen=True)
class UnitCell:
    """Triclinic unit cell: edge lengths in Angstrom, angles in degrees."""

    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            if not getattr(self, name) > 0:
                raise InvalidCellError(f"cell edge {name} must be > 0")
        for name in ("alpha", "beta", "gamma"):
            ang = getattr(self, name)
            if not 0.0 < ang < 180.0:
                raise InvalidCellError(f"cell angle {name} must be in (0, 180) degrees")
        if self._angle_factor() <= 0.0:
            raise InvalidCellError(
                "cell angles do not form a valid cell (metric determinant <= 0)"
            )

    def _angle_factor(self) -> float:
        # 1 - cos^2(a) - cos^2(b) - cos^2(g) + 2 cos(a) cos(b) cos(g);
        # positive iff the metric tensor has positive determinant.
        ca = math.cos(math.radians(self.alpha))
        cb = math.cos(math.radians(self.beta))
        cg = math.cos(math.radians(self.gamma))
        return 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg

    def volume(self) -> float:
        """Cell volume in cubic Angstrom."""
        return self.a * self.b * self.c * math.sqrt(self._angle_factor())


def real_basis(cell: UnitCell) -> np.ndarray:
    """Real-space basis vectors as rows (a, b, c), Angstrom, lab frame.

    Convention: a lies along lab x, b in the x-y plane (the standard
    crystallographic/PDB choice).
    """
    ca = math.cos(math.radians(cell.alpha))
    cb = math.cos(math.radians(cell.beta))
    cg = math.cos(math.radians(cell.gamma))
    sg = math.sin(math.radians(cell.gamma))
    factor = cell._angle_factor()
    if factor <= 0.0 or sg == 0.0:
        raise InvalidCellError("degenerate cell: metric determinant <= 0")
    a_vec = (cell.a, 0.0, 0.0)
    b_vec = (cell.b * cg, cell.b * sg, 0.0)
    c_vec = (
        cell.c * cb,
        cell.c * (ca - cb * cg) / sg,
        cell.c * math.sqrt(factor) / sg,
    )
    return np.array([a_vec, b_vec, c_vec], dtype=float)


def reciprocal_basis(cell: UnitCell) -> np.ndarray:
    """Reciprocal basis vectors as rows (a*, b*, c*), inverse Angstrom.

    Crystallographic convention without the 2*pi factor: a_i . a*_j = delta_ij.
    """
    real = real_basis(cell)
    a, b, c = real
    vol = float(np.dot(a, np.cross(b, c)))
    if vol <= 0.0:
        raise InvalidCellError("degenerate cell: non-positive volume")
    return np.array(
        [np.cross(b, c) / vol, np.cross(c, a) / vol, np.cross(a, b) / vol]
    )


class Orientation:
    """Crystal orientation as a proper rotation matrix, lab frame."""

    __slots__ = ("u",)

    def __init__(self, u=None):
        if u is None:
            u = np.eye(3)
        u = np.asarray(u, dtype=float)
        if u.shape != (3, 3):
            raise GeometryError("orientation must be a 3x3 matrix")
        if not np.allclose(u.T @ u, np.eye(3), atol=_ORTHO_TOL, rtol=0.0):
            raise GeometryError("orientation matrix is not orthonormal")
        if abs(np.linalg.det(u) - 1.0) > _ORTHO_TOL:
            raise GeometryError("orientation matrix must have determinant +1")
        self.u = u
        self.u.setflags(write=False)

    def __repr__(self):
        return f"Orientation({self.u.tolist()!r})"


def _rotations_from_axis_angle(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues rotation matrices, shape (n, 3, 3), for unit axes and angles."""
    n = len(angles)
    ax, ay, az = axes[:, 0], axes[:, 1], axes[:, 2]
    zero = np.zeros(n)
    k = np.stack(
        [
            np.stack([zero, -az, ay], axis=-1),
            np.stack([az, zero, -ax], axis=-1),
            np.stack([-ay, ax, zero], axis=-1),
        ],
        axis=1,
    )
    s = np.sin(angles)[:, None, None]
    c = (1.0 - np.cos(angles))[:, None, None]
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))
    return eye + s * k + c * (k @ k)


@dataclass(frozen=True)
class MosaicDomainSet:
    """Rotations of the mosaic sub-blocks making up one crystal.

    Either built from an explicit list of rotation matrices or generated
    deterministically with :func:`generate_mosaic_rotations`.
    """

    rotations: np.ndarray  # (n, 3, 3)
    spread_deg: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        rot = np.asarray(self.rotations, dtype=float)
        if rot.ndim != 3 or rot.shape[1:] != (3, 3) or rot.shape[0] < 1:
            raise GeometryError("mosaic rotations must be a non-empty (n, 3, 3) array")
        eye = np.eye(3)
        for i, r in enumerate(rot):
            if not np.allclose(r.T @ r, eye, atol=_ORTHO_TOL, rtol=0.0):
                raise GeometryError(f"mosaic rotation {i} is not orthonormal")
            if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
                raise GeometryError(f"mosaic rotation {i} must have determinant +1")
        rot.setflags(write=False)
        object.__setattr__(self, "rotations", rot)

    def __len__(self):
        return self.rotations.shape[0]


def generate_mosaic_rotations(seed: int, spread_deg: float, count: int) -> MosaicDomainSet:
    """Deterministic mosaic rotation sampling.

    Each domain is rotated about an axis drawn uniformly from the sphere by
    an angle drawn uniformly from [0, spread_deg].  Sampling uses the
    counter-based Philox-4x32-10 generator keyed by ``seed`` (axes from
    three standard normals, then the angle), so the same (seed, spread,
    count) reproduces the same list bit-exactly on any platform.

    spread_deg = 0 returns ``count`` exact identity matrices.
    """
    if count < 1:
        raise ValueError("mosaic domain count must be >= 1")
    if spread_deg < 0:
        raise ValueError("mosaic spread must be >= 0 degrees")
    if spread_deg == 0.0:
        rot = np.broadcast_to(np.eye(3), (count, 3, 3)).copy()
        return MosaicDomainSet(rot, spread_deg=0.0, seed=seed)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    axes = rng.normal(size=(count, 3))
    norms = np.linalg.norm(axes, axis=1, keepdims=True)
    # a zero draw is essentially impossible; fall back to z to stay total
    axes = np.where(norms > 1e-300, axes / norms, np.array([0.0, 0.0, 1.0]))
    angles = rng.uniform(0.0, math.radians(spread_deg), size=count)
    return MosaicDomainSet(
        _rotations_from_axis_angle(axes, angles), spread_deg=spread_deg, seed=seed
    )


class StructureFactorTable:
    """Total map from integer Miller triples to scattering amplitudes.

    Absent triples fall back to ``default_f``, so lookups never fail.
    Indices are limited to |h|,|k|,|l| < 2**20, which keeps a packed
    64-bit key available for the vectorized lookup path.
    """

    _BOUND = 1 << 20

    def __init__(self, entries=None, default_f: float = 0.0):
        if default_f < 0 or not math.isfinite(default_f):
            raise ValueError("default_f must be finite and non-negative")
        self.default_f = float(default_f)
        self.entries: dict[tuple[int, int, int], float] = {}
        for hkl, f in dict(entries or {}).items():
            h, k, l = (int(x) for x in hkl)
            f = float(f)
            if not math.isfinite(f) or f < 0:
                raise ValueError(f"amplitude for {(h, k, l)} must be finite and >= 0")
            if max(abs(h), abs(k), abs(l)) >= self._BOUND:
                raise ValueError(f"Miller index {(h, k, l)} out of supported range")
            self.entries[(h, k, l)] = f
        self._packed_keys, self._packed_vals = self._pack()

    def _pack(self):
        if not self.entries:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=float)
        b = self._BOUND
        keys = np.array(
            [((h + b) << 42) | ((k + b) << 21) | (l + b) for h, k, l in self.entries],
            dtype=np.int64,
        )
        vals = np.array(list(self.entries.values()), dtype=float)
        order = np.argsort(keys)
        return keys[order], vals[order]

    def lookup_rounded(self, h: np.ndarray, k: np.ndarray, l: np.ndarray) -> np.ndarray:
        """Vectorized amplitude lookup for already-rounded integer indices."""
        if self._packed_keys.size == 0:
            return np.full(np.shape(h), self.default_f)
        b = self._BOUND
        inside = (
            (np.abs(h) < b) & (np.abs(k) < b) & (np.abs(l) < b)
        )
        hc = np.where(inside, h, 0).astype(np.int64)
        kc = np.where(inside, k, 0).astype(np.int64)
        lc = np.where(inside, l, 0).astype(np.int64)
        key = ((hc + b) << 42) | ((kc + b) << 21) | (lc + b)
        pos = np.searchsorted(self._packed_keys, key)
        pos = np.minimum(pos, self._packed_keys.size - 1)
        hit = inside & (self._packed_keys[pos] == key)
        return np.where(hit, self._packed_vals[pos], self.default_f)

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        return f"StructureFactorTable({len(self.entries)} entries, default_f={self.default_f})"


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero (symmetric about 0)."""
    if x >= 0.0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def lookup_f(table: StructureFactorTable, h: float, k: float, l: float) -> float:
    """Amplitude for the Miller triple nearest to a fractional (h, k, l)."""
    key = (round_half_away(h), round_half_away(k), round_half_away(l))
    return table.entries.get(key, table.default_f)


@dataclass
class CrystalModel:
    """Everything the spot kernel needs to know about one crystal."""

    cell: UnitCell
    orientation: Orientation
    n_cells: tuple[int, int, int]
    mosaic: MosaicDomainSet
    sf_table: StructureFactorTable

    def __post_init__(self):
        na, nb, nc = self.n_cells
        if min(na, nb, nc) < 1:
            raise ValueError("n_cells must all be >= 1")
        self.n_cells = (int(na), int(nb), int(nc))

    def rotated_real_bases(self) -> np.ndarray:
        """Real-space basis rows for every mosaic domain, shape (n, 3, 3).

        Row i of entry m is the cell vector a_i rotated first by the crystal
        orientation, then by mosaic rotation m.
        """
        base = real_basis(self.cell)  # rows a, b, c
        oriented = base @ self.orientation.u.T  # row-vector convention
        return oriented @ np.transpose(self.mosaic.rotations, (0, 2, 1))


@dataclass(frozen=True)
class DetectorPanel:
    """A single rectangular pixel-grid panel.

    ``beam_center`` is the (slow, fast) pixel coordinate hit by the direct
    beam; ``fast_axis``/``slow_axis`` are orthogonal unit vectors in the lab
    frame along the two pixel directions.
    """

    slow_pixels: int
    fast_pixels: int
    pixel_size: float  # meters
    distance: float  # meters, sample to panel along the beam
    beam_center: tuple[float, float]  # (slow, fast), pixels
    fast_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    slow_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.slow_pixels < 1 or self.fast_pixels < 1:
            raise GeometryError("panel must have at least one pixel per axis")
        if not self.pixel_size > 0:
            raise GeometryError("pixel_size must be > 0")
        if not self.distance > 0:
            raise GeometryError("distance must be > 0")
        fast = _as_unit(self.fast_axis, "fast_axis")
        slow = _as_unit(self.slow_axis, "slow_axis")
        if abs(float(np.dot(fast, slow))) > 1e-12:
            raise GeometryError("fast_axis and slow_axis must be orthogonal")
        object.__setattr__(self, "fast_axis", tuple(float(x) for x in fast))
        object.__setattr__(self, "slow_axis", tuple(float(x) for x in slow))
        object.__setattr__(
            self, "beam_center", (float(self.beam_center[0]), float(self.beam_center[1]))
        )

    @property
    def n_pixels(self) -> int:
        return self.slow_pixels * self.fast_pixels

    @property
    def dims(self) -> tuple[int, int]:
        return (self.slow_pixels, self.fast_pixels)

    def normal(self) -> np.ndarray:
        return np.cross(self.fast_axis, self.slow_axis)


@dataclass(frozen=True)
class BeamSpectrum:
    """Incident beam: weighted wavelength samples plus fluence and polarization."""

    samples: tuple[tuple[float, float], ...]  # (wavelength Angstrom, weight)
    fluence: float  # photons per square meter
    polarization_on: bool = False
    beam_direction: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        samples = tuple((float(w), float(wt)) for w, wt in self.samples)
        if not samples:
            raise ValueError("spectrum needs at least one wavelength sample")
        for wl, wt in samples:
            if not wl > 0:
                raise ValueError("wavelengths must be > 0")
            if not math.isfinite(wt) or wt < 0:
                raise ValueError("weights must be finite and >= 0")
        if not any(wt > 0 for _, wt in samples):
            raise ValueError("at least one sample must have weight > 0")
        if not math.isfinite(self.fluence) or self.fluence < 0:
            raise ValueError("fluence must be finite and >= 0")
        direction = _as_unit(self.beam_direction, "beam_direction")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "beam_direction", tuple(float(x) for x in direction))

    @property
    def wavelengths(self) -> np.ndarray:
        return np.array([w for w, _ in self.samples])

    @property
    def weights(self) -> np.ndarray:
        return np.array([wt for _, wt in self.samples])


@dataclass(frozen=True)
class BackgroundProfile:
    """Amplitude of diffuse background vs sin(theta)/lambda, linearly interpolated."""

    points: tuple[tuple[float, float], ...]  # (stol inverse-Angstrom, amplitude)

    def __post_init__(self):
        pts = tuple((float(s), float(f)) for s, f in self.points)
        if len(pts) < 2:
            raise ValueError("background profile needs at least 2 points")
        stols = [s for s, _ in pts]
        if any(b <= a for a, b in zip(stols, stols[1:])):
            raise ValueError("stol values must be strictly increasing")
        if stols[0] < 0:
            raise ValueError("stol values must be >= 0")
        for _, f in pts:
            if not math.isfinite(f) or f < 0:
                raise ValueError("background amplitudes must be finite and >= 0")
        object.__setattr__(self, "points", pts)

    @property
    def stol(self) -> np.ndarray:
        return np.array([s for s, _ in self.points])

    @property
    def f_bg(self) -> np.ndarray:
        return np.array([f for _, f in self.points])


def pixel_lab_position(
    panel: DetectorPanel,
    slow: int,
    fast: int,
    sub_slow: float = 0.0,
    sub_fast: float = 0.0,
    beam_direction=(0.0, 0.0, 1.0),
) -> np.ndarray:
    """Lab-frame position (meters) of a sub-pixel point on the panel.

    The panel origin sits at ``distance`` along the beam; sub-offsets are
    fractions in [0, 1) measured from the low corner of the pixel.
    """
    if not (0 <= slow < panel.slow_pixels and 0 <= fast < panel.fast_pixels):
        raise OutOfBoundsError(
            f"pixel ({slow}, {fast}) outside panel {panel.slow_pixels}x{panel.fast_pixels}"
        )
    if not (0.0 <= sub_slow < 1.0 and 0.0 <= sub_fast < 1.0):
        raise OutOfBoundsError("sub-pixel offsets must lie in [0, 1)")
    direction = np.asarray(beam_direction, dtype=float)
    s = ((slow + sub_slow) - panel.beam_center[0]) * panel.pixel_size
    f = ((fast + sub_fast) - panel.beam_center[1]) * panel.pixel_size
    return (
        panel.distance * direction
        + s * np.asarray(panel.slow_axis)
        + f * np.asarray(panel.fast_axis)
    )


def fractional_miller(crystal: CrystalModel, mosaic_index: int, q) -> tuple[float, float, float]:
    """Continuous Miller coordinates of a scattering vector q (inverse Angstrom).

    q is (s_out - s_in) / lambda with unit propagation vectors; the result is
    integer exactly on the Bragg condition.
    """
    if not 0 <= mosaic_index < len(crystal.mosaic):
        raise OutOfBoundsError(f"mosaic index {mosaic_index} out of range")
    basis = crystal.rotated_real_bases()[mosaic_index]
    h, k, l = basis @ np.asarray(q, dtype=float)
    return (float(h), float(k), float(l))


def solid_angle(panel: DetectorPanel, pixel_position) -> float:
    """Solid angle (steradians) subtended by one pixel at a lab-frame point.

    Point-pixel obliquity formula: (pixel_size^2 / R^2) * cos(obliquity).
    """
    pos = np.asarray(pixel_position, dtype=float)
    r_sq = float(pos @ pos)
    if r_sq <= 0.0:
        raise GeometryError("pixel position must be non-zero")
    r = math.sqrt(r_sq)
    cos_obl = abs(float(pos @ panel.normal())) / r
    return (panel.pixel_size * panel.pixel_size / r_sq) * cos_obl


def polarization_factor(spectrum: BeamSpectrum, two_theta: float) -> float:
    """Unpolarized Thomson factor 0.5 (1 + cos^2 2theta); 1.0 when disabled."""
    if not spectrum.polarization_on:
        return 1.0
    c = math.cos(two_theta)
    return 0.5 * (1.0 + c * c)


def interp_background_f(profile: BackgroundProfile, stol: float) -> float:
    """Linear interpolation of the background amplitude, clamped at the ends."""
    if stol < 0:
        raise ValueError("stol must be >= 0")
    return float(np.interp(stol, profile.stol, profile.f_bg))
