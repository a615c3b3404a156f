"""File formats: HKL tables, background profiles, TOML config, raw images.

Images are written as raw little-endian 32-bit floats (row-major, slow index
outermost) in ``<stem>.bin`` with a JSON sidecar ``<stem>.json`` carrying the
geometry, wavelengths, per-image seed and a CRC-32 of the binary payload.
The 64-bit accumulator is downcast (round-to-nearest-even) on write; the
sidecar records that.

Config parsing is strict: unknown keys are fatal, every error names the key
or the line that caused it.
"""

from __future__ import annotations

import json
import math
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError, NumericalFault, ParseError
from .kernels import PixelBuffer
from .model import (
    BackgroundProfile,
    BeamSpectrum,
    CrystalModel,
    DetectorPanel,
    MosaicDomainSet,
    Orientation,
    StructureFactorTable,
    UnitCell,
    generate_mosaic_rotations,
)

__all__ = [
    "SimulationConfig",
    "load_hkl",
    "load_background",
    "load_config",
    "write_image",
    "read_image",
    "write_preview",
]


def load_hkl(path, default_f: float = 0.0) -> StructureFactorTable:
    """Read a ``h k l F`` text table; ``#`` comments and blank lines ignored.

    Duplicate triples keep the last amplitude and emit a warning.
    """
    path = Path(path)
    entries: dict[tuple[int, int, int], float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(path, lineno, f"expected 'h k l F', got {raw.strip()!r}")
            try:
                h, k, l = (int(p) for p in parts[:3])
            except ValueError:
                raise ParseError(path, lineno, f"h k l must be integers, got {raw.strip()!r}")
            try:
                f = float(parts[3])
            except ValueError:
                raise ParseError(path, lineno, f"amplitude must be a number, got {parts[3]!r}")
            if not math.isfinite(f) or f < 0:
                raise ParseError(path, lineno, f"amplitude must be finite and >= 0, got {f!r}")
            if (h, k, l) in entries:
                warnings.warn(f"{path}:{lineno}: duplicate triple {(h, k, l)}, last wins")
            entries[(h, k, l)] = f
    try:
        return StructureFactorTable(entries, default_f=default_f)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc))


def load_background(path) -> BackgroundProfile:
    """Read a two-column ``stol f_bg`` profile with strictly increasing stol."""
    path = Path(path)
    points: list[tuple[float, float]] = []
    line_of_point: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 'stol f_bg', got {raw.strip()!r}")
            try:
                stol, f_bg = float(parts[0]), float(parts[1])
            except ValueError:
                raise ParseError(path, lineno, f"values must be numbers, got {raw.strip()!r}")
            if points and stol <= points[-1][0]:
                raise ParseError(
                    path, lineno,
                    f"stol {stol!r} not greater than {points[-1][0]!r} on line {line_of_point[-1]}",
                )
            if not math.isfinite(f_bg) or f_bg < 0:
                raise ParseError(path, lineno, f"amplitude must be finite and >= 0, got {f_bg!r}")
            if stol < 0:
                raise ParseError(path, lineno, f"stol must be >= 0, got {stol!r}")
            points.append((stol, f_bg))
            line_of_point.append(lineno)
    if len(points) < 2:
        raise ParseError(path, 0, f"profile needs at least 2 points, got {len(points)}")
    return BackgroundProfile(points=tuple(points))


@dataclass
class SimulationConfig:
    """Everything needed to simulate images and schedule a campaign."""

    cell: UnitCell
    n_cells: tuple[int, int, int]
    panel: DetectorPanel
    spectrum: BeamSpectrum
    orientation: Orientation = field(default_factory=Orientation)
    mosaic_domains: int = 1
    mosaic_spread_deg: float = 0.0
    explicit_mosaic: MosaicDomainSet | None = None
    sf_table: StructureFactorTable = field(default_factory=StructureFactorTable)
    background: BackgroundProfile | None = None
    thickness_factor: float = 1.0
    oversample: int = 1
    seed: int = 0
    n_images: int = 1
    ranks: int | None = None
    devices: int = 1
    ranks_per_device: int = 1
    io_enabled: bool = False
    io_latency_ms: float = 0.0
    echo: dict = field(default_factory=dict)

    def crystal_for_seed(self, seed: int) -> CrystalModel:
        """Crystal with this image seed's mosaic domains (explicit list wins)."""
        mosaic = self.explicit_mosaic
        if mosaic is None:
            mosaic = generate_mosaic_rotations(seed, self.mosaic_spread_deg, self.mosaic_domains)
        return CrystalModel(
            cell=self.cell,
            orientation=self.orientation,
            n_cells=self.n_cells,
            mosaic=mosaic,
            sf_table=self.sf_table,
        )


# section -> key -> (required, default); values are validated by the builders
_CONFIG_SCHEMA = {
    "crystal": {
        "cell": (True, None),
        "n_cells": (True, None),
        "orientation": (False, None),
        "mosaic_domains": (False, 1),
        "mosaic_spread_deg": (False, 0.0),
        "mosaic_rotations": (False, None),
        "default_f": (False, 0.0),
        "hkl_path": (False, None),
    },
    "detector": {
        "slow_pixels": (True, None),
        "fast_pixels": (True, None),
        "pixel_size_m": (True, None),
        "distance_m": (True, None),
        "beam_center": (True, None),
        "fast_axis": (False, (1.0, 0.0, 0.0)),
        "slow_axis": (False, (0.0, 1.0, 0.0)),
    },
    "beam": {
        "wavelengths": (True, None),
        "weights": (False, None),
        "fluence": (True, None),
        "polarization": (False, False),
        "beam_direction": (False, (0.0, 0.0, 1.0)),
    },
    "background": {
        "profile_path": (False, None),
        "stol": (False, None),
        "f_bg": (False, None),
        "thickness_factor": (False, 1.0),
    },
    "simulation": {
        "oversample": (False, 1),
        "seed": (False, 0),
    },
    "campaign": {
        "n_images": (False, 1),
        "ranks": (False, None),
        "devices": (False, 1),
        "ranks_per_device": (False, 1),
        "io_enabled": (False, False),
        "io_latency_ms": (False, 0.0),
    },
}

_REQUIRED_SECTIONS = ("crystal", "detector", "beam")


def _check_sections(raw: dict, path):
    for section in raw:
        if section not in _CONFIG_SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        for key in raw[section]:
            if key not in _CONFIG_SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {section}.{key}")
    for section in _REQUIRED_SECTIONS:
        if section not in raw:
            raise ConfigError(f"{path}: missing required section [{section}]")
    for section, keys in _CONFIG_SCHEMA.items():
        present = raw.get(section, {})
        for key, (required, _) in keys.items():
            if required and section in raw and key not in present:
                raise ConfigError(f"{path}: missing required key {section}.{key}")


def _get(raw: dict, section: str, key: str):
    required, default = _CONFIG_SCHEMA[section][key]
    return raw.get(section, {}).get(key, default)


def _build(path, section, key, builder, *args):
    try:
        return builder(*args)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: invalid value for {section}.{key}: {exc}")


def load_config(path) -> SimulationConfig:
    """Parse and fully validate a TOML simulation config.

    Unknown keys are rejected; defaults: oversample=1, polarization off,
    one mosaic domain with zero spread.  See docs/config_reference.md for
    the complete key list.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}")
    _check_sections(raw, path)

    cell_params = _get(raw, "crystal", "cell")
    if not (isinstance(cell_params, list) and len(cell_params) == 6):
        raise ConfigError(f"{path}: crystal.cell must be [a, b, c, alpha, beta, gamma]")
    cell = _build(path, "crystal", "cell", UnitCell, *map(float, cell_params))

    n_cells_raw = _get(raw, "crystal", "n_cells")
    if not (isinstance(n_cells_raw, list) and len(n_cells_raw) == 3):
        raise ConfigError(f"{path}: crystal.n_cells must be [Na, Nb, Nc]")
    n_cells = tuple(int(n) for n in n_cells_raw)
    if min(n_cells) < 1:
        raise ConfigError(f"{path}: crystal.n_cells entries must be >= 1")

    orientation_raw = _get(raw, "crystal", "orientation")
    if orientation_raw is None:
        orientation = Orientation()
    else:
        if not (isinstance(orientation_raw, list) and len(orientation_raw) == 9):
            raise ConfigError(f"{path}: crystal.orientation must be 9 numbers, row-major")
        orientation = _build(path, "crystal", "orientation", Orientation,
                             np.reshape([float(x) for x in orientation_raw], (3, 3)))

    mosaic_domains = int(_get(raw, "crystal", "mosaic_domains"))
    mosaic_spread = float(_get(raw, "crystal", "mosaic_spread_deg"))
    if mosaic_domains < 1:
        raise ConfigError(f"{path}: crystal.mosaic_domains must be >= 1")
    if mosaic_spread < 0:
        raise ConfigError(f"{path}: crystal.mosaic_spread_deg must be >= 0")
    rotations_raw = _get(raw, "crystal", "mosaic_rotations")
    explicit_mosaic = None
    if rotations_raw is not None:
        mats = []
        for i, row in enumerate(rotations_raw):
            if not (isinstance(row, list) and len(row) == 9):
                raise ConfigError(
                    f"{path}: crystal.mosaic_rotations[{i}] must be 9 numbers, row-major")
            mats.append(np.reshape([float(x) for x in row], (3, 3)))
        explicit_mosaic = _build(path, "crystal", "mosaic_rotations",
                                 MosaicDomainSet, np.stack(mats), mosaic_spread)

    default_f = float(_get(raw, "crystal", "default_f"))
    hkl_path = _get(raw, "crystal", "hkl_path")
    if hkl_path is not None:
        sf_table = load_hkl(path.parent / hkl_path, default_f=default_f)
    else:
        sf_table = _build(path, "crystal", "default_f", StructureFactorTable, {}, default_f)

    panel = _build(
        path, "detector", "*", DetectorPanel,
        int(_get(raw, "detector", "slow_pixels")),
        int(_get(raw, "detector", "fast_pixels")),
        float(_get(raw, "detector", "pixel_size_m")),
        float(_get(raw, "detector", "distance_m")),
        tuple(float(x) for x in _get(raw, "detector", "beam_center")),
        tuple(float(x) for x in _get(raw, "detector", "fast_axis")),
        tuple(float(x) for x in _get(raw, "detector", "slow_axis")),
    )

    wavelengths = _get(raw, "beam", "wavelengths")
    if not isinstance(wavelengths, list) or not wavelengths:
        raise ConfigError(f"{path}: beam.wavelengths must be a non-empty list")
    weights = _get(raw, "beam", "weights")
    if weights is None:
        weights = [1.0] * len(wavelengths)
    if len(weights) != len(wavelengths):
        raise ConfigError(f"{path}: beam.weights must match beam.wavelengths in length")
    spectrum = _build(
        path, "beam", "*", BeamSpectrum,
        tuple(zip(map(float, wavelengths), map(float, weights))),
        float(_get(raw, "beam", "fluence")),
        bool(_get(raw, "beam", "polarization")),
        tuple(float(x) for x in _get(raw, "beam", "beam_direction")),
    )

    background = None
    thickness_factor = float(_get(raw, "background", "thickness_factor"))
    if "background" in raw:
        profile_path = _get(raw, "background", "profile_path")
        stol = _get(raw, "background", "stol")
        f_bg = _get(raw, "background", "f_bg")
        if profile_path is not None and stol is not None:
            raise ConfigError(
                f"{path}: background.profile_path and background.stol are mutually exclusive")
        if profile_path is not None:
            background = load_background(path.parent / profile_path)
        elif stol is not None or f_bg is not None:
            if stol is None or f_bg is None or len(stol) != len(f_bg):
                raise ConfigError(
                    f"{path}: background.stol and background.f_bg must be lists of equal length")
            background = _build(path, "background", "stol", BackgroundProfile,
                                tuple(zip(map(float, stol), map(float, f_bg))))
        else:
            raise ConfigError(
                f"{path}: [background] needs profile_path or stol/f_bg arrays")

    oversample = int(_get(raw, "simulation", "oversample"))
    if oversample < 1:
        raise ConfigError(f"{path}: simulation.oversample must be >= 1")
    seed = int(_get(raw, "simulation", "seed"))
    if seed < 0:
        raise ConfigError(f"{path}: simulation.seed must be >= 0")

    n_images = int(_get(raw, "campaign", "n_images"))
    ranks = _get(raw, "campaign", "ranks")
    devices = int(_get(raw, "campaign", "devices"))
    ranks_per_device = int(_get(raw, "campaign", "ranks_per_device"))
    io_latency_ms = float(_get(raw, "campaign", "io_latency_ms"))
    if n_images < 1 or devices < 1 or ranks_per_device < 1:
        raise ConfigError(f"{path}: campaign counts must be >= 1")
    if ranks is not None and int(ranks) < 1:
        raise ConfigError(f"{path}: campaign.ranks must be >= 1")
    if io_latency_ms < 0:
        raise ConfigError(f"{path}: campaign.io_latency_ms must be >= 0")

    return SimulationConfig(
        cell=cell,
        n_cells=n_cells,
        panel=panel,
        spectrum=spectrum,
        orientation=orientation,
        mosaic_domains=mosaic_domains,
        mosaic_spread_deg=mosaic_spread,
        explicit_mosaic=explicit_mosaic,
        sf_table=sf_table,
        background=background,
        thickness_factor=thickness_factor,
        oversample=oversample,
        seed=seed,
        n_images=n_images,
        ranks=None if ranks is None else int(ranks),
        devices=devices,
        ranks_per_device=ranks_per_device,
        io_enabled=bool(_get(raw, "campaign", "io_enabled")),
        io_latency_ms=io_latency_ms,
        echo=raw,
    )


def _stem(path) -> Path:
    path = Path(path)
    if path.suffix in (".bin", ".json"):
        return path.with_suffix("")
    return path


def write_image(buf: PixelBuffer, path, panel: DetectorPanel | None = None,
                spectrum: BeamSpectrum | None = None, seed: int | None = None,
                image_index: int | None = None) -> Path:
    """Write ``<stem>.bin`` (raw little-endian float32) plus ``<stem>.json``.

    Refuses to write non-finite data, naming the first offending pixel.
    Returns the ``.bin`` path.
    """
    finite = np.isfinite(buf.data)
    if not finite.all():
        raise NumericalFault(int(np.argmin(finite)), "refusing to write non-finite pixel")
    stem = _stem(path)
    payload = np.ascontiguousarray(buf.data, dtype="<f4").tobytes()
    sidecar = {
        "dims": list(buf.dims),
        "dtype": "float32",
        "byte_order": "little",
        "downcast": "values rounded to nearest-even from the float64 accumulator",
        "pixel_size_m": panel.pixel_size if panel else None,
        "distance_m": panel.distance if panel else None,
        "wavelengths_angstrom": list(map(float, spectrum.wavelengths)) if spectrum else None,
        "seed": seed,
        "image_index": image_index,
        "crc32": zlib.crc32(payload),
    }
    bin_path = stem.with_suffix(".bin")
    with open(bin_path, "wb") as fh:
        fh.write(payload)
    with open(stem.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    return bin_path


def read_image(path, verify_crc: bool = True) -> tuple[np.ndarray, dict]:
    """Read a ``.bin`` image and its sidecar back; optionally check the CRC.

    Returns (float32 array shaped (slow, fast), sidecar dict).
    """
    stem = _stem(path)
    sidecar_path = stem.with_suffix(".json")
    if not sidecar_path.exists():
        raise FileNotFoundError(f"missing sidecar {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    with open(stem.with_suffix(".bin"), "rb") as fh:
        payload = fh.read()
    if verify_crc and zlib.crc32(payload) != sidecar["crc32"]:
        raise ValueError(f"CRC mismatch for {stem.with_suffix('.bin')}")
    dims = tuple(sidecar["dims"])
    data = np.frombuffer(payload, dtype="<f4")
    if data.size != dims[0] * dims[1]:
        raise ValueError(f"payload length {data.size} != dims {dims}")
    return data.reshape(dims), sidecar


def write_preview(buf: PixelBuffer, path) -> Path:
    """8-bit binary PGM preview, linearly scaled from 0 to the 99.9th percentile.

    Values above the percentile clip to white; an all-constant image maps to
    black by convention (there is no dynamic range to show).
    """
    if buf.n_pixels == 0:
        raise ValueError("cannot preview an empty buffer")
    path = Path(path)
    data = buf.data.astype(np.float64)
    lo, hi = data.min(), data.max()
    if hi == lo:
        scaled = np.zeros(buf.n_pixels, dtype=np.uint8)
    else:
        p = float(np.percentile(data, 99.9, method="lower"))
        if p <= 0:
            p = hi
        scaled = np.clip(data, 0.0, p) * (255.0 / p)
        scaled = np.rint(scaled).astype(np.uint8)
    slow, fast = buf.dims
    with open(path, "wb") as fh:
        fh.write(f"P5\n{fast} {slow}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
    return path
