import numpy as np
import pytest

from xtrace.model import (
    BackgroundProfile,
    BeamSpectrum,
    CrystalModel,
    DetectorPanel,
    MosaicDomainSet,
    Orientation,
    StructureFactorTable,
    UnitCell,
)


def rotation_about(axis, angle_deg):
    """Rodrigues rotation matrix, for building explicit test orientations."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    angle = np.radians(angle_deg)
    ax, ay, az = axis
    k = np.array([[0, -az, ay], [az, 0, -ax], [-ay, ax, 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


@pytest.fixture
def cubic_cell():
    return UnitCell(100.0, 100.0, 100.0, 90.0, 90.0, 90.0)


@pytest.fixture
def small_panel():
    return DetectorPanel(
        slow_pixels=4,
        fast_pixels=4,
        pixel_size=100e-6,
        distance=0.1,
        beam_center=(1.5, 1.5),
    )


@pytest.fixture
def mono_beam():
    return BeamSpectrum(samples=((1.0, 1.0),), fluence=1e24)


def make_crystal(cell=None, orientation=None, n_cells=(5, 5, 5), mosaic=None,
                 entries=None, default_f=100.0):
    cell = cell or UnitCell(100.0, 100.0, 100.0, 90.0, 90.0, 90.0)
    orientation = orientation or Orientation()
    if mosaic is None:
        mosaic = MosaicDomainSet(np.eye(3)[None, :, :])
    return CrystalModel(
        cell=cell,
        orientation=orientation,
        n_cells=n_cells,
        mosaic=mosaic,
        sf_table=StructureFactorTable(entries or {}, default_f=default_f),
    )


@pytest.fixture
def water_profile():
    return BackgroundProfile(points=((0.0, 2.57), (0.0365, 2.58), (0.07, 2.8),
                                     (0.12, 5.0), (0.162, 8.0), (0.3, 6.5)))
