"""xtrace: desk-scale X-ray tracing simulator for serial crystallography.

Per-pixel diffraction kernels over a backend-agnostic execution-pattern
layer, plus a campaign scheduler and benchmark harness for strong-scaling
and device-sharing experiments.
"""

from .errors import (
    CampaignIOError,
    ConfigError,
    GeometryError,
    InvalidCellError,
    NumericalFault,
    OutOfBoundsError,
    ParseError,
    PatternFault,
    ShapeMismatchError,
    XtraceError,
)
from .execution import (
    Executor,
    RangePolicy,
    default_worker_count,
    kernel_timer,
    parallel_for,
    parallel_reduce,
    parallel_scan,
)
from .io import (
    SimulationConfig,
    load_background,
    load_config,
    load_hkl,
    read_image,
    write_image,
    write_preview,
)
from .kernels import (
    R_E_SQR,
    HistogramResult,
    ImageStats,
    PixelBuffer,
    SpotsContext,
    add_array,
    add_background,
    image_histogram,
    image_stats,
    lattice_transform,
    nanobragg_spots,
    sincg,
)
from .model import (
    BackgroundProfile,
    BeamSpectrum,
    CrystalModel,
    DetectorPanel,
    MosaicDomainSet,
    Orientation,
    StructureFactorTable,
    UnitCell,
    fractional_miller,
    generate_mosaic_rotations,
    interp_background_f,
    lookup_f,
    pixel_lab_position,
    polarization_factor,
    real_basis,
    reciprocal_basis,
    solid_angle,
)
from .scheduler import (
    CampaignPlan,
    CampaignReport,
    ScalingRow,
    kernel_time_table,
    plan_batches,
    run_campaign,
    simulate_image,
    strong_scaling,
    write_scaling_csv,
)

__version__ = "0.1.0"
