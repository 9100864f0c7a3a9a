"""Simultaneous Gaussian-field estimation and centroidal Voronoi coverage."""

from .coverage import DensityField, centroid, coverage_value, lloyd_step, run_lloyd
from .dynamics import Phase, PhaseIParams
from .errors import (
    ConfigError,
    DegenerateGenerators,
    ECError,
    EmptyGrid,
    InvalidAlpha,
    MeasurementCapExceeded,
    NonConvergence,
    NumericalBreakdown,
    OutOfDomain,
    ZeroMass,
)
from .field import GaussianFieldModel, RadialKernel, max_variance_on_grid, tikhonov_gap
from .geometry import ConvexPolygon, VoronoiPartition, clip_halfplane, voronoi_partition
from .sim import FOUR_BUMP_FIELD, ScenarioConfig, TrueField, ideal_configuration, run_ec

__version__ = "0.1.0"
