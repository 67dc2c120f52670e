"""Simulation library for the spherical Boolean model.

Modules: ``measure`` (radius measures), ``pointproc`` (Poisson sampling with
reproducible streams), ``geom`` (intersection graphs and cluster queries),
``estimate`` (Monte Carlo estimators), ``threshold`` (critical intensity and
slab crossings) and ``cli`` (config-driven experiments).
"""

__version__ = "0.1.0"

from .errors import (
    BoolpercError,
    DimensionError,
    InvalidMark,
    InvalidMeasure,
    InvalidQuantile,
    InvalidScale,
    NoBracket,
    NotAMeasure,
    TargetTooLarge,
    TooManyPoints,
    WindowMismatch,
)
from .measure import RadiusMeasure, SignedRadiusMeasure, combine, scale, total_mass, moment
from .pointproc import Configuration, PoissonStream, SeedSpec, Window, sample_poisson
from .geom import TargetSet, build_graph, connects_J, pivotal_report, stabilization_radius
from .montecarlo import Estimate, replicate
from .estimate import (
    derivative_report,
    estimate_theta,
    estimate_volume_fraction,
    mecke_check,
    rate_bound_report,
    stabilization_survey,
    theta_curve,
)
from .threshold import ThresholdResult, estimate_tc, slab_crossing
