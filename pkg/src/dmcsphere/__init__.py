"""Diffusive molecular communication inside a bounded sphere.

Eigenfunction-series concentration Green's function with Robin boundary and
first-order degradation, channel characterization, on-off-keying link analysis,
and an independent particle-based Brownian simulator.
"""

from .cgf import (
    Concentration,
    SphericalPoint,
    TruncationPolicy,
    cgf_eval,
    cgf_origin,
    cgf_unbounded,
    coefficient_H,
    mass_in_sphere,
)
from .channel import (
    ObservationPdf,
    ReceiverSpec,
    find_peak_time,
    mean_received,
    p_obs_approx,
    p_obs_exact,
    p_obs_quadrature,
    p_obs_unbounded,
)
from .eigen import (
    Environment,
    EigenvalueTable,
    RootFindingError,
    build_table,
    find_roots,
    mode_norm,
)
from .ook import (
    BerResult,
    DetectorMode,
    LinkConfig,
    analytic_ber,
    conditional_error,
    memory_slots,
    monte_carlo_ber,
    poisson_cdf,
    threshold,
)
from .pbs import (
    PbsConfig,
    PbsHistogram,
    ValidityConditionError,
    ValidityConditionWarning,
    binding_probability,
    estimate_p_obs,
    validity_ratio,
)

__version__ = "1.0.0"

__all__ = [
    "BerResult",
    "Concentration",
    "DetectorMode",
    "EigenvalueTable",
    "Environment",
    "LinkConfig",
    "ObservationPdf",
    "PbsConfig",
    "PbsHistogram",
    "ReceiverSpec",
    "RootFindingError",
    "SphericalPoint",
    "TruncationPolicy",
    "ValidityConditionError",
    "ValidityConditionWarning",
    "analytic_ber",
    "binding_probability",
    "build_table",
    "cgf_eval",
    "cgf_origin",
    "cgf_unbounded",
    "coefficient_H",
    "conditional_error",
    "estimate_p_obs",
    "find_peak_time",
    "find_roots",
    "mass_in_sphere",
    "mean_received",
    "memory_slots",
    "mode_norm",
    "monte_carlo_ber",
    "p_obs_approx",
    "p_obs_exact",
    "p_obs_quadrature",
    "p_obs_unbounded",
    "poisson_cdf",
    "threshold",
]
