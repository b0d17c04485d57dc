"""Diffusions with uniform marginal laws.

Construction and Monte Carlo simulation of martingales uniform on an
expanding support, their mean-reverting rescalings with constant uniform
margins, the associated ergodic diffusion, exact conditional-moment
formulas, and a statistical verification harness tying them together.
"""

__version__ = "0.1.0"

from .boundary import (
    Boundary,
    BoundaryClass,
    BoundaryError,
    ExponentialBoundary,
    PowerBoundary,
    RationalBoundary,
    Regime,
    SaturatingExpBoundary,
    parse_boundary,
)
from .moments import (
    AlphaMatrix,
    MomentQuery,
    alpha_matrix,
    conditional_moment,
    conditional_moment_closed_form,
    conditional_moment_via_ode,
    conic_moment,
    uniform_moment,
)
from .processes import (
    ConicMartingale,
    ErgodicUniform,
    MeanRevertingUniform,
    MeanRevertingUnitUniform,
    NormalCdfUniform,
    Process,
    ProcessError,
    UniformLaw,
    parse_process,
    sigma_bound,
)
from .simulate import (
    Conditional,
    ConfigError,
    FullPaths,
    Marginals,
    NonFiniteStateError,
    PathSet,
    PointMass,
    SimConfig,
    TerminalOnly,
    TimeGrid,
    UniformOnSupport,
    euler_simulate,
    exact_uniform_reference,
    rescale_to_unit_support,
    time_change_simulate,
)
from .analysis import (
    StatReport,
    activity_decay,
    boundary_occupation,
    histogram,
    ks_two_sample,
    ks_uniform,
    limit_law_study,
    moment_match,
)

__all__ = [name for name in dir() if not name.startswith("_")]
