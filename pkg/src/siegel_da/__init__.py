"""Numerical toolkit for the Drury-Arveson space on the Siegel upper half-space.

Coefficient functions on a truncated ``N_0^d x R_-`` grid stand in for DA
functions through the synthesis isometry; multipliers become weighted shifts,
and finite Siegel-dissipative matrix tuples are checked against the von
Neumann type inequality.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    DomainError,
    GridMismatchError,
    GridShiftError,
    PreconditionError,
    SingularityError,
    UnsupportedConfigurationError,
)
from .grid import CoeffFunction, GridSpec, fock_norm_sq, inner_product, mu_weight  # noqa: E402
from .heisenberg import (  # noqa: E402
    HeisenbergElement,
    SiegelPoint,
    bargmann_lowest_row,
    cayley,
    hgroup_mul,
    phi_action,
    rho,
)
from .da_space import KernelParams, da_norm_direct, kernel, kernel_coefficients, synthesize  # noqa: E402
from .shifts import (  # noqa: E402
    ShiftParams,
    ShiftSymbol,
    exp_mult_apply,
    multiplier_norm_bound,
    shift_adjoint_apply,
    shift_apply,
    symbol_apply,
    symbol_norm_bound,
    truncated_operator_norm,
)
from .tuples import (  # noqa: E402
    OperatorTuple,
    apply_polynomial,
    check_dissipative,
    intertwine_residual,
    operator_norm,
    random_tuple,
    semigroup,
    theta_embed,
    theta_isometry_residual,
)
from .harness import ExperimentConfig, ExperimentReport, emit, run  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "GridMismatchError",
    "GridShiftError",
    "PreconditionError",
    "SingularityError",
    "UnsupportedConfigurationError",
    "HeisenbergElement",
    "SiegelPoint",
    "bargmann_lowest_row",
    "cayley",
    "hgroup_mul",
    "phi_action",
    "rho",
    "ShiftParams",
    "ShiftSymbol",
    "exp_mult_apply",
    "multiplier_norm_bound",
    "shift_adjoint_apply",
    "shift_apply",
    "symbol_apply",
    "symbol_norm_bound",
    "truncated_operator_norm",
    "OperatorTuple",
    "apply_polynomial",
    "check_dissipative",
    "intertwine_residual",
    "operator_norm",
    "random_tuple",
    "semigroup",
    "theta_embed",
    "theta_isometry_residual",
    "CoeffFunction",
    "GridSpec",
    "fock_norm_sq",
    "inner_product",
    "mu_weight",
    "KernelParams",
    "da_norm_direct",
    "kernel",
    "kernel_coefficients",
    "synthesize",
    "ExperimentConfig",
    "ExperimentReport",
    "emit",
    "run",
]
