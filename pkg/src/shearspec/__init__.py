"""Fourier-spectral tools for aggregation-diffusion dynamics under shear.

The package simulates the rescaled aggregation equation with fractional
dissipation on the 2-torus,

    ∂t n + u(y) ∂x n + ν Λ^α n + ν ∇·(n B(n)) = 0,      B(n) = ∇(−Δ)⁻¹(n − n̄),

and analyses the associated per-mode linear operators: pseudospectral decay
bounds, semigroup norms, enhanced-dissipation rate laws, and the dichotomy
between aggregation-driven blow-up and shear-flow suppression.
"""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    Multiplier,
    SpectralField1D,
    SpectralField2D,
    TorusGrid,
    dealias,
    frac_laplacian,
    from_physical,
    norms,
    to_physical,
)
from .kernels import (  # noqa: E402
    KernelField,
    attractive_kernel,
    nonlinear_rhs,
)
from .linear import (  # noqa: E402
    DecayFit,
    ModeOperator,
    ShearProfile,
    build_mode_operator,
    detect_flatness_order,
    duhamel_identity_check,
    kolmogorov,
    measure_mode_decay,
    propagator,
    semigroup_norm,
)
from .pseudospectrum import (  # noqa: E402
    PsiResult,
    gearhart_pruss_check,
    psi_bound,
    psi_scaling_fit,
    sigma_min,
)
from .solver import (  # noqa: E402
    BlowupMonitor,
    DiagnosticsRecord,
    SimConfig,
    SimState,
    energy_identity_residual,
    max_principle_check,
    run_simulation,
)
from .harness import (  # noqa: E402
    ConfigError,
    InitialData,
    ScenarioResult,
    SCENARIO_NAMES,
    emit_plot_data,
    parse_config,
    run_scenario,
)
from .fieldio import load_field, save_field  # noqa: E402

__all__ = [
    "__version__",
    "Multiplier", "SpectralField1D", "SpectralField2D", "TorusGrid",
    "dealias", "frac_laplacian", "from_physical", "norms", "to_physical",
    "KernelField", "attractive_kernel", "nonlinear_rhs",
    "DecayFit", "ModeOperator", "ShearProfile", "build_mode_operator",
    "detect_flatness_order", "duhamel_identity_check", "kolmogorov",
    "measure_mode_decay", "propagator", "semigroup_norm",
    "PsiResult", "gearhart_pruss_check", "psi_bound", "psi_scaling_fit",
    "sigma_min",
    "BlowupMonitor", "DiagnosticsRecord", "SimConfig", "SimState",
    "energy_identity_residual", "max_principle_check", "run_simulation",
    "ConfigError", "InitialData", "ScenarioResult", "SCENARIO_NAMES",
    "emit_plot_data", "parse_config", "run_scenario",
    "load_field", "save_field",
]
