"""Continuous Galerkin-Petrov, Gauss IRK and general linear time integrators
for Hamiltonian systems, with a long-time error benchmark harness."""

from .analysis import (
    ErrorSeries,
    FitError,
    GrowthFit,
    SummaryRow,
    compute_error_series,
    fit_growth_exponent,
    summarize_run,
)
from .cgp import (
    Cgp1Stepper,
    Cgp2Stepper,
    CgpCoefficients,
    CgpStepper,
    CgpStepWork,
    UnsupportedOrderError,
    assemble_cgp,
    lobatto_rule,
    solve_stage_fixed_point,
    step_cgp,
    step_cgp1,
    step_cgp2,
)
from .core import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    OdeProblem,
    RunRecord,
    SeparableParts,
    SolverConfig,
    StepFailure,
    UnsupportedMetricError,
    ZeroReferenceEnergyError,
    energy_error,
    evaluate_split_rhs,
    global_error,
)
from .glm import GlmStepper, GlmTableau, StarterSpec, euler_glm, load_glm_tableau, rk_as_glm, start_glm, step_glm
from .irk import IrkStepper, RkTableau, gauss2_tableau, step_irk
from .problems import ArgonConfig, KeplerConfig, kepler_exact, make_argon7, make_kepler, make_sho
from .runner import Stepper, integrate

__version__ = "0.1.0"
