"""Nonlocal reaction-diffusion epidemic models with regional feedback control.

Modules: ``grid`` (domains, operators, regions), ``models`` (forces of
infection and right-hand sides), ``integrator`` (IMEX time stepping),
``spectral`` (principal eigenvalues), ``control`` (certification, adjoint,
region placement), ``scenario`` and ``cli``.
"""

from .control import (
    ControlScenario,
    OptimizerConfig,
    StabilizationReport,
    certify,
    classify,
    compute_R,
    optimize_translation,
    run_feedback,
    shape_derivative,
    shape_gradient,
    solve_adjoint,
)
from .grid import (
    assemble_robin_laplacian,
    build_domain,
    build_kernel,
    make_region,
    restrict_to_complement,
    translate_region,
)
from .integrator import Operators, SolverConfig, StateField, build_system, simulate, steady_state
from .models import ForceOfInfection, ModelSpec, Seasonality
from .scenario import Scenario, load_scenario, parse_scenario
from .spectral import (
    principal_eigenvalue_dirichlet_complement,
    principal_eigenvalue_homogeneous,
    principal_eigenvalue_logistic,
    periodic_principal_eigenvalue,
)

__all__ = [
    "assemble_robin_laplacian",
    "build_domain",
    "build_kernel",
    "build_system",
    "certify",
    "classify",
    "compute_R",
    "ControlScenario",
    "ForceOfInfection",
    "load_scenario",
    "make_region",
    "ModelSpec",
    "Operators",
    "optimize_translation",
    "OptimizerConfig",
    "parse_scenario",
    "periodic_principal_eigenvalue",
    "principal_eigenvalue_dirichlet_complement",
    "principal_eigenvalue_homogeneous",
    "principal_eigenvalue_logistic",
    "restrict_to_complement",
    "run_feedback",
    "Scenario",
    "Seasonality",
    "shape_derivative",
    "shape_gradient",
    "simulate",
    "solve_adjoint",
    "SolverConfig",
    "StabilizationReport",
    "StateField",
    "steady_state",
    "translate_region",
]
