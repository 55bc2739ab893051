"""Regional feedback control: certification, feedback runs, the terminal-mass
objective, its adjoint, translation shape derivatives and the placement
optimizer."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import splu

from .errors import MissingDenseTrajectory, ModelValidationError, NormUnderflow, NumericalError
from .grid import ControlRegion, make_region
from .integrator import (
    Operators,
    SolverConfig,
    StateField,
    Trajectory,
    build_system,
    measure_decay_rate,
    simulate,
)
from .models import ModelSpec, Seasonality
from .spectral import (
    EIGEN_TOL,
    PeriodicConfig,
    periodic_principal_eigenvalue,
    principal_eigenvalue_dirichlet_complement,
    principal_eigenvalue_homogeneous,
)

VERDICTS = ("zero-stabilizable", "locally-zero-stabilizable", "not-stabilizable", "inconclusive")
INCONCLUSIVE_BAND = 10 * EIGEN_TOL
TERMINATIONS = ("gradient-small", "max-iter", "boundary-clamp", "no-decrease")


def classify(lam_global: float, lam_local: float, band: float = INCONCLUSIVE_BAND) -> str:
    """Decision table from the global (slope a21) and local (slope g'(0)) eigenvalues.

    Positive global eigenvalue: zero-stabilizable. Positive local eigenvalue
    with nonpositive global one: locally zero-stabilizable. Negative local
    eigenvalue: not stabilizable. Anything within ``band`` of zero is left
    undecided.
    """
    if lam_global > band:
        return "zero-stabilizable"
    if abs(lam_global) <= band:
        return "inconclusive"
    if lam_local > band:
        return "locally-zero-stabilizable"
    if lam_local < -band:
        return "not-stabilizable"
    return "inconclusive"


@dataclass(eq=False)
class StabilizationReport:
    region: dict
    gamma: float
    mode: str
    verdict: str
    lambda_gamma: float  # principal eigenvalue with feedback gain gamma on all of Omega
    lambda_omega: float | None = None  # Dirichlet on the region boundary, slope a21
    lambda_omega_local: float | None = None  # same with slope g'(0)
    lambda_T: float | None = None
    lambda_T_local: float | None = None
    decay_rate: float | None = None
    notes: list = field(default_factory=list)

    @property
    def gamma_sufficient(self) -> bool:
        return self.lambda_gamma > INCONCLUSIVE_BAND

    def record(self) -> dict:
        out = dataclasses.asdict(self)
        out["gamma_sufficient"] = self.gamma_sufficient
        return out

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.record(), indent=2, sort_keys=True))
        return Path(path)


def _slopes(spec: ModelSpec):
    g = spec.response if spec.tag == "malaria" else spec.foi
    a21 = g.a21
    local = g.slope_at_zero
    if not (math.isfinite(a21) and math.isfinite(local)):
        raise ModelValidationError("force-of-infection bound violated: a21 and g'(0) must be finite for certification")
    return a21, local


def certify(operators: Operators, spec: ModelSpec, region: ControlRegion, gamma: float,
            mode: str = "homogeneous", periodic_config: PeriodicConfig | None = None,
            seasonality: Seasonality | None = None) -> StabilizationReport:
    if mode not in ("homogeneous", "periodic"):
        raise ModelValidationError(f"unknown certification mode {mode!r}")
    a21, local = _slopes(spec)
    lam_gamma = principal_eigenvalue_homogeneous(operators, spec, region, gamma).eigenvalue
    report = StabilizationReport(region=region.describe(), gamma=float(gamma), mode=mode,
                                 verdict="inconclusive", lambda_gamma=lam_gamma)
    if mode == "homogeneous":
        glob = principal_eigenvalue_dirichlet_complement(operators, spec, region).eigenvalue
        loc = glob if local == a21 else principal_eigenvalue_dirichlet_complement(
            operators, spec, region, slope=local).eigenvalue
        report.lambda_omega, report.lambda_omega_local = glob, loc
    else:
        season = seasonality or spec.seasonality
        glob = periodic_principal_eigenvalue(operators, spec, region, season, a21, periodic_config).eigenvalue
        loc = glob if local == a21 else periodic_principal_eigenvalue(
            operators, spec, region, season, local, periodic_config).eigenvalue
        report.lambda_T, report.lambda_T_local = glob, loc
    report.verdict = classify(glob, loc)
    if local <= a21 and glob > loc + 1e-8 * max(1.0, abs(loc)):
        report.notes.append("ordering violated: global eigenvalue exceeds local one")
    return report


def controlled_model(spec: ModelSpec, gamma: float) -> ModelSpec:
    tag = "periodic" if spec.tag == "periodic" else ("malaria" if spec.tag == "malaria" else "controlled")
    return dataclasses.replace(spec, tag=tag, gamma=float(gamma))


def run_feedback(initial: StateField, operators: Operators, spec: ModelSpec, region: ControlRegion,
                 gamma: float, config: SolverConfig, window: float | None = None,
                 certify_mode: str | None = "homogeneous"):
    """Simulate with ``v = -gamma u1`` on the region and measure the decay rate."""
    model = controlled_model(spec, gamma)
    system = build_system(model, operators, region)
    traj = simulate(initial, system, config)
    if traj.min_value < -1e-12:
        raise NumericalError(f"controlled run lost nonnegativity (min {traj.min_value:.3g})")
    if certify_mode:
        report = certify(operators, spec, region, gamma, mode=certify_mode)
    else:
        lam = principal_eigenvalue_homogeneous(operators, spec, region, gamma).eigenvalue
        report = StabilizationReport(region.describe(), float(gamma), "homogeneous", "inconclusive", lam)
    if np.all(traj.sup_norms[0] == 0):
        report.notes.append("decay rate not applicable: zero initial data")
    else:
        try:
            report.decay_rate = measure_decay_rate(traj, "u1", window)
        except NormUnderflow:
            report.notes.append("decay rate not measured: sup-norm underflow")
    return traj, report


# ---------------------------------------------------------------------------
# objective and adjoint


def compute_R(state, domain, region: ControlRegion | None = None, domain_flag: str = "whole") -> float:
    """``int (u1 + u2)`` at the final time over Omega (``whole``) or omega (``region``)."""
    if isinstance(state, Trajectory):
        U = state.snapshots[-1]
    elif isinstance(state, StateField):
        U = state.values
    else:
        U = np.asarray(state)
    w = domain.weights
    if domain_flag == "region":
        if region is None:
            raise ModelValidationError("region-only functional needs a region")
        w = w * region.chi
    elif domain_flag != "whole":
        raise ModelValidationError(f"unknown domain flag {domain_flag!r}")
    return float(w @ (U[0] + U[1]))


@dataclass(eq=False)
class AdjointSolution:
    times: np.ndarray = field(repr=False)
    p1: np.ndarray = field(repr=False)  # (steps + 1, nodes)
    p2: np.ndarray = field(repr=False)
    terminal: str = "whole"
    p1_solved: np.ndarray | None = field(default=None, repr=False)  # (I + dt L)^-1 p1(t_{n+1})


def solve_adjoint(forward: Trajectory, operators: Operators, spec: ModelSpec, region: ControlRegion,
                  gamma: float, terminal: str = "whole") -> AdjointSolution:
    """Backward solve of the adjoint system from ``p1 = p2 = 1`` at the final time.

    The backward step is implicit in diffusion and explicit elsewhere, with
    ``g'`` taken at the stored forward state of the same time level; it is the
    exact transpose (in the quadrature inner product) of one forward
    backward-Euler-diffusion step.
    """
    if forward.states is None:
        raise MissingDenseTrajectory("adjoint needs a forward run stored at every step")
    if spec.tag not in ("core", "controlled", "periodic"):
        raise ModelValidationError(f"adjoint not available for model {spec.tag!r}")
    domain, K = operators.domain, operators.kernel
    n, N, dt = domain.n, forward.n_steps, forward.dt
    chi = region.chi
    L = sp.csc_matrix(operators.laplacian.matrix)
    solve = splu(sp.identity(n, format="csc") + dt * L).solve
    decay = spec.a11 + gamma * chi
    g = spec.foi
    times = forward.step_times

    p1 = np.empty((N + 1, n))
    p2 = np.empty((N + 1, n))
    ptil = np.empty((N, n))
    if terminal == "whole":
        p1[N] = p2[N] = 1.0
    elif terminal == "region":
        p1[N] = p2[N] = chi
    else:
        raise ModelValidationError(f"unknown adjoint terminal {terminal!r}")

    for k in range(N - 1, -1, -1):
        u1 = forward.states[k, 0]
        slope = g.derivative(u1)
        if spec.tag == "periodic":
            slope = slope * float(spec.seasonality(times[k]))
        q = solve(p1[k + 1])
        ptil[k] = q
        p1[k] = q - dt * decay * q + dt * slope * p2[k + 1]
        p2[k] = p2[k + 1] - dt * spec.a22 * p2[k + 1] + dt * K.apply_transpose(q)
    return AdjointSolution(times=times, p1=p1, p2=p2, terminal=terminal, p1_solved=ptil)


# ---------------------------------------------------------------------------
# shape derivative


@dataclass(eq=False)
class ShapeGradient:
    directions: np.ndarray
    values: np.ndarray
    facet_integrals: np.ndarray = field(repr=False)  # time integral of u1 p1 per facet

    @property
    def gradient(self) -> np.ndarray:
        return self.values

    def to_csv(self, path, region: ControlRegion, iteration: int = 0, append: bool = False):
        mode = "a" if append else "w"
        with Path(path).open(mode) as fh:
            if not append:
                axes = ["x", "y"][: region.domain.dimension]
                fh.write(",".join(["iteration", "facet", *[f"mid_{a}" for a in axes],
                                   *[f"normal_{a}" for a in axes], "weight", "int_u1p1"]) + "\n")
            for m in range(len(region.facet_weights)):
                row = [iteration, m, *region.facet_midpoints[m], *region.facet_normals[m],
                       region.facet_weights[m], self.facet_integrals[m]]
                fh.write(",".join(repr(float(x)) if not isinstance(x, int) else str(x) for x in row) + "\n")


def facet_time_integrals(forward: Trajectory, adjoint: AdjointSolution, region: ControlRegion) -> np.ndarray:
    if forward.states is None:
        raise MissingDenseTrajectory("shape derivative needs the forward run at every step")
    a, b = region.facet_inside, region.facet_outside
    u1 = forward.states[:, 0]
    uf = 0.5 * (u1[:, a] + u1[:, b])
    pf = 0.5 * (adjoint.p1[:, a] + adjoint.p1[:, b])
    return trapezoid(uf * pf, dx=forward.dt, axis=0)


def _terminal_boundary_term(forward, region):
    # moving the integration domain of the region-only functional
    U = forward.states[-1]
    f = U[0] + U[1]
    a, b = region.facet_inside, region.facet_outside
    return 0.5 * (f[a] + f[b])


def shape_derivative(forward: Trajectory, adjoint: AdjointSolution, region: ControlRegion,
                     gamma: float, V) -> float:
    """``gamma * int_0^T int_{d omega} u1 p1 (nu . V) dsigma dt`` with inward ``nu``."""
    V = np.atleast_1d(np.asarray(V, dtype=float))
    proj = region.facet_normals @ V
    integ = facet_time_integrals(forward, adjoint, region)
    value = gamma * float(np.sum(region.facet_weights * proj * integ))
    if adjoint.terminal == "region":
        value -= float(np.sum(region.facet_weights * proj * _terminal_boundary_term(forward, region)))
    return value


def shape_gradient(forward: Trajectory, adjoint: AdjointSolution, region: ControlRegion,
                   gamma: float) -> ShapeGradient:
    dim = region.domain.dimension
    basis = np.eye(dim)
    integ = facet_time_integrals(forward, adjoint, region)
    vals = []
    for V in basis:
        proj = region.facet_normals @ V
        v = gamma * float(np.sum(region.facet_weights * proj * integ))
        if adjoint.terminal == "region":
            v -= float(np.sum(region.facet_weights * proj * _terminal_boundary_term(forward, region)))
        vals.append(v)
    return ShapeGradient(directions=basis, values=np.array(vals), facet_integrals=integ)


# ---------------------------------------------------------------------------
# region placement


@dataclass(frozen=True, eq=False)
class ControlScenario:
    """Everything held fixed while the region moves."""

    operators: Operators
    model: ModelSpec
    gamma: float
    initial: StateField
    solver: SolverConfig
    domain_flag: str = "whole"

    def forward(self, region: ControlRegion) -> Trajectory:
        cfg = dataclasses.replace(self.solver, store_every_step=True)
        system = build_system(controlled_model(self.model, self.gamma), self.operators, region)
        return simulate(self.initial, system, cfg)

    def objective(self, region: ControlRegion, trajectory: Trajectory | None = None) -> float:
        traj = trajectory if trajectory is not None else self.forward(region)
        return compute_R(traj, self.operators.domain, region, self.domain_flag)

    def gradient(self, region: ControlRegion, trajectory: Trajectory | None = None):
        traj = trajectory if trajectory is not None else self.forward(region)
        model = controlled_model(self.model, self.gamma)
        adj = solve_adjoint(traj, self.operators, model, region, self.gamma, terminal=self.domain_flag)
        return shape_gradient(traj, adj, region, self.gamma)


@dataclass(frozen=True)
class OptimizerConfig:
    step: float = 0.1  # initial translation length
    step_min: float | None = None  # default: one grid cell
    grad_tol: float = 1e-8  # relative to R
    max_iter: int = 20
    snap_to_grid: bool = True


@dataclass(eq=False)
class TranslationPath:
    centers: list
    R_values: list
    steps: list
    gradients: list
    termination: str = "max-iter"
    clamped: list = field(default_factory=list)
    final_region: ControlRegion | None = field(default=None, repr=False)

    def record(self) -> dict:
        return {
            "centers": [list(map(float, c)) for c in self.centers],
            "R": [float(r) for r in self.R_values],
            "steps": [float(s) for s in self.steps],
            "gradients": [list(map(float, g)) for g in self.gradients],
            "clamped": list(self.clamped),
            "termination": self.termination,
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.record(), indent=2, sort_keys=True))
        return Path(path)


def _feasible_box(region: ControlRegion):
    d = region.domain
    h = np.asarray(d.spacing)
    half = region.size if region.size.size == d.dimension else np.repeat(region.size, d.dimension)
    lo = half + 2 * h
    hi = np.asarray(d.extents) - half - 2 * h
    return lo, hi


def _displacement(region, direction, eta, snap):
    h = np.asarray(region.domain.spacing)
    lo, hi = _feasible_box(region)
    c = region.center
    disp = direction * eta
    clamped = False
    room_up = hi - c
    room_down = c - lo
    if snap:
        disp = np.round(disp / h) * h
        room_up = np.floor(room_up / h + 1e-9) * h
        room_down = np.floor(room_down / h + 1e-9) * h
    limited = np.clip(disp, -room_down, room_up)
    if np.any(limited != disp):
        clamped = True
    return limited, clamped


def optimize_translation(initial_region: ControlRegion, scenario: ControlScenario,
                         config: OptimizerConfig | None = None, diagnostics=None) -> TranslationPath:
    """Steepest descent on the region center with backtracking.

    Accepted iterates strictly decrease the objective; translations are
    whole grid cells when ``snap_to_grid`` is set, because the indicator only
    changes when a node crosses the region boundary.
    """
    cfg = config or OptimizerConfig()
    step_min = cfg.step_min if cfg.step_min is not None else min(initial_region.domain.spacing)
    region = initial_region
    traj = scenario.forward(region)
    R = scenario.objective(region, traj)
    grad = scenario.gradient(region, traj)
    if diagnostics is not None:
        grad.to_csv(diagnostics, region, iteration=0)
    path = TranslationPath(centers=[region.center.copy()], R_values=[R], steps=[0.0],
                           gradients=[grad.values.copy()], clamped=[False], final_region=region)

    for it in range(1, cfg.max_iter + 1):
        gnorm = float(np.linalg.norm(grad.values))
        if gnorm <= cfg.grad_tol * max(abs(R), 1e-300):
            path.termination = "gradient-small"
            return path
        direction = -grad.values / gnorm
        eta = cfg.step
        accepted = None
        hit_wall = False
        while eta >= step_min * (1 - 1e-12):
            disp, clamped = _displacement(region, direction, eta, cfg.snap_to_grid)
            hit_wall = hit_wall or clamped
            if np.all(disp == 0):
                if clamped:
                    break
                eta /= 2
                continue
            trial = make_region(region.domain, region.shape, region.center + disp, region.size)
            trial_traj = scenario.forward(trial)
            R_trial = scenario.objective(trial, trial_traj)
            if R_trial < R:
                accepted = (trial, trial_traj, R_trial, float(np.linalg.norm(disp)), clamped)
                break
            eta /= 2
        if accepted is None:
            path.termination = "boundary-clamp" if hit_wall else "no-decrease"
            return path
        region, traj, R, taken, clamped = accepted
        grad = scenario.gradient(region, traj)
        if diagnostics is not None:
            grad.to_csv(diagnostics, region, iteration=it, append=True)
        path.centers.append(region.center.copy())
        path.R_values.append(R)
        path.steps.append(taken)
        path.gradients.append(grad.values.copy())
        path.clamped.append(bool(clamped))
        path.final_region = region
    path.termination = "max-iter"
    return path
