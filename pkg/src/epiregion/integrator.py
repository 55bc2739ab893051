"""Implicit-diffusion / explicit-reaction time stepping.

Two schemes:

``backward-euler-diffusion``
    ``(I + dt D L) u' = u + dt R(t, u)``; first order, positivity preserving
    when ``dt`` respects the explicit bound.
``crank-nicolson-diffusion``
    Crank-Nicolson on the diffusion with an explicit trapezoidal
    (predictor-corrector) reaction; second order globally.

A system is anything with an :class:`ImexSystem` description: components,
a unit-diffusivity Laplacian, one diffusivity per component and a reaction
callable. :func:`build_system` produces one for every model tag.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import LinearSolveFailure, ModelValidationError, NormUnderflow, NotConverged
from .grid import ControlRegion, Domain, KernelOperator, RobinOperator
from .models import ModelSpec, rhs_core, rhs_malaria, rhs_sir_kendall

SCHEMES = ("backward-euler-diffusion", "crank-nicolson-diffusion")


@dataclass(frozen=True, eq=False)
class Operators:
    domain: Domain
    laplacian: RobinOperator
    kernel: KernelOperator


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    scheme: str = "backward-euler-diffusion"
    snapshot_stride: int = 0  # 0 keeps only the first and last state
    store_every_step: bool = False
    steady_tol: float = 1e-8

    def __post_init__(self):
        if not self.dt > 0:
            raise ModelValidationError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ModelValidationError(f"end time must be positive, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ModelValidationError(f"unknown scheme {self.scheme!r}")
        if self.snapshot_stride < 0:
            raise ModelValidationError("snapshot stride must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_positivity(self, bound: float):
        if self.dt > bound * (1 + 1e-12):
            raise ModelValidationError(
                f"dt = {self.dt:.6g} exceeds the explicit positivity bound {bound:.6g}"
            )


@dataclass(frozen=True)
class StateField:
    names: tuple[str, ...]
    values: np.ndarray  # (components, nodes)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[self.names.index(name)]

    @classmethod
    def from_fields(cls, **fields) -> "StateField":
        names = tuple(fields)
        return cls(names, np.stack([np.asarray(fields[k], dtype=float) for k in names]))


@dataclass(eq=False)
class ImexSystem:
    names: tuple[str, ...]
    laplacian: sp.spmatrix = field(repr=False)  # unit diffusivity
    diffusivities: tuple[float, ...]
    reaction: Callable[[float, np.ndarray], np.ndarray] = field(repr=False)
    weights: np.ndarray = field(repr=False)
    dt_bound: float = math.inf

    def dt_limit(self, scheme: str) -> float:
        """Positivity bound for ``scheme``; the explicit half of Crank-Nicolson
        also needs ``I - dt/2 d L`` to be a nonnegative matrix."""
        if scheme == SCHEMES[0]:
            return self.dt_bound
        diag = self.laplacian.diagonal().max()
        rates = [d * diag for d in self.diffusivities if d > 0]
        return min([self.dt_bound] + [2.0 / r for r in rates])

    @property
    def n(self) -> int:
        return self.laplacian.shape[0]


def positivity_dt_bound(model: ModelSpec, kernel, gamma: float | None = None) -> float:
    """Largest dt for which the explicit reaction update keeps fields nonnegative."""
    gamma = model.gamma if gamma is None else gamma
    knorm = kernel.norm_inf if hasattr(kernel, "norm_inf") else float(np.abs(kernel).sum(axis=1).max())
    if model.tag == "sir_kendall":
        rate = max(model.mu + knorm, model.mu + model.gamma_r)
    else:
        rate = max(model.a11 + gamma + knorm, model.a22)
    return math.inf if rate == 0 else 1.0 / rate


def build_system(model: ModelSpec, operators: Operators, region: ControlRegion | None = None) -> ImexSystem:
    domain, K = operators.domain, operators.kernel
    chi = region.chi if region is not None else None

    if model.tag == "sir_kendall":
        diff = (operators.laplacian.d1, model.d2, model.d3)

        def reaction(t, U):
            return np.stack(rhs_sir_kendall(domain, K, model, U[0], U[1], U[2]))

    elif model.tag == "malaria":
        diff = (operators.laplacian.d1, 0.0)

        def reaction(t, U):
            return np.stack(rhs_malaria(domain, K, model, U[0], U[1], chi=chi))

    else:
        diff = (operators.laplacian.d1, 0.0)
        g = model.foi

        def reaction(t, U):
            return np.stack(rhs_core(domain, K, model, g, U[0], U[1], t=t, chi=chi))

    if model.controlled and chi is None:
        raise ModelValidationError("controlled model needs a control region")
    return ImexSystem(
        names=model.components,
        laplacian=operators.laplacian.unit,
        diffusivities=diff,
        reaction=reaction,
        weights=domain.weights,
        dt_bound=positivity_dt_bound(model, K),
    )


class ImexStepper:
    """Prefactors the implicit diffusion matrices once per (dt, scheme)."""

    def __init__(self, system: ImexSystem, dt: float, scheme: str = SCHEMES[0]):
        if scheme not in SCHEMES:
            raise ModelValidationError(f"unknown scheme {scheme!r}")
        self.system = system
        self.dt = dt
        self.scheme = scheme
        theta = 1.0 if scheme == SCHEMES[0] else 0.5
        eye = sp.identity(system.n, format="csc")
        L = sp.csc_matrix(system.laplacian)
        self._solve = {}
        self._explicit = {}
        for d in set(system.diffusivities):
            if d <= 0:
                continue
            try:
                lu = splu(eye + theta * dt * d * L)
            except RuntimeError as exc:  # singular factor
                raise LinearSolveFailure(f"diffusion matrix factorization failed: {exc}") from exc
            self._solve[d] = lu.solve
            if theta < 1:
                self._explicit[d] = (eye - (1 - theta) * dt * d * L).tocsr()

    def _implicit(self, rhs: np.ndarray) -> np.ndarray:
        out = rhs.copy()
        for c, d in enumerate(self.system.diffusivities):
            if d > 0:
                out[c] = self._solve[d](rhs[c])
        if not np.all(np.isfinite(out)):
            raise LinearSolveFailure("non-finite values after diffusion solve")
        return out

    def _half_explicit(self, U: np.ndarray) -> np.ndarray:
        out = U.copy()
        for c, d in enumerate(self.system.diffusivities):
            if d > 0:
                out[c] = self._explicit[d] @ U[c]
        return out

    def step(self, U: np.ndarray, t: float) -> np.ndarray:
        dt, R = self.dt, self.system.reaction
        r0 = R(t, U)
        if self.scheme == SCHEMES[0]:
            return self._implicit(U + dt * r0)
        base = self._half_explicit(U)
        pred = self._implicit(base + dt * r0)
        return self._implicit(base + 0.5 * dt * (r0 + R(t + dt, pred)))


def step(state: StateField, t: float, system: ImexSystem, config: SolverConfig) -> StateField:
    """Advance one step; builds a fresh stepper, so prefer :func:`simulate` in loops."""
    stepper = ImexStepper(system, config.dt, config.scheme)
    return StateField(state.names, stepper.step(state.values, t))


@dataclass(eq=False)
class Trajectory:
    names: tuple[str, ...]
    dt: float
    scheme: str
    times: np.ndarray  # snapshot times
    snapshots: np.ndarray = field(repr=False)  # (snapshots, components, nodes)
    step_times: np.ndarray = field(repr=False)
    sup_norms: np.ndarray = field(repr=False)  # (steps + 1, components)
    integrals: np.ndarray = field(repr=False)
    min_value: float = 0.0
    states: np.ndarray | None = field(default=None, repr=False)  # every step, if stored

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def final(self) -> StateField:
        return StateField(self.names, self.snapshots[-1])

    @property
    def n_steps(self) -> int:
        return len(self.step_times) - 1

    def to_csv(self, path):
        path = Path(path)
        header = ["t"] + [f"sup_{n}" for n in self.names] + [f"int_{n}" for n in self.names]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.step_times):
                w.writerow([_fmt(t)] + [_fmt(v) for v in self.sup_norms[k]] + [_fmt(v) for v in self.integrals[k]])
        return path

    def export_snapshots(self, directory, domain: Domain) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k, t in enumerate(self.times):
            p = directory / f"snapshot_{k:04d}.csv"
            write_field_csv(p, domain, dict(zip(self.names, self.snapshots[k])), comment=f"t={_fmt(t)}")
            paths.append(p)
        return paths


def _fmt(x) -> str:
    return repr(float(x))


def write_field_csv(path, domain: Domain, fields: dict, comment: str | None = None):
    axes = ["x", "y"][: domain.dimension]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if comment:
            fh.write(f"# {comment}\n")
        w.writerow(["node", *axes, *fields])
        cols = [np.asarray(v) for v in fields.values()]
        for i in range(domain.n):
            w.writerow([i, *(_fmt(c) for c in domain.coords[i]), *(_fmt(c[i]) for c in cols)])


def read_field_csv(path, column: str) -> np.ndarray:
    with Path(path).open() as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    data = sorted(((int(r["node"]), float(r[column])) for r in reader), key=lambda x: x[0])
    return np.array([v for _, v in data])


def _as_array(initial, system: ImexSystem) -> np.ndarray:
    U = initial.values if isinstance(initial, StateField) else np.asarray(initial, dtype=float)
    U = np.array(U, dtype=float)
    if U.shape != (len(system.names), system.n):
        raise ModelValidationError(f"initial state shape {U.shape} does not match system")
    return U


def simulate(initial, system: ImexSystem, config: SolverConfig, check_bound: bool = True) -> Trajectory:
    U = _as_array(initial, system)
    if np.any(U < 0):
        raise ModelValidationError("nonnegativity violated: initial data must be nonnegative")
    if check_bound:
        config.check_positivity(system.dt_limit(config.scheme))
    stepper = ImexStepper(system, config.dt, config.scheme)
    n = config.n_steps
    w = system.weights
    step_times = config.dt * np.arange(n + 1)
    sup = np.empty((n + 1, len(system.names)))
    ints = np.empty_like(sup)
    states = np.empty((n + 1,) + U.shape) if config.store_every_step else None
    snaps, snap_t = [], []
    stride = config.snapshot_stride
    vmin = float(U.min())

    for k in range(n + 1):
        if k > 0:
            U = stepper.step(U, step_times[k - 1])
            vmin = min(vmin, float(U.min()))
        sup[k] = np.abs(U).max(axis=1)
        ints[k] = U @ w
        if states is not None:
            states[k] = U
        if k == 0 or k == n or (stride and k % stride == 0):
            snaps.append(U.copy())
            snap_t.append(step_times[k])

    return Trajectory(
        names=system.names,
        dt=config.dt,
        scheme=config.scheme,
        times=np.array(snap_t),
        snapshots=np.array(snaps),
        step_times=step_times,
        sup_norms=sup,
        integrals=ints,
        min_value=vmin,
        states=states,
    )


def measure_decay_rate(trajectory: Trajectory, field: str = "u1", window: float | None = None) -> float:
    """Least-squares decay rate of the sup-norm over the trailing time window
    (default: last half of the run)."""
    t = trajectory.step_times
    norms = trajectory.sup_norms[:, trajectory.index(field)]
    window = 0.5 * t[-1] if window is None else window
    sel = t >= t[-1] - window - 1e-12
    if np.any(norms[sel] < 1e-300):
        raise NormUnderflow("sup-norm underflows inside the fitting window")
    slope = np.polyfit(t[sel], np.log(norms[sel]), 1)[0]
    return float(-slope)


def steady_state(initial, system: ImexSystem, config: SolverConfig, check_bound: bool = True):
    """Integrate until ``||U(t+dt) - U(t)||_inf / dt < config.steady_tol``."""
    U = _as_array(initial, system)
    if check_bound:
        config.check_positivity(system.dt_limit(config.scheme))
    stepper = ImexStepper(system, config.dt, config.scheme)
    t, residual = 0.0, math.inf
    for k in range(config.n_steps):
        Un = stepper.step(U, t)
        residual = float(np.abs(Un - U).max()) / config.dt
        U, t = Un, t + config.dt
        if residual < config.steady_tol:
            return StateField(system.names, U), residual
    raise NotConverged(f"no steady state by t={t:.6g}; last residual {residual:.3g}", residual=residual)
