"""Principal eigenvalues of the linearized operator.

Three routes:

* :func:`principal_eigenvalue_direct` -- shifted inverse iteration on the
  dense operator. The operator is a Z-matrix (nonpositive off-diagonal), so
  ``A - s I`` is inverse-positive for every shift ``s`` below the principal
  eigenvalue. Collatz-Wielandt ratios give a certified lower bound for it
  after every sweep, and the shift is moved up behind that bound.
* :func:`principal_eigenvalue_logistic` -- long-time limit of the logistic
  problem ``y' = -A y + zeta y - (int y) y``; ``int y -> zeta - lambda``.
* :func:`periodic_principal_eigenvalue` -- time-periodic coupled problem on
  the complement of the control region, solved for the ``lambda`` at which
  the period map has multiplier one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .errors import (
    ModelValidationError,
    NoConvergence,
    NonPositiveEigenvector,
    NonPositiveMultiplier,
    NotConverged,
    ZetaTooSmall,
)
from .grid import ControlRegion, restrict_to_complement
from .integrator import ImexStepper, ImexSystem, Operators
from .models import ModelSpec, Seasonality

EIGEN_TOL = 1e-8


@dataclass(eq=False)
class EigenPair:
    eigenvalue: float
    vector: np.ndarray = field(repr=False)  # sup-norm 1, zero on Dirichlet nodes
    residual: float
    method: str
    iterations: int

    def record(self) -> dict:
        return {
            "lambda": self.eigenvalue,
            "residual": self.residual,
            "method": self.method,
            "iterations": self.iterations,
        }


@dataclass(eq=False)
class LogisticEstimate:
    estimate: float
    zeta: float
    y0: float
    horizon: float
    history: np.ndarray = field(repr=False)  # rows (t, int y)
    retries: int = 0
    profile: np.ndarray | None = field(default=None, repr=False)

    def record(self) -> dict:
        return {
            "lambda": self.estimate,
            "method": "logistic",
            "zeta": self.zeta,
            "y0": self.y0,
            "horizon": self.horizon,
            "iterations": int(len(self.history)),
            "retries": self.retries,
            "residual": float(abs(self.history[-1, 1] - self.history[-2, 1])),
        }


@dataclass(eq=False)
class PeriodicEigenPair:
    eigenvalue: float
    phases: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)  # (phases, nodes)
    psi: np.ndarray = field(repr=False)
    rho: float  # period-map multiplier of the lambda = 0 evolution
    periodicity_residual: float
    slope: float
    iterations: int

    def record(self) -> dict:
        return {
            "lambda": self.eigenvalue,
            "method": "periodic",
            "slope": self.slope,
            "rho_at_zero": self.rho,
            "residual": self.periodicity_residual,
            "iterations": self.iterations,
        }


# ---------------------------------------------------------------------------
# assembly


def _dense(m):
    if sp.issparse(m):
        return m.toarray()
    if hasattr(m, "matrix"):
        return _dense(m.matrix)
    return np.asarray(m, dtype=float)


def assemble_eigen_operator(L_robin, K, spec: ModelSpec, region: ControlRegion | None, gamma: float,
                            slope: float | None = None) -> np.ndarray:
    """``A = L + a11 I - (slope / a22) K + gamma diag(chi)``; slope defaults to ``a21``."""
    if spec.a22 <= 0:
        raise ModelValidationError("eigen operator needs a22 > 0")
    slope = spec.linear_slope if slope is None else slope
    if not math.isfinite(slope):
        raise ModelValidationError("force-of-infection bound violated: a21 is not finite")
    L = _dense(L_robin)
    n = L.shape[0]
    A = L + spec.a11 * np.eye(n) - (slope / spec.a22) * _dense(K)
    if region is not None and gamma:
        A = A + gamma * np.diag(region.chi)
    return A


# ---------------------------------------------------------------------------
# direct route


def gershgorin_lower(A: np.ndarray) -> float:
    off = np.abs(A).sum(axis=1) - np.abs(np.diag(A))
    return float(np.min(np.diag(A) - off))


def principal_eigenvalue_direct(A, tol: float = 1e-13, max_iter: int = 5000) -> EigenPair:
    """Smallest-real eigenvalue and positive eigenvector of a Z-matrix."""
    A = _dense(A)
    n = A.shape[0]
    off = A - np.diag(np.diag(A))
    if off.max(initial=0.0) > 1e-14 * max(1.0, float(np.abs(A).max())):
        raise NonPositiveEigenvector(
            "operator has positive off-diagonal entries, so no positive principal eigenvector "
            "is guaranteed; check the kernel for negative values"
        )
    sigma = 1.0 + max(0.0, -gershgorin_lower(A))
    shift = -sigma
    scale = max(1.0, float(np.abs(A).max()))
    v = np.ones(n)
    best = (math.inf, None, None)

    for restart in range(4):
        try:
            lu = lu_factor(A - shift * np.eye(n), check_finite=True)
        except (ValueError, np.linalg.LinAlgError):
            sigma *= 2.0
            shift = -sigma
            continue
        refactor_every = 1
        for it in range(1, max_iter + 1):
            x = lu_solve(lu, v)
            pos = v > 0
            ratios = x[pos] / v[pos]
            vmax = float(np.abs(x).max())
            if not np.isfinite(vmax) or vmax == 0:
                break
            v = x / vmax
            lam = float(v @ (A @ v) / (v @ v))
            res = float(np.abs(A @ v - lam * v).max())
            if res < best[0]:
                best = (res, lam, v.copy())
            if res <= tol * scale:
                return _finish(A, v, lam, res, "direct", it + restart * max_iter)
            # certified lower bound of the principal eigenvalue
            rmax = float(ratios.max()) if ratios.size else 0.0
            if rmax > 0 and np.all(x >= 0) and it % refactor_every == 0:
                lower = shift + 1.0 / rmax
                gap = lower - shift
                if gap > 1e-6 * scale:
                    shift = shift + 0.9 * gap
                    lu = lu_factor(A - shift * np.eye(n))
                    refactor_every = min(refactor_every * 2, 16)
        else:
            break
        sigma *= 2.0
        shift = -sigma
        v = np.ones(n)

    res, lam, vbest = best
    if vbest is not None and res <= EIGEN_TOL * scale:
        return _finish(A, vbest, lam, res, "direct", max_iter)
    raise NoConvergence(f"inverse iteration did not converge; best residual {res:.3g}", residual=res)


def _finish(A, v, lam, res, method, iterations) -> EigenPair:
    if v.min() < -1e-10:
        raise NonPositiveEigenvector(
            f"principal eigenvector has negative entries (min {v.min():.3g}); "
            "check the kernel for negative values"
        )
    v = np.maximum(v, 0.0)
    v = v / v.max()
    res = float(np.abs(A @ v - lam * v).max())
    return EigenPair(eigenvalue=lam, vector=v, residual=res, method=method, iterations=iterations)


def principal_eigenvalue_homogeneous(operators: Operators, spec: ModelSpec, region, gamma: float,
                                     slope: float | None = None) -> EigenPair:
    """Principal eigenvalue of the controlled operator on all of Omega."""
    A = assemble_eigen_operator(operators.laplacian, operators.kernel, spec, region, gamma, slope)
    return principal_eigenvalue_direct(A)


def principal_eigenvalue_dirichlet_complement(operators: Operators, spec: ModelSpec, region,
                                              slope: float | None = None) -> EigenPair:
    """Principal eigenvalue on Omega minus closure(omega), zero on the region nodes."""
    comp = restrict_to_complement(operators.laplacian, operators.kernel, region)
    slope = spec.linear_slope if slope is None else slope
    if spec.a22 <= 0:
        raise ModelValidationError("eigen operator needs a22 > 0")
    m = int(comp.free.sum())
    A = comp.diffusion_free.toarray() + spec.a11 * np.eye(m) - (slope / spec.a22) * comp.kernel_free
    pair = principal_eigenvalue_direct(A)
    pair.vector = comp.embed(pair.vector)
    pair.method = "direct-complement"
    return pair


# ---------------------------------------------------------------------------
# logistic route


@dataclass(frozen=True)
class LogisticConfig:
    dt: float | None = None  # default: half the explicit positivity bound
    record_every: float = 0.5
    tol: float = 1e-10
    t_max: float = 5000.0
    max_retries: int = 8
    scheme: str = "backward-euler-diffusion"


def _logistic_run(operators, spec, region, gamma, zeta, y0, cfg, slope):
    domain = operators.domain
    K = operators.kernel.matrix
    chi = region.chi if region is not None else np.zeros(domain.n)
    c = slope / spec.a22
    decay = spec.a11 + gamma * chi
    w = domain.weights

    def reaction(t, U):
        y = U[0]
        return ((-decay + zeta - w @ y) * y + c * (K @ y))[None, :]

    knorm = float(np.abs(K).sum(axis=1).max())
    rate = spec.a11 + gamma + c * knorm + abs(zeta) + max(y0 * domain.measure, abs(zeta))
    dt = cfg.dt if cfg.dt is not None else 0.5 / rate
    system = ImexSystem(("y",), operators.laplacian.unit, (operators.laplacian.d1,), reaction, w)
    stepper = ImexStepper(system, dt, cfg.scheme)
    per_record = max(1, int(round(cfg.record_every / dt)))

    U = np.full((1, domain.n), float(y0))
    t = 0.0
    history = [(0.0, float(w @ U[0]))]
    floor = 1e-12 * max(1.0, y0 * domain.measure)
    while t < cfg.t_max:
        for _ in range(per_record):
            U = stepper.step(U, t)
            t += dt
        mass = float(w @ U[0])
        history.append((t, mass))
        if mass < floor and history[-2][1] > mass:
            raise ZetaTooSmall(f"int y -> 0 with zeta={zeta:.6g}; the eigenvalue is >= zeta")
        # relative test: a mass dying out geometrically must not look settled
        if abs(history[-1][1] - history[-2][1]) <= cfg.tol * abs(mass):
            return np.array(history), t, U[0]
    raise NotConverged(
        f"logistic run not settled by t={t:.6g}",
        residual=abs(history[-1][1] - history[-2][1]),
    )


def principal_eigenvalue_logistic(operators: Operators, spec: ModelSpec, region, gamma: float,
                                  zeta: float | None = None, y0: float = 1.0,
                                  config: LogisticConfig | None = None,
                                  slope: float | None = None) -> LogisticEstimate:
    """Estimate ``lambda_{1,gamma}`` as ``zeta - lim int y``.

    With ``zeta=None`` the shift starts at ``a11 + gamma + 1`` and is
    enlarged whenever the logistic mass dies out.
    """
    cfg = config or LogisticConfig()
    if not y0 > 0:
        raise ModelValidationError("y0 must be positive")
    if spec.a22 <= 0:
        raise ModelValidationError("logistic estimator needs a22 > 0")
    slope = spec.linear_slope if slope is None else slope
    auto = zeta is None
    z = spec.a11 + gamma + 1.0 if auto else float(zeta)
    retries = 0
    while True:
        try:
            history, horizon, profile = _logistic_run(operators, spec, region, gamma, z, y0, cfg, slope)
            break
        except ZetaTooSmall:
            if not auto or retries >= cfg.max_retries:
                raise
            retries += 1
            z = z + max(1.0, abs(z))
    est = z - history[-1, 1]
    return LogisticEstimate(estimate=float(est), zeta=float(z), y0=float(y0), horizon=float(horizon),
                            history=history, retries=retries, profile=profile)


# ---------------------------------------------------------------------------
# periodic route


@dataclass(frozen=True)
class PeriodicConfig:
    steps_per_period: int = 400
    n_phases: int = 8
    tol: float = 1e-12
    max_power_iter: int = 20000


class _PeriodMap:
    """Linear period map of the coupled (phi, psi) problem on the complement."""

    def __init__(self, operators, spec, region, seasonality, slope, cfg):
        comp = restrict_to_complement(operators.laplacian, operators.kernel, region)
        self.comp = comp
        self.L = sp.csc_matrix(comp.diffusion_free)
        self.K = comp.kernel_free
        self.m = self.L.shape[0]
        self.a11, self.a22 = spec.a11, spec.a22
        self.slope = slope
        self.p = seasonality
        self.T = seasonality.period
        self.N = cfg.steps_per_period
        self.dt = self.T / self.N
        self.pt = np.array([float(seasonality(k * self.dt)) for k in range(self.N)])
        self._cache = {}

    def _factor(self, lam):
        # decay is implicit and growth explicit so every step is a positive map
        implicit = max(self.a11 - lam, 0.0)
        eye = sp.identity(self.m, format="csc")
        return splu(eye + self.dt * (self.L + implicit * eye)).solve, max(lam - self.a11, 0.0)

    def propagate(self, lam, phi, psi, record_every=0):
        solve, growth = self._factor(lam)
        dt = self.dt
        frames = []
        for k in range(self.N):
            if record_every and k % record_every == 0:
                frames.append((phi.copy(), psi.copy()))
            new_phi = solve(phi + dt * (growth * phi + self.K @ psi))
            psi = (psi + dt * self.slope * self.pt[k] * phi) / (1.0 + dt * self.a22)
            phi = new_phi
        if record_every:
            frames.append((phi.copy(), psi.copy()))
        return phi, psi, frames

    def monodromy(self, lam):
        m = self.m
        phi = np.hstack([np.eye(m), np.zeros((m, m))])
        psi = np.hstack([np.zeros((m, m)), np.eye(m)])
        phi, psi, _ = self.propagate(lam, phi, psi)
        return np.vstack([phi, psi])

    def multiplier(self, lam, tol, max_iter):
        if lam in self._cache:
            return self._cache[lam]
        M = self.monodromy(lam)
        v = np.ones(M.shape[0])
        rho_old = 0.0
        rho = 0.0
        for it in range(1, max_iter + 1):
            x = M @ v
            rho = float(np.abs(x).max())
            if rho <= 0 or not np.isfinite(rho):
                break
            v = x / rho
            if abs(rho - rho_old) <= tol * rho:
                break
            rho_old = rho
        else:
            rho = float(np.max(np.abs(np.linalg.eigvals(M))))
        if not rho > 0:
            raise NonPositiveMultiplier(f"period-map multiplier {rho:.3g} at lambda={lam:.6g}")
        self._cache[lam] = (rho, v, it)
        return self._cache[lam]


def periodic_principal_eigenvalue(operators: Operators, spec: ModelSpec, region, seasonality: Seasonality,
                                  slope: float, config: PeriodicConfig | None = None) -> PeriodicEigenPair:
    """Principal eigenvalue of the T-periodic problem on Omega minus closure(omega).

    ``slope`` multiplies ``p(t) phi`` in the psi equation: ``a21`` gives the
    global eigenvalue, ``g'(0)`` the local one.
    """
    cfg = config or PeriodicConfig()
    if spec.a22 <= 0:
        raise ModelValidationError("periodic eigenproblem needs a22 > 0")
    if not (math.isfinite(slope) and slope >= 0):
        raise ModelValidationError(f"slope must be finite and >= 0, got {slope}")
    pm = _PeriodMap(operators, spec, region, seasonality, slope, cfg)

    def f(lam):
        return math.log(pm.multiplier(lam, cfg.tol, cfg.max_power_iter)[0])

    rho0 = pm.multiplier(0.0, cfg.tol, cfg.max_power_iter)[0]

    # initial guess: time-averaged coefficient, stationary problem
    pbar = float(np.mean(pm.pt))
    A = pm.L.toarray() + spec.a11 * np.eye(pm.m) - (slope * pbar / spec.a22) * pm.K
    guess = principal_eigenvalue_direct(A).eigenvalue
    step = 0.05 * max(1.0, abs(guess))
    lo, hi = guess - step, guess + step
    evals = 0
    while f(lo) > 0:
        lo -= step
        step *= 2
        evals += 1
        if evals > 60:
            raise NoConvergence("could not bracket the periodic eigenvalue from below")
    step = 0.05 * max(1.0, abs(guess))
    while f(hi) < 0:
        hi += step
        step *= 2
        evals += 1
        if evals > 120:
            raise NoConvergence("could not bracket the periodic eigenvalue from above")
    lam, info = brentq(f, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, full_output=True)

    rho, v, _ = pm.multiplier(lam, cfg.tol, cfg.max_power_iter)
    m = pm.m
    phi0, psi0 = v[:m], v[m:]
    record = max(1, pm.N // cfg.n_phases)
    phiT, psiT, frames = pm.propagate(lam, phi0.copy(), psi0.copy(), record_every=record)
    scale = max(float(np.abs(phi0).max()), float(np.abs(psi0).max()))
    resid = max(float(np.abs(phiT - phi0).max()), float(np.abs(psiT - psi0).max())) / scale
    phases = np.arange(len(frames)) * record * pm.dt
    phi = np.array([pm.comp.embed(fr[0] / scale) for fr in frames])
    psi = np.array([pm.comp.embed(fr[1] / scale) for fr in frames])
    if phi.min() < -1e-12 or psi.min() < -1e-12:
        raise NonPositiveEigenvector("periodic eigenfunction has negative entries")
    return PeriodicEigenPair(
        eigenvalue=float(lam),
        phases=phases,
        phi=phi,
        psi=psi,
        rho=float(rho0),
        periodicity_residual=resid,
        slope=float(slope),
        iterations=int(info.function_calls + evals),
    )
