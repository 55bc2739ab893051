"""Forces of infection, seasonality and reaction terms of the model variants.

Diffusion is never included here; the integrator handles it implicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityExceeded, ModelValidationError, StepTooLarge

FOI_FAMILIES = ("linear", "power", "holling", "sigmoid")
MODEL_TAGS = ("core", "controlled", "periodic", "malaria", "sir_kendall")


@dataclass(frozen=True)
class ForceOfInfection:
    """``g(x) = k x^p / (alpha_g + beta_g x^q)`` and its special cases.

    ``linear`` is ``k x``, ``power`` is ``k x^p``, ``sigmoid`` fixes
    ``p = q = 2``. ``g`` vanishes for ``x <= 0``.
    """

    family: str = "linear"
    k: float = 1.0
    p: float = 1.0
    q: float = 1.0
    alpha_g: float = 1.0
    beta_g: float = 0.0

    def __post_init__(self):
        if self.family not in FOI_FAMILIES:
            raise ModelValidationError(f"unknown force-of-infection family {self.family!r}")
        if self.family == "sigmoid":
            object.__setattr__(self, "p", 2.0)
            object.__setattr__(self, "q", 2.0)
        if self.family == "linear":
            object.__setattr__(self, "p", 1.0)
        if not (self.k > 0 and self.p > 0 and self.q > 0):
            raise ModelValidationError("force of infection needs k, p, q > 0")
        if self.alpha_g < 0 or self.beta_g < 0:
            raise ModelValidationError("saturation constants must be >= 0")
        if self.family in ("holling", "sigmoid") and self.alpha_g == 0 and self.beta_g == 0:
            raise ModelValidationError("holling response needs alpha_g + beta_g > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        if self.family == "linear":
            out = self.k * xp
        elif self.family == "power":
            out = self.k * xp**self.p
        else:
            out = self.k * xp**self.p / (self.alpha_g + self.beta_g * xp**self.q)
        return np.where(x > 0, out, 0.0)

    def derivative(self, x):
        """Derivative, taken one-sided (zero) for ``x <= 0``."""
        x = np.asarray(x, dtype=float)
        xp = np.where(x > 0, x, 1.0)
        k, p, q = self.k, self.p, self.q
        if self.family == "linear":
            out = np.full_like(xp, k)
        elif self.family == "power":
            out = k * p * xp ** (p - 1)
        else:
            a, b = self.alpha_g, self.beta_g
            out = k * xp ** (p - 1) * (p * a + (p - q) * b * xp**q) / (a + b * xp**q) ** 2
        return np.where(x > 0, out, 0.0)

    @property
    def slope_at_zero(self) -> float:
        """Right derivative ``g'(0+)``; ``inf`` when ``p < 1``."""
        k, p = self.k, self.p
        if self.family == "linear":
            return k
        if p < 1:
            return math.inf
        if p > 1:
            return 0.0
        if self.family == "power":
            return k
        return k / self.alpha_g if self.alpha_g > 0 else math.inf

    @property
    def a21(self) -> float:
        """``sup_{x>0} g(x) / x`` in closed form (``inf`` if unbounded)."""
        k, p, q, a, b = self.k, self.p, self.q, self.alpha_g, self.beta_g
        if self.family == "linear":
            return k
        if self.family == "power":
            return k if p == 1 else math.inf
        if p < 1:
            return math.inf
        if p == 1:
            return k / a if a > 0 else math.inf
        # p > 1: g(x)/x = k x^(p-1) / (a + b x^q)
        if b == 0 or q < p - 1:
            return math.inf
        if q == p - 1:
            return k / b
        if a == 0:
            return math.inf
        xq = (p - 1) * a / (b * (q - p + 1))
        x = xq ** (1.0 / q)
        return k * x ** (p - 1) / (a + b * xq)

    def check_admissible(self, x_max: float = 10.0, samples: int = 1000) -> list[str]:
        """Sampled admissibility checks on g; returns human-readable violations."""
        problems = []
        neg = -np.linspace(x_max / samples, x_max, samples)
        if np.any(self(neg) != 0):
            problems.append("vanishing violated: g(x) != 0 for some x <= 0")
        x = np.linspace(0.0, x_max, samples)
        gx = self(x)
        drops = np.flatnonzero(np.diff(gx) < -1e-12 * max(1.0, float(np.abs(gx).max())))
        if drops.size:
            problems.append(f"monotonicity violated: g decreases at x={x[drops[0] + 1]:.6g}")
        a21 = self.a21
        if not math.isfinite(a21):
            problems.append("linear bound violated: g(x)/x is unbounded, no finite a21")
        else:
            bad = np.flatnonzero(gx > a21 * x * (1 + 1e-12) + 1e-300)
            if bad.size:
                problems.append(f"linear bound violated: g(x) > a21*x at x={x[bad[0]]:.6g}")
        if self.family == "power" and self.p < 1:
            problems.append("Lipschitz violated: g is not Lipschitz at 0 for p < 1")
        return problems


@dataclass(frozen=True)
class Seasonality:
    """``p(t) = mean * (1 + depth * cos(2 pi t / period))``; constant if depth is 0."""

    family: str = "constant"
    mean: float = 1.0
    depth: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        if self.family not in ("constant", "cosine"):
            raise ModelValidationError(f"unknown seasonality family {self.family!r}")
        if not self.mean > 0:
            raise ModelValidationError("seasonality mean must be positive")
        if not 0 <= self.depth < 1:
            raise ModelValidationError("modulation depth must lie in [0, 1)")
        if not self.period > 0:
            raise ModelValidationError("period must be positive")

    def __call__(self, t):
        if self.family == "constant":
            return self.mean * np.ones_like(np.asarray(t, dtype=float))
        # phase reduction keeps p(t + T) = p(t) to roundoff for any t
        phase = np.mod(np.asarray(t, dtype=float), self.period) / self.period
        return self.mean * (1.0 + self.depth * np.cos(2.0 * np.pi * phase))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    tag: str = "core"
    a11: float = 0.0
    a22: float = 1.0
    gamma: float = 0.0
    foi: ForceOfInfection | None = None
    seasonality: Seasonality = field(default_factory=Seasonality)
    # malaria
    capacity: np.ndarray | None = field(default=None, repr=False)
    response: ForceOfInfection | None = None
    # Kendall SIR
    d2: float = 0.0
    d3: float = 0.0
    mu: float = 0.0
    gamma_r: float = 0.0

    def __post_init__(self):
        if self.tag not in MODEL_TAGS:
            raise ModelValidationError(f"unknown model tag {self.tag!r}")
        for name in ("a11", "a22", "gamma", "d2", "d3", "mu", "gamma_r"):
            if not getattr(self, name) >= 0:
                raise ModelValidationError(f"{name} must be >= 0")
        if self.capacity is not None and np.any(np.asarray(self.capacity) < 0):
            raise ModelValidationError("human capacity C(x) must be >= 0")
        if self.tag == "malaria" and (self.capacity is None or self.response is None):
            raise ModelValidationError("malaria model needs capacity and response")
        if self.tag in ("core", "controlled", "periodic") and self.foi is None:
            raise ModelValidationError(f"{self.tag} model needs a force of infection")

    @property
    def components(self) -> tuple[str, ...]:
        return ("s", "i", "r") if self.tag == "sir_kendall" else ("u1", "u2")

    @property
    def controlled(self) -> bool:
        return self.tag in ("controlled", "periodic") and self.gamma > 0

    @property
    def linear_slope(self) -> float:
        """The ``a21`` bound of the incidence response."""
        g = self.response if self.tag == "malaria" else self.foi
        return g.a21


def _check_shapes(domain, *fields):
    for f in fields:
        if np.shape(f) != (domain.n,):
            raise ModelValidationError(f"field shape {np.shape(f)} does not match {domain.n} nodes")


def _kmat(K):
    return K.matrix if hasattr(K, "matrix") else np.asarray(K)


def rhs_core(domain, K, spec: ModelSpec, g, u1, u2, t: float = 0.0, chi=None):
    """Reaction parts of the man-environment system (core / controlled / periodic)."""
    _check_shapes(domain, u1, u2)
    g = spec.foi if g is None else g
    du1 = -spec.a11 * u1 + _kmat(K) @ u2
    if spec.controlled and chi is not None:
        du1 = du1 - spec.gamma * chi * u1
    incidence = g(u1)
    if spec.tag == "periodic":
        incidence = spec.seasonality(t) * incidence
    du2 = -spec.a22 * u2 + incidence
    return du1, du2


def rhs_malaria(domain, K, spec: ModelSpec, u1, u2, chi=None, tol: float = 1e-9):
    _check_shapes(domain, u1, u2)
    C = np.asarray(spec.capacity)
    excess = u2 - C
    if np.any(excess > tol):
        i = int(np.argmax(excess))
        raise CapacityExceeded(f"u2 exceeds capacity C at node {i} by {excess[i]:.3g}")
    du1 = -spec.a11 * u1 + _kmat(K) @ u2
    if spec.gamma > 0 and chi is not None:
        du1 = du1 - spec.gamma * chi * u1
    du2 = -spec.a22 * u2 + (C - u2) * spec.response(u1)
    return du1, du2


def rhs_sir_kendall(domain, K, spec: ModelSpec, s, i, r):
    """Kendall's SIR with vital dynamics; mass action ``k i s`` becomes ``(K i) s``."""
    _check_shapes(domain, s, i, r)
    force = _kmat(K) @ i
    ds = -force * s + spec.mu - spec.mu * s
    di = force * s - (spec.mu + spec.gamma_r) * i
    dr = spec.gamma_r * i - spec.mu * r
    return ds, di, dr


def ode_core(spec: ModelSpec, g, a12: float, z1: float, z2: float, t: float = 0.0):
    """Spatially homogeneous counterpart of ``rhs_core`` (kernel mass ``a12``)."""
    g = spec.foi if g is None else g
    incidence = float(g(z1))
    if spec.tag == "periodic":
        incidence *= float(spec.seasonality(t))
    return -spec.a11 * z1 + a12 * z2, -spec.a22 * z2 + incidence


# ---------------------------------------------------------------------------
# Ross-Macdonald


@dataclass(frozen=True)
class RossMacdonaldParams:
    a: float
    b: float
    c: float
    H: float
    M: float
    r: float
    mu_m: float

    def __post_init__(self):
        for name in ("a", "b", "c", "H", "M", "r", "mu_m"):
            if not getattr(self, name) > 0:
                raise ModelValidationError(f"Ross-Macdonald parameter {name} must be positive")
        if self.b > 1 or self.c > 1:
            raise ModelValidationError("b and c are proportions in (0, 1]")


def rossmacdonald_rhs(prm: RossMacdonaldParams, X: float, Y: float):
    dX = -prm.r * X + prm.a / prm.H * prm.b * (prm.H - X) * Y
    dY = -prm.mu_m * Y + prm.a / prm.H * prm.c * X * (prm.M - Y)
    return dX, dY


def rossmacdonald_dt_bound(prm: RossMacdonaldParams) -> float:
    """Step size below which the box ``[0, H] x [0, M]`` stays invariant."""
    return 1.0 / max(prm.r + prm.a * prm.b * prm.M / prm.H, prm.mu_m + prm.a * prm.c)


def rossmacdonald_step(prm: RossMacdonaldParams, X: float, Y: float, dt: float):
    """One classical RK4 step."""
    if not dt > 0:
        raise ModelValidationError("dt must be positive")
    if not (0 <= X <= prm.H and 0 <= Y <= prm.M):
        raise ModelValidationError("state outside [0, H] x [0, M]")
    k1 = rossmacdonald_rhs(prm, X, Y)
    k2 = rossmacdonald_rhs(prm, X + 0.5 * dt * k1[0], Y + 0.5 * dt * k1[1])
    k3 = rossmacdonald_rhs(prm, X + 0.5 * dt * k2[0], Y + 0.5 * dt * k2[1])
    k4 = rossmacdonald_rhs(prm, X + dt * k3[0], Y + dt * k3[1])
    Xn = X + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    Yn = Y + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    eps = 1e-12
    if not (-eps * prm.H <= Xn <= prm.H * (1 + eps) and -eps * prm.M <= Yn <= prm.M * (1 + eps)):
        raise StepTooLarge(
            f"RK4 step left the invariant box (X={Xn:.6g}, Y={Yn:.6g}); "
            f"dt bound is {rossmacdonald_dt_bound(prm):.6g}"
        )
    return Xn, Yn
