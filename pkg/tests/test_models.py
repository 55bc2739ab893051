import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from epiregion.errors import CapacityExceeded, ModelValidationError, StepTooLarge
from epiregion.grid import build_domain, build_kernel
from epiregion.models import (
    ForceOfInfection,
    ModelSpec,
    RossMacdonaldParams,
    Seasonality,
    ode_core,
    rhs_core,
    rhs_malaria,
    rhs_sir_kendall,
    rossmacdonald_dt_bound,
    rossmacdonald_rhs,
    rossmacdonald_step,
)

valid_foi = st.one_of(
    st.builds(ForceOfInfection, st.just("linear"), k=st.floats(0.1, 10)),
    st.builds(ForceOfInfection, st.just("holling"), k=st.floats(0.1, 10), p=st.just(1.0), q=st.just(1.0),
              alpha_g=st.floats(0.1, 5), beta_g=st.floats(0, 5)),
    st.builds(ForceOfInfection, st.just("sigmoid"), k=st.floats(0.1, 10), alpha_g=st.floats(0.1, 5),
              beta_g=st.floats(0.1, 5)),
    st.builds(ForceOfInfection, st.just("power"), k=st.floats(0.1, 10), p=st.just(1.0)),
)


class TestForceOfInfection:
    def test_examples(self):
        assert ForceOfInfection("linear", k=2)(-1.0) == 0
        assert ForceOfInfection("power", k=1, p=2)(3.0) == 9
        h = ForceOfInfection("holling", k=1, p=1, q=1, alpha_g=1, beta_g=1)
        assert h(1.0) == 0.5
        assert h.a21 == 1.0
        assert np.max(h(np.linspace(1e-6, 50, 10**5)) / np.linspace(1e-6, 50, 10**5)) <= 1.0

    def test_sigmoid_bound_and_slope(self):
        g = ForceOfInfection("sigmoid", k=8, alpha_g=1, beta_g=1)
        x = np.linspace(1e-6, 20, 200001)
        assert g.a21 == pytest.approx(np.max(g(x) / x), rel=1e-6)
        assert g.slope_at_zero == 0.0

    @given(valid_foi)
    def test_h1_holds(self, g):
        assert g.check_admissible() == []

    @given(valid_foi, st.floats(0.05, 5))
    def test_derivative_matches_finite_difference(self, g, x):
        eps = 1e-6 * x
        fd = (g(x + eps) - g(x - eps)) / (2 * eps)
        assert float(g.derivative(x)) == pytest.approx(float(fd), rel=1e-6, abs=1e-9)

    def test_unbounded_ratio_flagged(self):
        assert any("linear bound" in p for p in ForceOfInfection("power", k=1, p=2).check_admissible())
        assert any("violated" in p for p in ForceOfInfection("power", k=1, p=0.5).check_admissible())

    def test_negative_derivative_is_zero(self):
        assert ForceOfInfection("linear", k=2).derivative(-1.0) == 0

    @pytest.mark.parametrize("kw", [dict(family="nope"), dict(k=0), dict(family="holling", alpha_g=0, beta_g=0),
                                    dict(alpha_g=-1)])
    def test_rejects(self, kw):
        with pytest.raises(ModelValidationError):
            ForceOfInfection(**kw)


class TestSeasonality:
    @given(st.floats(0, 100), st.floats(0, 0.99), st.floats(0.1, 10))
    def test_positive_and_periodic(self, t, depth, period):
        p = Seasonality("cosine", 2.0, depth, period)
        assert p(t) > 0
        assert p(t + period) == pytest.approx(p(t), abs=1e-12)

    def test_rejects_depth_one(self):
        with pytest.raises(ModelValidationError):
            Seasonality("cosine", 1.0, 1.0, 1.0)


def _setup(n=12, family="delta", amp=2.0):
    d = build_domain(1, [1.0], [n])
    return d, build_kernel(d, family, 0.2 if family == "gaussian" else None, amp)


class TestCoreRhs:
    def test_origin(self):
        d, K = _setup()
        spec = ModelSpec(a11=1, a22=1, foi=ForceOfInfection("linear", k=2))
        du1, du2 = rhs_core(d, K, spec, None, np.zeros(d.n), np.zeros(d.n))
        assert not du1.any() and not du2.any()

    def test_delta_source(self):
        d, K = _setup(amp=2.0)
        spec = ModelSpec(a11=0, a22=1, foi=ForceOfInfection("linear", k=2))
        du1, _ = rhs_core(d, K, spec, None, np.zeros(d.n), np.ones(d.n))
        assert np.all(du1 == 2.0)

    @pytest.mark.parametrize("family", ["delta", "uniform"])
    @pytest.mark.parametrize("tag", ["core", "periodic"])
    def test_homogeneous_reduction(self, family, tag):
        d, K = _setup(family=family, amp=1.5)
        spec = ModelSpec(tag, a11=0.3, a22=0.7, foi=ForceOfInfection("sigmoid", k=3, alpha_g=1, beta_g=2),
                         seasonality=Seasonality("cosine", 1.0, 0.4, 2.0))
        du1, du2 = rhs_core(d, K, spec, None, np.full(d.n, 0.8), np.full(d.n, 0.25), t=0.3)
        z1, z2 = ode_core(spec, None, 1.5, 0.8, 0.25, t=0.3)
        assert np.allclose(du1, z1, rtol=1e-14) and np.allclose(du2, z2, rtol=1e-14)

    def test_control_term(self):
        d, K = _setup()
        chi = (np.arange(d.n) > 5).astype(float)
        spec = ModelSpec("controlled", a11=0, a22=1, gamma=3, foi=ForceOfInfection("linear", k=1))
        du1, _ = rhs_core(d, K, spec, None, np.ones(d.n), np.zeros(d.n), chi=chi)
        assert np.array_equal(du1, -3 * chi)

    @given(st.lists(st.floats(0, 5), min_size=12, max_size=12), st.lists(st.floats(0, 5), min_size=12, max_size=12))
    def test_quasi_monotone(self, a, b):
        d, K = _setup(family="gaussian", amp=1.0)
        spec = ModelSpec(a11=1, a22=1, foi=ForceOfInfection("holling", k=2, alpha_g=1, beta_g=1))
        u = np.array(a)
        lo = rhs_core(d, K, spec, None, u, u)
        # off-diagonal monotonicity: raising u2 raises du1, raising u1 raises du2
        du1_hi, _ = rhs_core(d, K, spec, None, u, u + np.array(b))
        _, du2_hi = rhs_core(d, K, spec, None, u + np.array(b), u)
        assert np.all(du1_hi >= lo[0] - 1e-12) and np.all(du2_hi >= lo[1] - 1e-12)

    def test_shape_mismatch(self):
        d, K = _setup()
        spec = ModelSpec(a11=1, a22=1, foi=ForceOfInfection())
        with pytest.raises(ModelValidationError):
            rhs_core(d, K, spec, None, np.zeros(3), np.zeros(d.n))


class TestMalaria:
    def _spec(self, C):
        return ModelSpec("malaria", a11=0.5, a22=0.3, capacity=C,
                         response=ForceOfInfection("holling", k=1, alpha_g=1, beta_g=1))

    def test_saturation_and_no_infection(self):
        d, K = _setup(n=8)
        C = np.array([1.0, 2.0, 0.5, 1.5, 0.0, 1.0, 3.0, 0.2])
        spec = self._spec(C)
        _, du2 = rhs_malaria(d, K, spec, np.ones(8), C)
        assert np.allclose(du2, -0.3 * C)
        u2 = 0.5 * C
        _, du2 = rhs_malaria(d, K, spec, np.zeros(8), u2)
        assert np.allclose(du2, -0.3 * u2)

    def test_dense_oracle(self):
        d = build_domain(1, [1.0], [8])
        K = build_kernel(d, "gaussian", 0.3, 1.0)
        C = np.linspace(1, 2, 8)
        spec = self._spec(C)
        u1, u2 = np.linspace(0, 1, 8), np.linspace(0.1, 0.5, 8)
        Kd = np.array([[np.exp(-(xi - xj) ** 2 / (2 * 0.09)) for xj in d.coords[:, 0]] for xi in d.coords[:, 0]])
        Kd = Kd / (d.weights @ Kd)[None, :] * d.weights[None, :]  # unit column integrals, quadrature weights
        du1, du2 = rhs_malaria(d, K, spec, u1, u2)
        assert np.allclose(du1, -0.5 * u1 + Kd @ u2, rtol=1e-12)
        assert np.allclose(du2, -0.3 * u2 + (C - u2) * u1 / (1 + u1), rtol=1e-12)

    def test_capacity_exceeded(self):
        d, K = _setup(n=8)
        spec = self._spec(np.ones(8))
        with pytest.raises(CapacityExceeded):
            rhs_malaria(d, K, spec, np.zeros(8), np.full(8, 1.1))


class TestSir:
    def _spec(self, mu=0.0):
        return ModelSpec("sir_kendall", d2=0.1, d3=0.1, mu=mu, gamma_r=0.4)

    def test_disease_free(self):
        d, K = _setup()
        out = rhs_sir_kendall(d, K, self._spec(), np.ones(d.n), np.zeros(d.n), np.zeros(d.n))
        assert all(not x.any() for x in out)

    def test_local_limit(self):
        d, K = _setup(amp=3.0)
        s, i = np.linspace(0.2, 0.9, d.n), np.linspace(0.0, 0.3, d.n)
        ds, _, _ = rhs_sir_kendall(d, K, self._spec(0.2), s, i, np.zeros(d.n))
        assert np.allclose(ds, -3.0 * i * s + 0.2 * (1 - s))

    def test_population_balance(self):
        d, K = _setup(family="gaussian", amp=1.0)
        rng = np.random.default_rng(3)
        s, i, r = rng.random((3, d.n))
        ds, di, dr = rhs_sir_kendall(d, K, self._spec(0.1), s, i, r)
        assert d.integrate(ds + di + dr) == pytest.approx(0.1 * (d.measure - d.integrate(s + i + r)), rel=1e-12)


class TestRossMacdonald:
    prm = RossMacdonaldParams(a=0.3, b=0.5, c=0.5, H=100, M=1000, r=0.05, mu_m=0.1)

    def test_zero_fixed(self):
        assert rossmacdonald_step(self.prm, 0.0, 0.0, 0.1) == (0.0, 0.0)

    def test_full_saturation(self):
        prm = RossMacdonaldParams(a=0.3, b=0.5, c=0.5, H=100, M=1000, r=1e-300, mu_m=0.1)
        X, _ = rossmacdonald_step(prm, prm.H, 10.0, 0.1)
        assert X == pytest.approx(prm.H, rel=1e-14)

    def test_equilibrium_is_fixed(self):
        p = self.prm

        def resid(X):  # dY = 0 gives Y(X); then dX(X, Y(X))
            Y = p.a / p.H * p.c * X * p.M / (p.mu_m + p.a / p.H * p.c * X)
            return rossmacdonald_rhs(p, X, Y)[0]

        X = brentq(resid, 1e-6, p.H - 1e-9, xtol=1e-14)
        Y = p.a / p.H * p.c * X * p.M / (p.mu_m + p.a / p.H * p.c * X)
        Xn, Yn = rossmacdonald_step(p, X, Y, 0.5 * rossmacdonald_dt_bound(p))
        assert abs(Xn - X) < 1e-8 * p.H and abs(Yn - Y) < 1e-8 * p.M

    def test_step_too_large(self):
        with pytest.raises(StepTooLarge):
            rossmacdonald_step(self.prm, 1.0, 900.0, 100.0)
