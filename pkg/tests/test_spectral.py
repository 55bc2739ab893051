import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import line_ops, linear_model
from epiregion.errors import ModelValidationError, NonPositiveEigenvector, ZetaTooSmall
from epiregion.grid import build_domain, build_kernel, assemble_robin_laplacian, make_region
from epiregion.integrator import Operators
from epiregion.models import ForceOfInfection, ModelSpec, Seasonality
from epiregion.spectral import (
    EIGEN_TOL,
    LogisticConfig,
    assemble_eigen_operator,
    periodic_principal_eigenvalue,
    principal_eigenvalue_direct,
    principal_eigenvalue_dirichlet_complement,
    principal_eigenvalue_homogeneous,
    principal_eigenvalue_logistic,
)


def min_real(A):
    return np.linalg.eigvals(A).real.min()


class TestAssembly:
    def test_no_kernel_no_control(self):
        o = line_ops(n=16, amplitude=0.0)
        A = assemble_eigen_operator(o.laplacian, o.kernel, linear_model(a11=0.7), None, 0.0)
        assert np.allclose(A, o.laplacian.matrix.toarray() + 0.7 * np.eye(16))

    def test_hand_assembled_small_case(self):
        d = build_domain(1, [1.0], [8])
        L = assemble_robin_laplacian(d, 0.5, 2.0)
        K = build_kernel(d, "gaussian", 0.3, 1.5)
        region = make_region(d, "interval", [0.5], 0.1)
        spec = linear_model(a11=0.4, a22=2.0, a21=3.0)
        A = assemble_eigen_operator(L, K, spec, region, 5.0)
        h = 1 / 7
        T = np.diag(np.full(8, 2.0)) - np.diag(np.ones(7), 1) - np.diag(np.ones(7), -1)
        T[0, 0] = T[-1, -1] = 2 + 2 * h * 2.0
        T[0, 1] = T[-1, -2] = -2
        expect = 0.5 * T / h**2 + 0.4 * np.eye(8) - 1.5 * K.matrix + 5.0 * np.diag(region.chi)
        assert np.allclose(A, expect, rtol=1e-13, atol=1e-12)

    def test_constant_field_reduction(self):
        d = build_domain(1, [1.0], [16])
        o = Operators(d, assemble_robin_laplacian(d, 0.3, 0.0), build_kernel(d, "delta", amplitude=2.0))
        spec = linear_model(a11=1.0, a22=4.0, a21=1.0)
        pair = principal_eigenvalue_homogeneous(o, spec, None, 0.0)
        assert pair.eigenvalue == pytest.approx(1.0 - 2.0 * 1.0 / 4.0, abs=1e-10)
        assert np.allclose(pair.vector, 1.0)

    def test_a22_zero_rejected(self):
        o = line_ops(n=16)
        with pytest.raises(ModelValidationError):
            assemble_eigen_operator(o.laplacian, o.kernel, ModelSpec(a22=0.0, foi=ForceOfInfection()), None, 0)


class TestDirect:
    def test_scaled_identity(self):
        pair = principal_eigenvalue_direct(2 * np.eye(5))
        assert pair.eigenvalue == pytest.approx(2.0) and np.allclose(pair.vector, 1.0)

    def test_strong_absorption_diffusion(self):
        o = line_ops(n=101, d1=1.0, alpha=1e5, amplitude=0.0)
        pair = principal_eigenvalue_direct(o.laplacian.matrix)
        assert pair.eigenvalue == pytest.approx(np.pi**2, rel=1e-3)
        assert pair.eigenvalue == pytest.approx(min_real(o.laplacian.matrix.toarray()), rel=1e-10)

    @given(st.floats(0.01, 1.0), st.floats(0.0, 20.0), st.floats(0.05, 0.4), st.floats(0.01, 6.0))
    def test_matches_dense_qr(self, d1, alpha, sigma, a21):
        o = line_ops(n=12, d1=d1, alpha=alpha, sigma=sigma)
        A = assemble_eigen_operator(o.laplacian, o.kernel, linear_model(a21=a21), None, 0.0)
        pair = principal_eigenvalue_direct(A)
        assert abs(pair.eigenvalue - min_real(A)) <= 1e-9 * max(1.0, abs(pair.eigenvalue))
        assert pair.residual <= EIGEN_TOL and pair.vector.min() > 0

    def test_negative_kernel_flagged(self):
        A = np.array([[1.0, 5.0], [5.0, 1.0]])  # not a Z-matrix
        with pytest.raises(NonPositiveEigenvector):
            principal_eigenvalue_direct(A)


class TestComplement:
    def test_region_without_nodes_behaves_as_unrestricted(self):
        o = line_ops(n=16)
        spec = linear_model()
        mask = np.zeros(16, dtype=bool)
        from epiregion.grid import restrict_to_complement

        comp = restrict_to_complement(o.laplacian, o.kernel, mask)
        A_r = comp.diffusion_free.toarray() + np.eye(16) - 2 * comp.kernel_free
        full = principal_eigenvalue_homogeneous(o, spec, None, 0.0).eigenvalue
        assert principal_eigenvalue_direct(A_r).eigenvalue == pytest.approx(full, abs=1e-10)

    def test_nested_regions_monotone(self, ops64):
        spec = linear_model()
        lams = [principal_eigenvalue_dirichlet_complement(ops64, spec, make_region(ops64.domain, "interval",
                                                                                   [0.5], w)).eigenvalue
                for w in (0.05, 0.1, 0.2, 0.3)]
        assert all(np.diff(lams) >= -1e-12)

    def test_vector_vanishes_on_region(self, ops64, centered_region):
        pair = principal_eigenvalue_dirichlet_complement(ops64, linear_model(), centered_region)
        assert np.all(pair.vector[centered_region.indicator] == 0)
        assert np.all(pair.vector[~centered_region.indicator] > 0)

    def test_gamma_sweep_barrier(self, ops64, centered_region):
        spec = linear_model()
        top = principal_eigenvalue_dirichlet_complement(ops64, spec, centered_region).eigenvalue
        lams = [principal_eigenvalue_homogeneous(ops64, spec, centered_region, g).eigenvalue
                for g in (0.0, 5.0, 50.0, 500.0)]
        assert all(np.diff(lams) >= -1e-12)
        assert all(lam <= top + 1e-10 for lam in lams)
        gaps = top - np.array(lams)
        assert all(np.diff(gaps) <= 1e-12)


class TestLogistic:
    def test_scalar_analogue(self):
        d = build_domain(1, [1.0], [8])
        o = Operators(d, assemble_robin_laplacian(d, 1.0, 0.0), build_kernel(d, "delta", amplitude=0.0))
        spec = linear_model(a11=0.8)
        est = principal_eigenvalue_logistic(o, spec, None, 0.0, zeta=2.0)
        assert est.estimate == pytest.approx(0.8, abs=1e-8)
        assert est.zeta > est.estimate

    def test_history_settles(self, ops64, centered_region):
        est = principal_eigenvalue_logistic(ops64, linear_model(), centered_region, 5.0)
        assert abs(est.history[-1, 1] - est.history[-2, 1]) <= 1e-8

    def test_explicit_small_zeta_raises(self, ops64, centered_region):
        lam = principal_eigenvalue_homogeneous(ops64, linear_model(), centered_region, 5.0).eigenvalue
        with pytest.raises(ZetaTooSmall):
            principal_eigenvalue_logistic(ops64, linear_model(), centered_region, 5.0, zeta=lam - 0.5,
                                          config=LogisticConfig(t_max=200))

    def test_auto_zeta_retries(self):
        o = line_ops(n=32, amplitude=0.0)
        spec = linear_model(a11=30.0)
        est = principal_eigenvalue_logistic(o, spec, None, 0.0, config=LogisticConfig(t_max=200))
        direct = principal_eigenvalue_homogeneous(o, spec, None, 0.0).eigenvalue
        assert est.estimate == pytest.approx(direct, rel=1e-6)


class TestPeriodic:
    def test_constant_seasonality_reduces(self, ops64, centered_region):
        spec = linear_model()
        per = periodic_principal_eigenvalue(ops64, spec, centered_region, Seasonality(), 2.0)
        ref = principal_eigenvalue_dirichlet_complement(ops64, spec, centered_region).eigenvalue
        assert abs(per.eigenvalue - ref) <= 1e-2
        assert per.periodicity_residual <= 1e-6

    def test_zero_slope_decouples(self, ops64, centered_region):
        spec = linear_model()
        season = Seasonality("cosine", 1.0, 0.7, 2.0)
        per = periodic_principal_eigenvalue(ops64, spec, centered_region, season, 0.0)
        ref = principal_eigenvalue_dirichlet_complement(ops64, spec, centered_region, slope=0.0).eigenvalue
        assert abs(per.eigenvalue - ref) <= 1e-2

    def test_sigmoid_ordering(self, ops64, centered_region):
        g = ForceOfInfection("sigmoid", k=8, alpha_g=1, beta_g=1)
        spec = ModelSpec("periodic", a11=1, a22=1, foi=g, seasonality=Seasonality("cosine", 1, 0.5, 1))
        glob = periodic_principal_eigenvalue(ops64, spec, centered_region, spec.seasonality, g.a21)
        loc = periodic_principal_eigenvalue(ops64, spec, centered_region, spec.seasonality, g.slope_at_zero)
        assert glob.eigenvalue <= loc.eigenvalue
        assert glob.phi.min() >= 0 and glob.psi.min() >= 0

    def test_rejects_bad_slope(self, ops64, centered_region):
        with pytest.raises(ModelValidationError):
            periodic_principal_eigenvalue(ops64, linear_model(), centered_region, Seasonality(), -1.0)
