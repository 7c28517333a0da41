import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hamlearn import (ConstraintMatrix, DensityState, ForwardOperator, HamiltonianSpec,
                      InvalidInputError, Layout, PauliBasis, correlation_matrix,
                      eigenstates, enumerate_k_body, enumerate_k_local_chain,
                      k_matrix, kernel_estimate, spectral_gap, spectral_report,
                      stack_controls, stack_states)
from hamlearn.bhl import cor1_bound, infidelity
from conftest import random_pure, random_spec
from oracles import dense_pauli
from oracles import k_matrix as oracle_k_matrix

XYZ = PauliBasis(["X", "Y", "Z"])
ZERO = DensityState.product_zero(1)


def ground_pair(spec):
    states = eigenstates(spec)
    return states[0][1], states[1][1]


class TestKMatrix:
    def test_maximally_mixed_is_zero(self):
        basis = enumerate_k_body(3, 2)
        assert not np.any(k_matrix(DensityState.maximally_mixed(3), basis).entries)

    def test_single_qubit_zero_state(self):
        want = [[0, -2, 0], [2, 0, 0], [0, 0, 0]]
        np.testing.assert_allclose(k_matrix(ZERO, XYZ).entries, want, atol=1e-14)
        est = kernel_estimate(k_matrix(ZERO, XYZ))
        assert abs(abs(est.vector[2]) - 1) < 1e-12

    @given(st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
    def test_against_dense_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        basis = enumerate_k_body(n, min(n, 2))
        rho = random_pure(n, rng)
        got = k_matrix(DensityState(rho), basis).entries
        np.testing.assert_allclose(got, oracle_k_matrix(rho, basis.labels()), atol=1e-12)
        assert np.max(np.abs(got + got.T)) <= 1e-10
        assert np.max(np.abs(got)) <= 2 + 1e-12

    def test_eigenstate_annihilates_couplings(self, rng):
        spec = random_spec(4, 2, rng)
        for _, rho in eigenstates(spec)[:4]:
            assert np.max(np.abs(k_matrix(rho, spec.basis) @ spec.couplings)) <= 1e-9

    def test_basis_mismatch(self):
        with pytest.raises(InvalidInputError):
            k_matrix(DensityState.product_zero(2), XYZ)

    def test_shape_validation(self):
        with pytest.raises(InvalidInputError):
            ConstraintMatrix(XYZ, np.zeros((2, 2)))


class TestCorrelationMatrix:
    def test_maximally_mixed_identity(self):
        basis = enumerate_k_body(2, 2)
        np.testing.assert_allclose(
            correlation_matrix(DensityState.maximally_mixed(2), basis), np.eye(15), atol=1e-14)

    def test_zero_state(self):
        np.testing.assert_allclose(correlation_matrix(ZERO, XYZ), np.diag([1, 1, 0]), atol=1e-14)

    def test_psd_and_diagonal(self, rng):
        basis = enumerate_k_body(3, 2)
        rho = random_pure(3, rng)
        m = correlation_matrix(DensityState(rho), basis)
        means = np.array([np.trace(dense_pauli(lab) @ rho).real for lab in basis.labels()])
        np.testing.assert_allclose(np.diag(m), 1 - means ** 2, atol=1e-12)
        assert np.linalg.eigvalsh(m).min() > -1e-10


class TestStacking:
    def test_single_state(self, rng):
        k = k_matrix(DensityState(random_pure(2, rng)), enumerate_k_body(2, 2))
        op = stack_states([k])
        assert op.layout is Layout.SINGLE
        np.testing.assert_array_equal(op.assembled, k.entries)

    def test_two_eigenstates_annihilate(self, rng):
        spec = random_spec(3, 2, rng)
        a = stack_states([k_matrix(r, spec.basis) for r in ground_pair(spec)])
        assert a.shape == (2 * spec.basis.m, spec.basis.m)
        assert np.max(np.abs(a @ spec.couplings)) <= 1e-9

    def test_empty_stack(self):
        with pytest.raises(InvalidInputError):
            stack_states([])

    def test_basis_mismatch(self, rng):
        k1 = k_matrix(DensityState.product_zero(2), enumerate_k_body(2, 1))
        k2 = k_matrix(DensityState.product_zero(2), enumerate_k_body(2, 2))
        with pytest.raises(InvalidInputError):
            stack_states([k1, k2])

    def test_weyl_on_random_states(self, rng):
        basis = enumerate_k_body(3, 2)
        for _ in range(10):
            ks = [k_matrix(DensityState(random_pure(3, rng)), basis) for _ in range(3)]
            gaps = [spectral_gap(k) for k in ks]
            assert spectral_gap(stack_states(ks)) >= max(gaps) - 1e-9

    def test_controls_layout(self, rng):
        basis = enumerate_k_body(2, 2)
        k0, k1, k2 = (k_matrix(DensityState(random_pure(2, rng)), basis) for _ in range(3))
        op = stack_controls(k0, [k1, k2])
        m = basis.m
        a = op.assembled
        assert a.shape == (3 * m, 3 * m)
        np.testing.assert_array_equal(a[:m, :m], k0.entries)
        assert not np.any(a[:m, m:])
        np.testing.assert_array_equal(a[m:2 * m, :m], k1.entries)
        np.testing.assert_array_equal(a[m:2 * m, m:2 * m], k1.entries)
        assert not np.any(a[m:2 * m, 2 * m:])
        np.testing.assert_array_equal(a[2 * m:, 2 * m:], k2.entries)
        assert op.row_support(2) == (0, 2)

    def test_controls_without_fields(self, rng):
        k0 = k_matrix(DensityState(random_pure(2, rng)), enumerate_k_body(2, 2))
        np.testing.assert_array_equal(stack_controls(k0, []).assembled, k0.entries)

    def test_controls_steady_states_and_kernel_count(self, rng):
        basis = enumerate_k_local_chain(3, 2)
        c = rng.normal(size=basis.m)
        vs = [rng.normal(size=basis.m) for _ in range(2)]
        k0 = k_matrix(eigenstates(HamiltonianSpec(basis, c))[0][1], basis)
        ks = [k_matrix(eigenstates(HamiltonianSpec(basis, c + v))[0][1], basis) for v in vs]
        op = stack_controls(k0, ks)
        x = np.concatenate([c, *vs])
        assert np.max(np.abs(op @ x)) <= 1e-9
        assert spectral_report(op).kernel_dim_estimate >= 3

    def test_row_block(self, rng):
        basis = enumerate_k_body(2, 2)
        ks = [k_matrix(DensityState(random_pure(2, rng)), basis) for _ in range(3)]
        op = stack_controls(ks[0], ks[1:])
        blk = op.row_block(1)
        assert blk.shape == (basis.m, 3 * basis.m)
        np.testing.assert_array_equal(blk.assembled, op.assembled[basis.m:2 * basis.m])
        with pytest.raises(InvalidInputError):
            op.row_block(3)

    def test_text_roundtrip(self, rng):
        basis = enumerate_k_body(2, 1)
        ks = [k_matrix(DensityState(random_pure(2, rng)), basis) for _ in range(3)]
        op = stack_controls(ks[0], ks[1:])
        back = ForwardOperator.from_text(op.to_text())
        np.testing.assert_array_equal(back.assembled, op.assembled)
        assert back.layout is Layout.MULTI_CONTROL and back.n_fields == 2

    def test_text_requires_header(self):
        with pytest.raises(InvalidInputError):
            ForwardOperator.from_text("1,2\n3,4\n")


class TestSpectral:
    def test_zero_matrix(self):
        rep = spectral_report(ConstraintMatrix(XYZ, np.zeros((3, 3))))
        assert not np.any(rep.singular_values) and rep.gap == 0.0
        assert rep.kernel_dim_estimate == 3

    def test_gap_matches_eigvalsh(self, rng):
        k = k_matrix(DensityState(random_pure(3, rng)), enumerate_k_body(3, 2))
        lam = np.linalg.eigvalsh(k.entries.T @ k.entries)
        rep = spectral_report(k)
        assert rep.gap == pytest.approx(lam[1] - lam[0], abs=1e-10)
        assert np.all(np.diff(rep.singular_values) <= 0)

    def test_wide_matrix_pads_kernel(self):
        rep = spectral_report(np.ones((1, 3)))
        assert rep.kernel_dim_estimate == 2

    def test_non_finite(self):
        from hamlearn import NumericalError
        with pytest.raises(NumericalError):
            spectral_report(np.array([[np.nan, 0], [0, 1]]))


class TestKernelEstimate:
    def test_recovers_couplings(self, rng):
        basis = enumerate_k_local_chain(3, 2)
        spec = HamiltonianSpec(basis, rng.normal(size=basis.m))
        a = stack_states([k_matrix(r, basis) for r in ground_pair(spec)])
        est = kernel_estimate(a, norm_target=np.linalg.norm(spec.couplings),
                              sign_reference=spec.couplings)
        assert 1 - infidelity(est.vector, spec.couplings) >= 1 - 1e-8
        np.testing.assert_allclose(est.vector, spec.couplings, atol=1e-6)

    def test_zero_is_degenerate(self):
        assert kernel_estimate(np.zeros((3, 3))).degenerate

    @given(st.floats(0.01, 100.0))
    def test_scale_invariance(self, alpha):
        # a generic antisymmetric matrix of odd size has a one-dimensional kernel
        g = np.random.default_rng(3).normal(size=(15, 15))
        k = ConstraintMatrix(enumerate_k_body(2, 2), g - g.T)
        assert not kernel_estimate(k).degenerate
        v1 = kernel_estimate(k).vector
        v2 = kernel_estimate(k.scaled(alpha)).vector
        assert abs(abs(v1 @ v2) - 1) < 1e-9

    def test_noisy_infidelity_within_perturbation_bound(self, rng):
        basis = enumerate_k_local_chain(4, 2)
        c = rng.normal(size=basis.m)
        spec = HamiltonianSpec(basis, c)
        k = k_matrix(eigenstates(spec)[0][1], basis).entries
        for eps in (1e-5, 1e-4):
            for _ in range(5):
                e = rng.uniform(-eps, eps, size=k.shape)
                e = np.triu(e, 1) - np.triu(e, 1).T
                noisy = k + e
                gap = spectral_report(noisy).gap
                bound = cor1_bound(basis.m, 0.0, eps, gap, np.abs(c).sum(), np.linalg.norm(c))
                assert infidelity(c, kernel_estimate(noisy).vector) <= bound
