import numpy as np
import pytest

from quadbt import (
    GramianFactor,
    ShiftSet,
    compress_factor,
    compute_shifts,
    observability_rhs_factor,
    solve_lyapunov_adi,
    solve_lyapunov_dense,
)
from quadbt.errors import SingularOperatorError, UnstableSystemError
from quadbt.lyapunov import _adi_objective

from conftest import random_stable


class TestDenseSolver:
    def test_negative_identity(self):
        G = solve_lyapunov_dense(-np.eye(3), np.eye(3))
        assert np.allclose(G, np.eye(3) / 2.0, atol=1e-14)

    def test_diagonal_formula(self):
        # G_ij = F_ij / |lam_i + lam_j| for diagonal stable A
        lam = np.array([-1.0, -2.0])
        F = np.ones((2, 2))
        expected = F / np.abs(lam[:, None] + lam[None, :])
        G = solve_lyapunov_dense(np.diag(lam), F)
        assert np.allclose(G, expected, rtol=1e-14)

    def test_random_residual(self):
        A, B = random_stable(50, seed=20)
        F = B @ B.T
        G = solve_lyapunov_dense(A, F)
        res = np.linalg.norm(A @ G + G @ A.T + F) / np.linalg.norm(F)
        assert res <= 1e-10

    def test_solution_nearly_positive_semidefinite(self):
        A, B = random_stable(30, seed=21)
        G = solve_lyapunov_dense(A, B @ B.T)
        lam = np.linalg.eigvalsh(G)
        assert lam.min() >= -1e-12 * np.abs(lam).max()
        assert np.array_equal(G, G.T)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableSystemError):
            solve_lyapunov_dense(np.eye(2), np.eye(2))

    def test_singular_operator_distinct_error(self):
        # eigenvalues +-i sum to zero pairwise
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        with pytest.raises(SingularOperatorError):
            solve_lyapunov_dense(A, np.eye(2))

    def test_asymmetric_rhs_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            solve_lyapunov_dense(-np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestShifts:
    def test_single_point_spectrum(self):
        shifts = compute_shifts(-np.eye(4))
        assert np.allclose(shifts.shifts, -1.0)

    def test_two_point_spectrum_matches_exhaustive_minimum(self):
        shifts = compute_shifts(np.diag([-1.0, -10.0]), num_shifts=2)
        got = sorted(shifts.shifts.real)
        # exhaustive minimization over ordered pairs from the 2-point set
        pts = np.array([-1.0, -10.0], dtype=complex)
        best, best_val = None, np.inf
        for a in pts:
            for b in pts:
                val = np.max(_adi_objective([a, b], pts))
                if val < best_val:
                    best, best_val = sorted([a.real, b.real]), val
        assert got == pytest.approx(best)
        assert best_val == pytest.approx(0.0, abs=1e-14)

    def test_left_half_plane(self):
        A, B = random_stable(100, seed=22)
        shifts = compute_shifts(A, start=B[:, 0])
        assert np.all(shifts.shifts.real < 0)
        assert len(shifts) <= 16

    def test_conjugate_pairs_adjacent(self):
        A, B = random_stable(60, seed=23)
        s = compute_shifts(A, start=B[:, 0]).shifts
        i = 0
        while i < s.size:
            if s[i].imag != 0.0:
                assert s[i + 1] == np.conj(s[i])
                i += 2
            else:
                i += 1

    def test_shift_set_validation(self):
        with pytest.raises(ValueError):
            ShiftSet(np.array([1.0 + 0j]))
        with pytest.raises(ValueError):
            ShiftSet(np.array([-1.0 + 2j, -1.0 + 2j]))
        ShiftSet(np.array([-1.0 + 2j, -1.0 - 2j, -3.0 + 0j]))


class TestAdi:
    def test_one_step_closed_form(self, rng):
        # single shift -1 on A = -I solves exactly in one iteration:
        # V1 = (A - I)^{-1} b = -b/2, Z Z^T = b b^T / 2
        b = rng.standard_normal((5, 1))
        factor = solve_lyapunov_adi(-np.eye(5), b, [-1.0], max_iter=1, tol=0.0)
        assert np.allclose(factor.gramian(), b @ b.T / 2.0, atol=1e-14)
        assert factor.residual_norm <= 1e-14

    def test_zero_rhs(self):
        factor = solve_lyapunov_adi(-np.eye(4), np.zeros((4, 2)), [-1.0])
        assert np.array_equal(factor.Z, np.zeros((4, 2)))
        assert factor.residual_norm == 0.0

    def test_column_count_per_iteration(self):
        A = np.diag([-1.0, -2.0, -4.0, -8.0])
        Z_F = np.ones((4, 2))
        factor = solve_lyapunov_adi(A, Z_F, [-1.0, -4.0], max_iter=5, tol=0.0)
        assert factor.rank == 5 * 2

    def test_matches_dense_solution(self):
        A, B = random_stable(100, seed=24)
        G = solve_lyapunov_dense(A, B @ B.T)
        shifts = compute_shifts(A, start=B[:, 0])
        factor = solve_lyapunov_adi(A, B, shifts, max_iter=30, tol=0.0)
        err = np.linalg.norm(factor.gramian() - G) / np.linalg.norm(G)
        assert err <= 1e-6

    @pytest.mark.parametrize("seed", range(10))
    def test_converged_adi_agrees_with_dense(self, seed):
        n = 40 + 6 * seed
        A, B = random_stable(n, seed=100 + seed)
        G = solve_lyapunov_dense(A, B @ B.T)
        shifts = compute_shifts(A, start=B[:, 0])
        factor = solve_lyapunov_adi(A, B, shifts, max_iter=60, tol=1e-8)
        assert factor.residual_norm <= 1e-8
        err = np.linalg.norm(factor.gramian() - G) / np.linalg.norm(G)
        assert err <= 10 * 1e-8

    @pytest.mark.parametrize("seed", [31, 32, 33])
    def test_residual_monotone_nonincreasing(self, seed):
        A, B = random_stable(80, seed=seed)
        shifts = compute_shifts(A, start=B[:, 0])
        factor = solve_lyapunov_adi(A, B, shifts, max_iter=40, tol=0.0)
        res = factor.residuals
        assert all(res[i + 1] <= res[i] * (1.0 + 1e-8) for i in range(len(res) - 1))

    def test_positive_shift_rejected(self):
        with pytest.raises(ValueError):
            solve_lyapunov_adi(-np.eye(3), np.ones((3, 1)), [1.0])

    def test_complex_pair_real_arithmetic(self):
        # rotation-heavy spectrum forces complex shifts; factor stays real
        A = np.kron(np.eye(3), np.array([[-0.3, 2.0], [-2.0, -0.3]])) - np.diag(
            [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
        )
        B = np.ones((6, 1))
        G = solve_lyapunov_dense(A, B @ B.T)
        shifts = compute_shifts(A, start=B[:, 0])
        assert np.any(shifts.shifts.imag != 0)
        factor = solve_lyapunov_adi(A, B, shifts, max_iter=40, tol=0.0)
        assert factor.Z.dtype.kind == "f"
        err = np.linalg.norm(factor.gramian() - G) / np.linalg.norm(G)
        assert err <= 1e-8


class TestObservabilityRhsFactor:
    def test_scalar_hand_case(self):
        # A=-1, B=1, M=1: P=1/2, S=-2; factor (-sqrt(2), 2), squared 6
        S = np.array([[-2.0]])
        Z_P = np.array([[np.sqrt(0.5)]])
        M = np.array([[1.0]])
        B = np.array([[1.0]])
        Z = observability_rhs_factor(S, Z_P, M, B)
        assert np.allclose(Z, [[-np.sqrt(2.0), 2.0]])
        assert (Z @ Z.T)[0, 0] == pytest.approx(6.0)

    def test_zero_output_matrix(self):
        Z = observability_rhs_factor(np.zeros((3, 3)), np.ones((3, 2)), np.zeros((3, 3)), np.ones((3, 1)))
        assert np.array_equal(Z, np.zeros((3, 3)))

    def test_full_rank_factor_exact(self, rng):
        from quadbt import symmetric_factor, symmetrize, to_quadratic_bilinear
        from conftest import random_quadratic_system

        sys = random_quadratic_system(30, seed=40)
        qb = to_quadratic_bilinear(sys)
        P = solve_lyapunov_dense(sys.A, sys.B @ sys.B.T)
        Z_P = symmetric_factor(P)
        Z = observability_rhs_factor(qb.S, Z_P, sys.M, sys.B)
        dense = qb.S @ P @ qb.S + 4.0 * sys.M @ sys.B @ sys.B.T @ sys.M
        assert np.linalg.norm(Z @ Z.T - dense) <= 1e-10 * np.linalg.norm(dense)

    def test_column_budget(self):
        Z_P = np.ones((6, 5))
        Z = observability_rhs_factor(np.eye(6), Z_P, np.eye(6), np.ones((6, 2)), k_P_prime=3)
        assert Z.shape == (6, 5)


class TestCompressFactor:
    def test_rank_one_by_inspection(self):
        Z = compress_factor(np.array([[1.0, 1.0], [0.0, 0.0]]))
        assert Z.shape == (2, 1)
        assert np.allclose(np.abs(Z[:, 0]), [np.sqrt(2.0), 0.0], atol=1e-14)

    def test_orthonormal_unchanged(self):
        Q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((8, 4)))
        assert compress_factor(Q).shape[1] == 4

    def test_decaying_scales_reconstruction(self, rng):
        scales = np.exp(-np.arange(35) / 2.0)
        Z = rng.standard_normal((40, 35)) * scales
        Zc = compress_factor(Z, tol_rank=1e-8)
        assert Zc.shape[1] < 35
        err = np.linalg.norm(Zc @ Zc.T - Z @ Z.T)
        assert err <= 1e-8 * np.linalg.norm(Z @ Z.T)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compress_factor(np.zeros((3, 0)))


def test_gramian_factor_validation():
    with pytest.raises(ValueError):
        GramianFactor(np.ones((3, 1)), "sideways", 0.0)
    with pytest.raises(ValueError):
        GramianFactor(np.full((3, 1), np.nan), "reachability", 0.0)
