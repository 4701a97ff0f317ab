import numpy as np
import pytest

from quadbt import (
    InputSignal,
    LtiQuadraticSystem,
    ReducedModel,
    assemble_gramians,
    balance,
    compute_output_energy,
    compute_output_energy_lowrank,
    lemma1_terms,
    linear_balanced_truncation,
    observability_residual,
    reachability_residual,
    reduce_model,
    reduced_linear_recovery,
    rhs_qb,
    rhs_rom,
    simulate,
    solve_lyapunov_dense,
    suggest_order,
    symmetric_factor,
    symmetrize,
    to_mimo_linear,
    to_quadratic_bilinear,
)
from quadbt.errors import (
    GramianNotDefinedError,
    StabilizationTooLargeError,
    TruncationOrderError,
    UnstableSystemError,
)

from conftest import (
    blockdiag,
    obs_terms_bruteforce,
    observability_operator_dense,
    random_quadratic_system,
    reach_terms_bruteforce,
)


def scalar_system():
    return LtiQuadraticSystem([[-1.0]], [[1.0]], [[1.0]], [0.0])


def dense_gramians(sys, qb):
    P = solve_lyapunov_dense(sys.A, sys.B @ sys.B.T)
    F_obs = qb.S @ P @ qb.S + 4.0 * sys.M @ sys.B @ sys.B.T @ sys.M
    Q = solve_lyapunov_dense(sys.A.T, F_obs)
    return P, Q


class TestLemma1:
    @pytest.mark.parametrize("seed", [50, 51, 52])
    def test_closed_forms_match_kronecker_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 6))
        sys = random_quadratic_system(n, seed=seed, n_in=2)
        qb = to_quadratic_bilinear(sys, 1e-2)
        P = symmetrize(rng.standard_normal((n, n)))
        P = P @ P.T
        q_prime = 0.3
        p_prime = 0.7
        term_i, term_ii, term_iii, term_iv = lemma1_terms(P, qb.S, sys.M, sys.B, q_prime)

        P_aug = blockdiag(P, p_prime)
        Q_aug = blockdiag(P + np.eye(n), q_prime)
        brute_bilinear, brute_quad = reach_terms_bruteforce(qb, P_aug)
        for j in range(2):
            scale = max(np.linalg.norm(brute_bilinear[j]), 1e-30)
            assert np.linalg.norm(term_i[j] - brute_bilinear[j]) <= 1e-10 * scale
        assert np.linalg.norm(term_iii - brute_quad) <= 1e-10 * max(np.linalg.norm(brute_quad), 1e-30)

        brute_obs_bilinear, brute_obs_quad = obs_terms_bruteforce(qb, P_aug, Q_aug)
        assert np.linalg.norm(term_ii - brute_obs_bilinear) <= 1e-10 * max(
            np.linalg.norm(brute_obs_bilinear), 1e-30
        )
        assert np.linalg.norm(term_iv - brute_obs_quad) <= 1e-10 * max(
            np.linalg.norm(brute_obs_quad), 1e-30
        )

    def test_scalar_bilinear_corner(self):
        # P = 1/2, M = B = 1: corner of the bilinear term is 4 * 1/2 = 2
        sys = scalar_system()
        qb = to_quadratic_bilinear(sys, 1e-2)
        term_i, _, _, _ = lemma1_terms(np.array([[0.5]]), qb.S, sys.M, sys.B, 0.0)
        assert term_i[0][1, 1] == pytest.approx(2.0)

    def test_zero_output_matrix_kills_all_terms(self):
        from conftest import random_stable

        A, B = random_stable(4, seed=60)
        sys = LtiQuadraticSystem(A, B, np.zeros((4, 4)))
        qb = to_quadratic_bilinear(sys, 1e-2)
        term_i, term_ii, term_iii, term_iv = lemma1_terms(np.eye(4), qb.S, sys.M, sys.B, 0.5)
        assert all(np.array_equal(t, np.zeros((5, 5))) for t in term_i)
        for t in (term_ii, term_iii, term_iv):
            assert np.array_equal(t, np.zeros((5, 5)))

    def test_result_independent_of_corner_entries(self):
        # the closed forms see the augmented Gramians only through their
        # leading blocks, matching the structure of the dense expressions
        sys = random_quadratic_system(4, seed=61)
        qb = to_quadratic_bilinear(sys, 1e-2)
        P = np.eye(4)
        for p_prime in (0.0, 1.0, 37.5):
            P_aug = blockdiag(P, p_prime)
            _, brute_quad = reach_terms_bruteforce(qb, P_aug)
            term = lemma1_terms(P, qb.S, sys.M, sys.B, 0.0)[2]
            assert np.allclose(term, brute_quad, atol=1e-12 * max(np.abs(brute_quad).max(), 1.0))


class TestOutputEnergy:
    def test_scalar_hand_value(self):
        sys = scalar_system()
        qb = to_quadratic_bilinear(sys, 1e-2)
        P, Q = dense_gramians(sys, qb)
        assert Q[0, 0] == pytest.approx(3.0)
        assert compute_output_energy(P, qb.S, sys.M, sys.B) == pytest.approx(3.0)

    def test_zero_terms(self):
        assert compute_output_energy(np.eye(3), np.zeros((3, 3)), np.eye(3), np.zeros((3, 1))) == 0.0

    def test_matches_dense_trace_and_nonnegative(self):
        sys = random_quadratic_system(30, seed=62)
        qb = to_quadratic_bilinear(sys)
        P, _ = dense_gramians(sys, qb)
        value = compute_output_energy(P, qb.S, sys.M, sys.B)
        T = P @ qb.S
        dense = np.trace(T @ T) + 4.0 * sum(
            sys.B[:, j] @ sys.M @ P @ sys.M @ sys.B[:, j] for j in range(sys.n_in)
        )
        assert value == pytest.approx(dense, rel=1e-10)
        assert value >= 0.0

    def test_lowrank_evaluation_matches_dense(self):
        sys = random_quadratic_system(25, seed=63)
        qb = to_quadratic_bilinear(sys)
        P, _ = dense_gramians(sys, qb)
        Z_P = symmetric_factor(P)
        dense_value = compute_output_energy(P, qb.S, sys.M, sys.B)
        lowrank_value = compute_output_energy_lowrank(Z_P, qb.S, sys.M, sys.B)
        assert lowrank_value == pytest.approx(dense_value, rel=1e-10)


class TestGramianAssembly:
    def test_scalar_assembly_hand_values(self):
        sys = scalar_system()
        qb = to_quadratic_bilinear(sys, 1e-2)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        P_aug, Q_aug = assemble_gramians(qb, P, Q, p2)
        assert np.allclose(P_aug, np.diag([0.5, 150.0]))
        assert np.allclose(Q_aug, 50.0 * np.diag([3.0, 1.0]))

    def test_reachability_residual_small(self):
        sys = random_quadratic_system(20, seed=64)
        qb = to_quadratic_bilinear(sys, 1e-4)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        R = reachability_residual(qb, P, p2 / (2.0 * qb.epsilon))
        scale = np.linalg.norm(sys.B @ sys.B.T) + p2
        assert np.linalg.norm(R) <= 1e-10 * scale

    def test_observability_residual_small(self):
        sys = random_quadratic_system(20, seed=65)
        qb = to_quadratic_bilinear(sys, 1e-4)
        P, Q = dense_gramians(sys, qb)
        inv2e = 1.0 / (2.0 * qb.epsilon)
        R = observability_residual(qb, P, inv2e * Q, inv2e)
        scale = inv2e * np.linalg.norm(qb.S @ P @ qb.S + 4 * sys.M @ sys.B @ sys.B.T @ sys.M)
        assert np.linalg.norm(R) <= 1e-8 * scale

    def test_zero_stabilization_rejected(self):
        sys = scalar_system()
        qb = to_quadratic_bilinear(sys, 0.0)
        with pytest.raises(GramianNotDefinedError):
            assemble_gramians(qb, np.array([[0.5]]), np.array([[3.0]]), 3.0)

    def test_corollary_corner_residual_is_one(self):
        # with zero stabilization the output-state component of the
        # observability equation equals 1 for every candidate corner value
        sys = random_quadratic_system(4, seed=66)
        qb = to_quadratic_bilinear(sys, 0.0)
        P, Q = dense_gramians(sys, qb)
        for q_prime in (0.0, 1.0, 123.0, 1e8):
            R = observability_residual(qb, P, Q, q_prime)
            assert R[-1, -1] == 1.0

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_vectorized_solve_recovers_ansatz(self, n):
        # the observability equation is linear in the Gramian once the
        # reachability one is fixed; solve it brute force and compare
        sys = random_quadratic_system(n, seed=70 + n)
        qb = to_quadratic_bilinear(sys, 1e-2)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        P_aug, Q_aug = assemble_gramians(qb, P, Q, p2)
        op = observability_operator_dense(qb, P_aug)
        cc = np.zeros((n + 1, n + 1))
        cc[n, n] = 1.0
        solution = np.linalg.solve(op, -cc.ravel()).reshape(n + 1, n + 1)
        assert np.linalg.norm(solution - Q_aug) <= 1e-8 * np.linalg.norm(Q_aug)


class TestSymmetricFactor:
    def test_scaled_identity(self):
        L = symmetric_factor(4.0 * np.eye(2))
        assert L.shape == (2, 2)
        assert np.allclose(L @ L.T, 4.0 * np.eye(2), atol=1e-12)

    def test_zero_matrix_empty_factor(self):
        assert symmetric_factor(np.zeros((3, 3))).shape == (3, 0)

    def test_rank_deficient(self, rng):
        X = rng.standard_normal((10, 3))
        G = X @ X.T
        L = symmetric_factor(G)
        assert L.shape == (10, 3)
        assert np.linalg.norm(L @ L.T - G) <= 1e-10 * np.linalg.norm(G)

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="indefinite"):
            symmetric_factor(np.diag([1.0, -1.0]))

    def test_roundoff_negative_clipped(self):
        G = np.diag([1.0, -1e-15])
        L = symmetric_factor(G)
        assert np.allclose(L @ L.T, np.diag([1.0, 0.0]), atol=1e-12)


class TestBalance:
    def test_scalar_case_hand_values(self):
        sys = scalar_system()
        qb = to_quadratic_bilinear(sys, 1e-8)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        bt = balance(symmetric_factor(P), symmetric_factor(Q), p2, 1e-8, 2)
        assert bt.sigma[0] == pytest.approx(np.sqrt(1.5), rel=1e-12)
        assert bt.T_l[-1, -1] == pytest.approx(3.0 ** -0.25, rel=1e-12)
        assert bt.T_r[-1, -1] == pytest.approx(3.0 ** 0.25, rel=1e-12)

    def test_biorthogonality(self):
        sys = random_quadratic_system(40, seed=80)
        qb = to_quadratic_bilinear(sys)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        bt = balance(symmetric_factor(P), symmetric_factor(Q), p2, 1e-8, 10)
        assert np.linalg.norm(bt.T_l.T @ bt.T_r - np.eye(10)) <= 1e-10

    def test_oversized_stabilization_rejected(self):
        sys = random_quadratic_system(12, seed=81)
        qb = to_quadratic_bilinear(sys)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        L_P, L_Q = symmetric_factor(P), symmetric_factor(Q)
        huge = p2 / (2.0 * (1e-3 * np.linalg.svd(L_Q.T @ L_P, compute_uv=False)[-1]) ** 2)
        with pytest.raises(StabilizationTooLargeError, match="smaller epsilon"):
            balance(L_P, L_Q, p2, huge, 3)

    def test_r_exceeding_rank_rejected(self):
        sys = random_quadratic_system(8, seed=82)
        qb = to_quadratic_bilinear(sys)
        P, _ = dense_gramians(sys, qb)
        L_P = symmetric_factor(P)
        with pytest.raises(TruncationOrderError):
            balance(L_P[:, :3], L_P[:, :3], 1.0, 1e-8, 8)

    def test_minimum_order(self):
        with pytest.raises(TruncationOrderError):
            balance(np.eye(3), np.eye(3), 1.0, 1e-8, 1)

    def test_sigma_ascending_and_augmented_value(self):
        sys = random_quadratic_system(15, seed=83)
        qb = to_quadratic_bilinear(sys)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        bt = balance(symmetric_factor(P), symmetric_factor(Q), p2, 1e-8, 5)
        assert np.all(np.diff(bt.sigma) >= 0)
        assert bt.sigma_aug == pytest.approx(np.sqrt(p2 / 2e-8))
        # for small stabilization the overall largest singular value is
        # sqrt(p'') / (2 eps)
        assert bt.singular_values_augmented()[0] == pytest.approx(np.sqrt(p2) / 2e-8, rel=1e-12)


class TestReduceModel:
    def _pipeline(self, sys, eps, r, epsilon_rom=0.0):
        qb = to_quadratic_bilinear(sys, eps)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        bt = balance(symmetric_factor(P), symmetric_factor(Q), p2, eps, r)
        return qb, bt, reduce_model(qb, bt, epsilon_rom)

    def test_full_order_reproduces_augmented_system(self):
        # r = n + 1 keeps everything: the reduced model is a similarity
        # transform of the augmented system and must reproduce its output
        sys = random_quadratic_system(6, seed=90, definite=True)
        eps = 0.5
        qb, bt, rom = self._pipeline(sys, eps, 7, epsilon_rom=eps)
        signal = InputSignal.chirp(0.2)
        ref = simulate(qb, signal, (0.0, 15.0), rtol=1e-9, atol=1e-11)
        red = simulate(rom, signal, (0.0, 15.0), rtol=1e-9, atol=1e-11, t_eval=ref.times)
        assert np.max(np.abs(red.output - ref.output)) <= 1e-6

    def test_projected_system_matrix_block_structure(self):
        # the oblique projection of the augmented system matrix is block
        # diagonal with the stabilization parameter in the corner
        sys = random_quadratic_system(40, seed=91)
        eps = 1e-6
        qb, bt, rom = self._pipeline(sys, eps, 10)
        A_proj = bt.T_l.T @ qb.a_aug() @ bt.T_r
        scale = np.linalg.norm(A_proj)
        assert np.linalg.norm(A_proj[:9, 9]) <= 1e-10 * scale
        assert np.linalg.norm(A_proj[9, :9]) <= 1e-10 * scale
        assert A_proj[9, 9] == pytest.approx(-eps, rel=1e-8)
        # the rescaled stored block matches the projection
        assert np.allclose(A_proj[:9, :9], rom.A, atol=1e-8 * scale)

    def test_reduced_quadratic_weights_symmetric(self):
        sys = random_quadratic_system(40, seed=92)
        _, bt, rom = self._pipeline(sys, 1e-8, 8)
        assert np.array_equal(rom.S, rom.S.T)
        direct = bt.right_core.T @ to_quadratic_bilinear(sys).S @ bt.right_core
        assert np.allclose(rom.S * rom.output_gain, direct, atol=1e-12 * np.linalg.norm(direct))

    def test_stabilization_invariance_of_stored_matrices(self):
        # matrices of the stored reduced model must not depend on the
        # stabilization parameter used during balancing
        sys = random_quadratic_system(30, seed=93, definite=True)
        roms = [self._pipeline(sys, eps, 12)[2] for eps in (1e-4, 1e-6, 1e-8)]
        for rom in roms[1:]:
            for name in ("A", "B", "N", "S", "x0"):
                a, b = getattr(roms[0], name), getattr(rom, name)
                assert np.linalg.norm(a - b) <= 1e-8 * max(np.linalg.norm(a), 1e-30)
            assert rom.output_gain == pytest.approx(roms[0].output_gain, rel=1e-8)

    def test_stabilization_invariance_of_outputs(self):
        sys = random_quadratic_system(30, seed=94, definite=True)
        signal = InputSignal.chirp(0.1)
        grid = np.linspace(0.0, 30.0, 501)
        outputs = []
        for eps in (1e-4, 1e-6, 1e-8):
            rom = self._pipeline(sys, eps, 12)[2]
            traj = simulate(rom, signal, (0.0, 30.0), t_eval=grid)
            outputs.append(traj.output)
        for y in outputs[1:]:
            assert np.max(np.abs(y - outputs[0])) <= 1e-6

    def test_normalized_singular_values_stabilization_free(self):
        sys = random_quadratic_system(20, seed=95)
        qb = to_quadratic_bilinear(sys)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        L_P, L_Q = symmetric_factor(P), symmetric_factor(Q)
        ratios = []
        for eps in (1e-4, 1e-8):
            bt = balance(L_P, L_Q, p2, eps, 5)
            ratios.append(bt.sigma / bt.sigma[-1])
        assert np.max(np.abs(ratios[0] - ratios[1])) <= 1e-12

    def test_autonomous_state_norm_decays(self):
        sys = random_quadratic_system(20, seed=96, definite=True)
        _, _, rom = self._pipeline(sys, 1e-8, 6)
        x0 = 0.01 * np.random.default_rng(5).standard_normal(6)
        traj = simulate(rom, InputSignal.zero(), (0.0, 50.0), x0=x0)
        assert np.linalg.norm(traj.states[-1]) < np.linalg.norm(traj.states[0])


class TestReducedLinearRecovery:
    def _rom(self, seed=97, n=20, r=6):
        sys = random_quadratic_system(n, seed=seed, definite=True)
        qb = to_quadratic_bilinear(sys, 1e-8)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        bt = balance(symmetric_factor(P), symmetric_factor(Q), p2, 1e-8, r)
        return reduce_model(qb, bt)

    def test_weight_matrix_solves_stated_equation(self):
        rom = self._rom()
        rec = reduced_linear_recovery(rom)
        residual = rom.A.T @ rec.M + rec.M @ rom.A - rom.S
        assert np.linalg.norm(residual) <= 1e-10 * max(np.linalg.norm(rom.S), 1e-30)

    def test_autonomous_equivalence(self):
        # with zero input and the output state started at the recovered
        # quadratic form, both models produce the same output trajectory
        rom = self._rom()
        rec = reduced_linear_recovery(rom)
        rng = np.random.default_rng(7)
        x_star = 0.1 * rng.standard_normal(rom.r - 1)
        x0_rom = np.append(x_star, x_star @ rec.M @ x_star)
        zero = InputSignal.zero()
        ref = simulate(rom, zero, (0.0, 40.0), x0=x0_rom, rtol=1e-9, atol=1e-11)
        lin = simulate(rec, zero, (0.0, 40.0), x0=x_star, rtol=1e-9, atol=1e-11,
                       t_eval=ref.times)
        assert np.max(np.abs(rom.output_gain * lin.output - ref.output)) <= 1e-7

    def test_driven_outputs_differ(self):
        # under an input the bilinear channel has no linear counterpart
        sys = random_quadratic_system(30, seed=98, definite=True)
        qb = to_quadratic_bilinear(sys, 1e-8)
        P, Q = dense_gramians(sys, qb)
        p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
        bt = balance(symmetric_factor(P), symmetric_factor(Q), p2, 1e-8, 8)
        rom = reduce_model(qb, bt)
        rec = reduced_linear_recovery(rom)
        signal = InputSignal.chirp(0.1)
        ref = simulate(rom, signal, (0.0, 30.0))
        lin = simulate(rec, signal, (0.0, 30.0), t_eval=ref.times)
        assert np.max(np.abs(rom.output_gain * lin.output - ref.output)) > 1e-5

    def test_zero_quadratic_weights_give_zero_matrix(self):
        rom = ReducedModel(
            A=-np.eye(3), B=np.ones((3, 1)), N=np.zeros((1, 3)), S=np.zeros((3, 3)),
            output_energy=1.0, epsilon=0.0, x0=np.zeros(4),
        )
        rec = reduced_linear_recovery(rom)
        assert np.array_equal(rec.M, np.zeros((3, 3)))

    def test_requires_zero_damping(self):
        rom = ReducedModel(
            A=-np.eye(2), B=np.ones((2, 1)), N=np.zeros((1, 2)), S=np.zeros((2, 2)),
            output_energy=1.0, epsilon=1e-8, x0=np.zeros(3),
        )
        with pytest.raises(ValueError, match="zero output damping"):
            reduced_linear_recovery(rom)

    def test_unstable_reduced_block_rejected(self):
        rom = ReducedModel(
            A=np.eye(2), B=np.ones((2, 1)), N=np.zeros((1, 2)), S=np.zeros((2, 2)),
            output_energy=1.0, epsilon=0.0, x0=np.zeros(3),
        )
        with pytest.raises(UnstableSystemError):
            reduced_linear_recovery(rom)


class TestLinearBaseline:
    def test_full_order_exact(self):
        sys = random_quadratic_system(8, seed=99, definite=True)
        mimo = to_mimo_linear(sys)
        rom = linear_balanced_truncation(mimo, 8)
        signal = InputSignal.chirp(0.3)
        ref = simulate(sys, signal, (0.0, 10.0), rtol=1e-9, atol=1e-11)
        red = simulate(rom, signal, (0.0, 10.0), rtol=1e-9, atol=1e-11, t_eval=ref.times)
        assert np.max(np.abs(red.output - ref.output)) <= 1e-7

    def test_rank_guard(self):
        sys = random_quadratic_system(8, seed=100, definite=True)
        mimo = to_mimo_linear(sys)
        with pytest.raises(TruncationOrderError):
            linear_balanced_truncation(mimo, 9)


def test_suggest_order_monotone():
    sigma = np.exp(-np.arange(20) / 2.0)
    loose = suggest_order(sigma, 1.0, 1e-8, fraction=1e-2)
    tight = suggest_order(sigma, 1.0, 1e-8, fraction=1e-8)
    assert 2 <= loose <= tight <= 21


def test_rhs_rom_projection_consistency():
    # with 2*eps = 1 the stored rescaled model coincides with the raw
    # oblique projection, so the right-hand sides must agree exactly
    sys = random_quadratic_system(6, seed=101, definite=True, x0_scale=1.0)
    eps = 0.5
    qb = to_quadratic_bilinear(sys, eps)
    P = solve_lyapunov_dense(sys.A, sys.B @ sys.B.T)
    F_obs = qb.S @ P @ qb.S + 4.0 * sys.M @ sys.B @ sys.B.T @ sys.M
    Q = solve_lyapunov_dense(sys.A.T, F_obs)
    p2 = compute_output_energy(P, qb.S, sys.M, sys.B)
    bt = balance(symmetric_factor(P), symmetric_factor(Q), p2, eps, 7)
    rom = reduce_model(qb, bt, epsilon_rom=eps)
    rng = np.random.default_rng(8)
    for _ in range(5):
        x_red = rng.standard_normal(7)
        u = rng.standard_normal(1)
        expected = bt.T_l.T @ rhs_qb(qb, 0.0, bt.T_r @ x_red, u)
        got = rhs_rom(rom, 0.0, x_red, u)
        assert np.linalg.norm(got - expected) <= 1e-10 * max(np.linalg.norm(expected), 1.0)
