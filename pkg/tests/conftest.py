"""Shared helpers: random stable systems and dense Kronecker oracles.

The oracle builders here assemble the augmented-system objects explicitly
(dense matricizations, Kronecker products), independent of the closed
forms used by the package, so tests compare two different evaluation
routes.
"""

import numpy as np
import pytest

from quadbt import LtiQuadraticSystem, spectral_abscissa


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_stable(n, seed, n_in=1):
    """Gaussian matrix shifted left of the imaginary axis, ones input."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A -= (np.ceil(spectral_abscissa(A)) + 1.0) * np.eye(n)
    B = rng.standard_normal((n, n_in))
    return A, B


def random_quadratic_system(n, seed, n_in=1, definite=False, x0_scale=0.0):
    rng = np.random.default_rng(seed)
    A, B = random_stable(n, seed, n_in)
    if definite:
        M = np.eye(n)
    else:
        M = rng.uniform(-1.0, 1.0, (n, n))
        M = (M + M.T) / 2.0
    x0 = x0_scale * rng.standard_normal(n) if x0_scale else None
    return LtiQuadraticSystem(A, B, M, x0)


def dense_matricization(S, mode=1):
    """Independent block-by-block assembly of the quadratic-term array."""
    n = S.shape[0]
    blocks = []
    for k in range(n + 1):
        block = np.zeros((n + 1, n + 1))
        if k < n:
            if mode == 1:
                block[n, :n] = S[:, k]
            else:
                block[:n, n] = S[:, k]
        blocks.append(block)
    return np.hstack(blocks)


def dense_bilinear_matrix(N_row):
    """Augmented bilinear matrix with the given single occupied row."""
    n = N_row.size
    out = np.zeros((n + 1, n + 1))
    out[n, :n] = N_row
    return out


def blockdiag(top, corner):
    top = np.atleast_2d(top)
    n = top.shape[0]
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = top
    out[n, n] = corner
    return out


def reach_terms_bruteforce(qb, P_aug):
    """Kronecker-product evaluation of the structured reachability terms."""
    H = dense_matricization(qb.S, mode=1)
    quad = H @ np.kron(P_aug, P_aug) @ H.T
    bilinear = [
        dense_bilinear_matrix(qb.N[j]) @ P_aug @ dense_bilinear_matrix(qb.N[j]).T
        for j in range(qb.n_in)
    ]
    return bilinear, quad


def obs_terms_bruteforce(qb, P_aug, Q_aug):
    """Kronecker-product evaluation of the structured observability terms."""
    H2 = dense_matricization(qb.S, mode=2)
    quad = H2 @ np.kron(P_aug, Q_aug) @ H2.T
    bilinear = sum(
        dense_bilinear_matrix(qb.N[j]).T @ Q_aug @ dense_bilinear_matrix(qb.N[j])
        for j in range(qb.n_in)
    )
    return bilinear, quad


def observability_operator_dense(qb, P_aug):
    """Vectorized linear operator of the observability Gramian equation.

    Maps vec(Q_aug) to the full left-hand side minus the constant term;
    built column by column through explicit Kronecker products.
    """
    n1 = qb.n + 1
    A_aug = qb.a_aug()
    H2 = dense_matricization(qb.S, mode=2)
    PkI = np.kron(P_aug, np.eye(n1))

    def apply(Q_aug):
        term = H2 @ PkI @ np.kron(np.eye(n1), Q_aug) @ H2.T
        out = A_aug.T @ Q_aug + Q_aug @ A_aug + term
        for j in range(qb.n_in):
            Nj = dense_bilinear_matrix(qb.N[j])
            out += Nj.T @ Q_aug @ Nj
        return out

    op = np.zeros((n1 * n1, n1 * n1))
    basis = np.zeros((n1, n1))
    for k in range(n1 * n1):
        basis.flat[k] = 1.0
        op[:, k] = apply(basis).ravel()
        basis.flat[k] = 0.0
    return op
