"""Reformulations of the quadratic-output system.

Two equivalent representations of the same input-output map: an indefinite
factorization of M turns the scalar quadratic output into a stack of
linear outputs, and differentiating y = x^T M x along trajectories yields
an augmented quadratic-bilinear system whose last state variable is y.
"""

import numpy as np

from .errors import EigendecompositionError
from .systems import (
    LtiQuadraticSystem,
    MimoLinearSystem,
    QuadraticBilinearSystem,
    symmetrize,
)

#: Relative eigenvalue threshold below which directions of M are truncated.
DEFAULT_SPLIT_TOL = 1e-12

#: Default stabilization parameter for the augmented output state.
DEFAULT_EPSILON = 1e-8

#: Relative threshold for declaring a bilinear row b_j^T M numerically zero.
BILINEAR_ZERO_TOL = 1e-14


def split_indefinite(M, tol_split=DEFAULT_SPLIT_TOL):
    """Factor a symmetric matrix as M = Lp Lp^T - Lm Lm^T.

    Eigenpairs with lam > tol_split * max|lam| build Lp (columns scaled by
    sqrt(lam)), those with lam < -tol_split * max|lam| build Lm, and the
    band in between is truncated.  Works uniformly for definite,
    semi-definite and indefinite M.
    """
    M = symmetrize(M)
    if tol_split <= 0:
        raise ValueError(f"tol_split must be positive, got {tol_split}")
    n = M.shape[0]
    try:
        lam, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionError(f"symmetric eigendecomposition failed: {exc}") from exc
    scale = np.max(np.abs(lam)) if n else 0.0
    threshold = tol_split * scale
    pos = lam > threshold
    neg = lam < -threshold
    L_plus = V[:, pos] * np.sqrt(lam[pos])
    L_minus = V[:, neg] * np.sqrt(-lam[neg])
    return L_plus, L_minus


def to_mimo_linear(sys, tol_split=DEFAULT_SPLIT_TOL):
    """Rewrite the system with linear outputs z+ = Lp^T x, z- = Lm^T x.

    Along any trajectory ||z+||^2 - ||z-||^2 reproduces the quadratic
    output.  The number of outputs equals the numerical rank of M, which
    can be as large as n (M = I gives exactly n outputs).
    """
    L_plus, L_minus = split_indefinite(sys.M, tol_split)
    return MimoLinearSystem(sys.A, sys.B, L_plus, L_minus, sys.x0)


def to_quadratic_bilinear(sys, epsilon=DEFAULT_EPSILON):
    """Augment the system with the output as an additional state variable.

    The new state obeys y' = sum_j u_j (2 b_j^T M) x + x^T S x with
    S = sym(A^T M + M A); the -eps * y damping term makes the augmented
    linear part asymptotically stable (the undamped augmented matrix has a
    simple zero eigenvalue).  epsilon = 0 is permitted for simulation
    equivalence checks but leaves the Gramians of the augmented system
    undefined.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    A, B, M, x0 = sys.A, sys.B, sys.M, sys.x0
    S = symmetrize(A.T @ M + M @ A)
    N = 2.0 * (B.T @ M)
    x0_aug = np.concatenate([x0, [eval_output_term(x0, M)]])
    return QuadraticBilinearSystem(A=A, B=B, N=N, S=S, epsilon=epsilon, x0=x0_aug)


def eval_output_term(x, M):
    # scalar x^T M x without the dimension-check overhead of the public op
    return float(x @ (M @ x))


def bilinear_vanishes(sys, rtol=BILINEAR_ZERO_TOL):
    """True when every bilinear row 2 b_j^T M is numerically zero.

    This happens whenever the support of each input column is disjoint
    from the states entering the quadratic output.  Each entry of b_j^T M
    is compared against rtol * ||M||_F * ||b_j||_2.
    """
    M = sys.M
    scale_M = np.linalg.norm(M)
    for j in range(sys.n_in):
        b = sys.B[:, j]
        bound = rtol * scale_M * np.linalg.norm(b)
        if np.max(np.abs(b @ M), initial=0.0) > bound:
            return False
    return True
