"""Balanced truncation of the augmented quadratic-bilinear system.

The Gramians of the augmented system solve quadratic Lyapunov equations,
but block-diagonal solutions reduce them to two ordinary linear Lyapunov
equations plus one scalar.  Balancing then runs on the small-factor SVD
exactly as in the linear square-root method; the augmented coordinate
contributes one extra singular value sqrt(p''/(2 eps)) whose projection
entries are p''^(-1/4) and p''^(1/4).

The stored reduced model uses the rescaled form in which the
stabilization parameter has been cancelled out of every matrix; it only
survives as the damping of the output state, where it defaults to zero.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GramianNotDefinedError,
    InternalConsistencyError,
    StabilizationTooLargeError,
    TruncationOrderError,
    UnstableSystemError,
)
from .lyapunov import solve_lyapunov_dense
from .systems import LtiQuadraticSystem, spectral_abscissa, symmetrize


def _corner(n, value):
    out = np.zeros((n + 1, n + 1))
    out[n, n] = value
    return out


def _top_block(mat):
    n = mat.shape[0]
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = mat
    return out


def _lemma1_from_products(P, S, G, q_prime):
    # G = M @ B carries everything the bilinear rows contribute
    n = P.shape[0]
    term_i = [_corner(n, 4.0 * float(G[:, j] @ P @ G[:, j])) for j in range(G.shape[1])]
    term_ii = _top_block(4.0 * q_prime * (G @ G.T))
    T = P @ S
    term_iii = _corner(n, float(np.sum(T * T.T)))
    term_iv = _top_block(q_prime * (S @ P @ S))
    return term_i, term_ii, term_iii, term_iv


def lemma1_terms(P, S, M, B, q_prime):
    """Closed forms of the four structured terms in the Gramian equations.

    Returns a 4-tuple of (n+1) x (n+1) matrices:
      i)   per input channel j, the bilinear reachability term with single
           entry 4 b_j^T M P M b_j in the corner (a list over j),
      ii)  the summed bilinear observability term 4 q' M B B^T M in the
           top-left block,
      iii) the quadratic reachability term tr((P S)^2) in the corner,
      iv)  the quadratic observability term q' S P S in the top-left block.

    These equal the corresponding Kronecker-product expressions evaluated
    at block-diagonal Gramian candidates, at a cost of a few matrix-matrix
    products.
    """
    P = np.asarray(P, dtype=float)
    S = np.asarray(S, dtype=float)
    M = np.asarray(M, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = P.shape[0]
    for name, a in (("P", P), ("S", S), ("M", M)):
        if a.shape != (n, n):
            raise ValueError(f"{name} has shape {a.shape}, expected {(n, n)}")
    if B.shape[0] != n:
        raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
    return _lemma1_from_products(P, S, M @ B, q_prime)


def compute_output_energy(P, S, M, B):
    """Scalar p'' = tr((P S)^2) + 4 sum_j b_j^T M P M b_j.

    This is the energy the augmented output state carries in the
    reachability Gramian (its corner entry is p''/(2 eps)) and its fourth
    root is the output gain of the reduced model.  For symmetric PSD P the
    value is non-negative; a negative value beyond roundoff indicates an
    inconsistent P and is an error, while tiny negative roundoff is
    clipped to zero.
    """
    P = np.asarray(P, dtype=float)
    S = np.asarray(S, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    T = P @ S
    quad = float(np.sum(T * T.T))
    G = np.asarray(M, dtype=float) @ B
    bil = 4.0 * float(np.sum(G * (P @ G)))
    value = quad + bil
    scale = abs(quad) + abs(bil) + np.linalg.norm(T) ** 2
    if value < -1e-12 * max(scale, 1.0):
        raise InternalConsistencyError(
            f"output energy {value:.3e} negative beyond tolerance; P is not PSD"
        )
    return max(value, 0.0)


def compute_output_energy_lowrank(Z_P, S, M, B):
    """Output energy evaluated from a low-rank factor P = Z_P Z_P^T.

    tr((P S)^2) collapses to the squared Frobenius norm of the small
    symmetric matrix Z_P^T S Z_P, so the cost scales with the factor rank.
    """
    Z_P = np.asarray(Z_P, dtype=float)
    if Z_P.ndim == 1:
        Z_P = Z_P.reshape(-1, 1)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    K = Z_P.T @ np.asarray(S, dtype=float) @ Z_P
    K = symmetrize(K)
    quad = float(np.sum(K * K))
    bil = 4.0 * float(np.sum((Z_P.T @ (np.asarray(M, dtype=float) @ B)) ** 2))
    return quad + bil


def assemble_gramians(qb, P, Q, output_energy):
    """Assemble the augmented Gramians from the linear-equation solutions.

    Reachability: diag(P, p''/(2 eps)).  Observability: diag(Q, 1)/(2 eps).
    Requires eps > 0; at eps = 0 the output-state component of the
    observability equation evaluates to the constant 1, so no solution
    exists.
    """
    if qb.epsilon <= 0.0:
        raise GramianNotDefinedError(
            "stabilization parameter is zero: the observability equation has "
            "residual 1 in the output-state component and admits no solution"
        )
    n = qb.n
    P_aug = np.zeros((n + 1, n + 1))
    P_aug[:n, :n] = P
    P_aug[n, n] = output_energy / (2.0 * qb.epsilon)
    Q_aug = np.zeros((n + 1, n + 1))
    Q_aug[:n, :n] = Q
    Q_aug[n, n] = 1.0
    Q_aug /= 2.0 * qb.epsilon
    return P_aug, Q_aug


def reachability_residual(qb, P, p_prime):
    """Residual of the reachability Gramian equation at diag(P, p').

    Evaluated through the closed forms; for the block-diagonal family the
    off-diagonal residual blocks vanish identically.  Returns the dense
    (n+1) x (n+1) residual matrix.
    """
    n = qb.n
    A, B = qb.A, qb.B
    term_i, _, term_iii, _ = _lemma1_from_products(np.asarray(P), qb.S, qb.N.T / 2.0, 0.0)
    R = np.zeros((n + 1, n + 1))
    R[:n, :n] = A @ P + P @ A.T + B @ B.T
    R[n, n] = -2.0 * qb.epsilon * p_prime + term_iii[n, n] + sum(t[n, n] for t in term_i)
    return R


def observability_residual(qb, P, Q, q_prime):
    """Residual of the observability Gramian equation at diag(Q, q').

    The corner component is 1 - 2 eps q' regardless of Q, which is why no
    solution exists at eps = 0.
    """
    n = qb.n
    A = qb.A
    _, term_ii, _, term_iv = _lemma1_from_products(np.asarray(P), qb.S, qb.N.T / 2.0, q_prime)
    R = np.zeros((n + 1, n + 1))
    R[:n, :n] = A.T @ Q + Q @ A + term_iv[:n, :n] + term_ii[:n, :n]
    R[n, n] = -2.0 * qb.epsilon * q_prime + 1.0
    return R


def symmetric_factor(G, tol_rank=1e-12):
    """Symmetric factor L with L L^T = G for a (numerically) PSD matrix.

    Eigenvalue based so that rank deficiency is handled cleanly: the
    columns span the eigendirections above the truncation threshold,
    scaled by the root eigenvalues.  Roundoff-negative eigenvalues down to
    -1e-12 ||G|| are clipped to zero; anything below that is an error.
    Returns an n x k matrix, possibly with k = 0 for G = 0.
    """
    G = symmetrize(G)
    lam, V = np.linalg.eigh(G)
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    if scale == 0.0:
        return np.zeros((G.shape[0], 0))
    if lam[0] < -1e-12 * scale:
        raise ValueError(
            f"matrix is indefinite beyond tolerance (min eigenvalue {lam[0]:.3e})"
        )
    lam = np.clip(lam, 0.0, None)
    # keep the tail of eigenvalues whose energy exceeds the tolerance
    keep = lam > tol_rank * scale
    return V[:, keep] * np.sqrt(lam[keep])


@dataclass(frozen=True)
class BalancedTruncation:
    """Projection data of one balanced truncation of the augmented system.

    sigma holds the singular values of L_Q^T L_P in ascending order; the
    augmented coordinate contributes the extra value sigma_aug =
    sqrt(p''/(2 eps)).  T_l and T_r are the oblique projection matrices of
    width r including the stabilization-dependent scaling; left_core and
    right_core are their stabilization-free n x (r-1) blocks used to build
    the rescaled reduced model.
    """

    sigma: np.ndarray
    output_energy: float
    epsilon: float
    r: int
    T_l: np.ndarray
    T_r: np.ndarray
    left_core: np.ndarray = field(repr=False, default=None)
    right_core: np.ndarray = field(repr=False, default=None)

    @property
    def sigma_aug(self):
        """Singular value contributed by the augmented output state."""
        return float(np.sqrt(self.output_energy / (2.0 * self.epsilon)))

    def singular_values_augmented(self):
        """All n+1 system singular values (common 1/sqrt(2 eps) factor included)."""
        vals = np.append(self.sigma, self.sigma_aug)
        return np.sort(vals)[::-1] / np.sqrt(2.0 * self.epsilon)


def balance(L_P, L_Q, output_energy, epsilon, r, rank_rtol=1e-13):
    """Square-root balancing of the augmented system from Gramian factors.

    Accepts either dense symmetric factors or low-rank ADI factors; the
    SVD runs on the small matrix L_Q^T L_P.  The augmented singular value
    sqrt(p''/(2 eps)) must lie among the r dominant ones, which bounds
    eps from above; the projection corner entries are p''^(-/+ 1/4).
    The left and right bases satisfy T_l^T T_r = I_r.
    """
    L_P = np.asarray(L_P, dtype=float)
    L_Q = np.asarray(L_Q, dtype=float)
    if L_P.ndim == 1:
        L_P = L_P.reshape(-1, 1)
    if L_Q.ndim == 1:
        L_Q = L_Q.reshape(-1, 1)
    if r < 2:
        raise TruncationOrderError(f"reduced order must be at least 2, got {r}")
    if epsilon <= 0.0:
        raise GramianNotDefinedError("balancing requires a positive stabilization parameter")
    if output_energy <= 0.0:
        raise TruncationOrderError(
            "output energy is zero: the output state carries no signal and "
            "the augmented direction cannot be balanced"
        )
    n = L_P.shape[0]
    U, s, Vt = np.linalg.svd(L_Q.T @ L_P, full_matrices=False)
    k = s.size
    sigma_aug = float(np.sqrt(output_energy / (2.0 * epsilon)))
    # the augmented value must beat the first truncated singular value
    if k - r >= 1 and sigma_aug <= s[k - r]:
        raise StabilizationTooLargeError(
            f"sqrt(p''/(2 eps)) = {sigma_aug:.3e} does not exceed the tail "
            f"singular value {s[k - r]:.3e}; choose a smaller epsilon"
        )
    m = r - 1
    if m > k:
        raise TruncationOrderError(f"r - 1 = {m} exceeds the {k} available directions")
    rank = int(np.sum(s > rank_rtol * s[0])) if k else 0
    if m > rank:
        raise TruncationOrderError(
            f"r - 1 = {m} exceeds the numerical rank {rank} of L_Q^T L_P"
        )
    inv_sqrt = 1.0 / np.sqrt(s[:m])
    left_core = L_Q @ (U[:, :m] * inv_sqrt)
    right_core = L_P @ (Vt[:m].T * inv_sqrt)
    gain = output_energy**0.25
    a = (2.0 * epsilon) ** 0.25
    T_l = np.zeros((n + 1, r))
    T_r = np.zeros((n + 1, r))
    T_l[:n, :m] = left_core / a
    T_l[n, m] = 1.0 / gain
    T_r[:n, :m] = right_core * a
    T_r[n, m] = gain
    return BalancedTruncation(
        sigma=np.sort(s),
        output_energy=float(output_energy),
        epsilon=float(epsilon),
        r=int(r),
        T_l=T_l,
        T_r=T_r,
        left_core=left_core,
        right_core=right_core,
    )


def suggest_order(sigma, output_energy, epsilon, fraction=1e-8):
    """Smallest r whose discarded singular-value tail is below the fraction.

    Advisory only: no error bound ties the tail sum to the output error
    for the quadratic-bilinear reduction.
    """
    s = np.sort(np.asarray(sigma, dtype=float))[::-1]
    total = s.sum() + np.sqrt(output_energy / (2.0 * epsilon))
    tail = np.cumsum(s[::-1])[::-1]
    below = np.nonzero(tail <= fraction * total)[0]
    m = int(below[0]) if below.size else s.size
    return max(m + 1, 2)


@dataclass(frozen=True)
class ReducedModel:
    """Reduced quadratic-bilinear model in decoupled form.

    State (x*, w) of total dimension r with
        x*' = A x* + B u
        w'  = -epsilon w + sum_j u_j (N[j] @ x*) + x*^T S x*
        y   = output_energy^(1/4) * w
    All matrices are independent of the stabilization parameter used
    during balancing; epsilon here is the damping kept in the reduced
    output state (zero by default, which makes the model parameter-free).
    """

    A: np.ndarray
    B: np.ndarray
    N: np.ndarray
    S: np.ndarray
    output_energy: float
    epsilon: float
    x0: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        m = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        N = np.asarray(self.N, dtype=float).reshape(-1, m)
        S = np.asarray(self.S, dtype=float)
        if not np.array_equal(S, S.T):
            raise ValueError("reduced quadratic weight matrix must be exactly symmetric")
        x0 = np.asarray(self.x0, dtype=float).ravel()
        if x0.size != m + 1:
            raise ValueError(f"x0 has size {x0.size}, expected {m + 1}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "x0", x0)

    @property
    def r(self):
        return self.A.shape[0] + 1

    @property
    def n_in(self):
        return self.B.shape[1]

    @property
    def output_gain(self):
        """Multiplier turning the last state variable into the output."""
        return self.output_energy**0.25


def reduce_model(qb, bt, epsilon_rom=0.0):
    """Project the augmented system onto the balanced dominant subspace.

    The projected system matrix is block diagonal: its leading block is
    independent of the stabilization parameter and the trailing entry is
    -eps, which is replaced by epsilon_rom (zero by default).  Input,
    bilinear and quadratic matrices are stored in the rescaled form whose
    stabilization scalings cancel; the quadratic weights come from the
    congruence of S with the right basis, so the single-row structure of
    the quadratic term survives the projection and no r x r^2 array is
    formed.
    """
    W = bt.left_core
    V = bt.right_core
    gain = bt.output_energy**0.25
    A_r = W.T @ qb.A @ V
    B_r = W.T @ qb.B
    N_r = (qb.N @ V) / gain
    S_r = symmetrize(V.T @ qb.S @ V) / gain
    x0 = np.concatenate([W.T @ qb.x0[: qb.n], [qb.x0[qb.n] / gain]])
    return ReducedModel(
        A=A_r,
        B=B_r,
        N=N_r,
        S=S_r,
        output_energy=bt.output_energy,
        epsilon=float(epsilon_rom),
        x0=x0,
    )


def reduced_linear_recovery(rom):
    """Recover a linear system with quadratic output from the reduced model.

    Solves A^T W + W A = S for the symmetric weight matrix of the
    quadratic output.  The recovered system reproduces the reduced model
    only for autonomous dynamics (u = 0) and when the reduced output state
    starts at the recovered quadratic form's initial value; under inputs
    the bilinear channel of the reduced model has no linear-system
    counterpart.  The reduced-model output additionally carries the factor
    output_energy^(1/4).
    """
    if rom.epsilon != 0.0:
        raise ValueError(
            f"recovery requires a reduced model with zero output damping, got {rom.epsilon}"
        )
    alpha = spectral_abscissa(rom.A)
    if alpha >= 0.0:
        raise UnstableSystemError(
            f"reduced linear block is not stable (spectral abscissa {alpha:.3e})"
        )
    # A^T W + W A = S  <=>  (A^T) W + W (A^T)^T + (-S) = 0
    W = solve_lyapunov_dense(rom.A.T, -rom.S)
    return LtiQuadraticSystem(rom.A, rom.B, W, rom.x0[:-1])


@dataclass(frozen=True)
class ReducedMimoModel:
    """Linear balanced-truncation baseline of the multi-output formulation."""

    A: np.ndarray
    B: np.ndarray
    C_plus: np.ndarray
    C_minus: np.ndarray
    x0: np.ndarray
    sigma: np.ndarray

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def n_in(self):
        return self.B.shape[1]

    def recombined_output(self, x):
        zp = self.C_plus @ x
        zm = self.C_minus @ x
        return float(zp @ zp - zm @ zm)


def linear_balanced_truncation(mimo, r, L_P=None, L_Q=None, rank_rtol=1e-13):
    """Square-root balanced truncation of the linear multi-output system.

    The observability equation's right-hand side L L^T (with
    L = [L+  L-]) can have rank up to n, so it is solved densely.
    Precomputed Gramian factors can be passed in when sweeping r.
    """
    A, B = mimo.A, mimo.B
    if L_P is None:
        L_P = symmetric_factor(solve_lyapunov_dense(A, B @ B.T))
    if L_Q is None:
        L = np.hstack([mimo.L_plus, mimo.L_minus])
        L_Q = symmetric_factor(solve_lyapunov_dense(A.T, L @ L.T))
    U, s, Vt = np.linalg.svd(L_Q.T @ L_P, full_matrices=False)
    rank = int(np.sum(s > rank_rtol * s[0])) if s.size else 0
    if r > rank:
        raise TruncationOrderError(f"r = {r} exceeds the numerical rank {rank}")
    inv_sqrt = 1.0 / np.sqrt(s[:r])
    T_l = L_Q @ (U[:, :r] * inv_sqrt)
    T_r = L_P @ (Vt[:r].T * inv_sqrt)
    return ReducedMimoModel(
        A=T_l.T @ A @ T_r,
        B=T_l.T @ B,
        C_plus=mimo.L_plus.T @ T_r,
        C_minus=mimo.L_minus.T @ T_r,
        x0=T_l.T @ mimo.x0,
        sigma=s.copy(),
    )
