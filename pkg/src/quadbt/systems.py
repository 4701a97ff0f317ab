"""State-space system types for model reduction with quadratic outputs.

The full-order model is a stable LTI system whose quantity of interest is
the quadratic form y = x^T M x.  Two derived representations are used by
the reduction pipeline: a linear system with several linear outputs whose
squared norms recombine to y, and an augmented quadratic-bilinear system
that carries y as its last state variable.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EigendecompositionError, UnstableSystemError

#: Dense eigenvalue validation is an O(n^3) cost; above this size callers
#: must assert stability themselves.
STABILITY_CHECK_LIMIT = 2000


def _as_matrix(a, name):
    a = np.array(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={a.ndim}")
    return a


def _frozen(a):
    a.setflags(write=False)
    return a


def symmetrize(T):
    """Return the symmetric part (T + T^T)/2 of a square matrix.

    The quadratic form is unchanged: x^T T x = x^T sym(T) x for every x.
    """
    T = _as_matrix(T, "T")
    if T.shape[0] != T.shape[1]:
        raise ValueError(f"cannot symmetrize a non-square matrix of shape {T.shape}")
    return (T + T.T) / 2.0


def spectral_abscissa(A):
    """Largest real part of the eigenvalues of A.

    An eigensolver failure is reported as EigendecompositionError, distinct
    from the UnstableSystemError raised by system constructors.
    """
    A = _as_matrix(A, "A")
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(lam.real))


def eval_quadratic_output(x, M):
    """Evaluate the quadratic output x^T M x."""
    x = np.asarray(x, dtype=float)
    M = _as_matrix(M, "M")
    if x.ndim != 1 or M.shape != (x.size, x.size):
        raise ValueError(f"dimension mismatch: x has size {x.shape}, M has shape {M.shape}")
    return float(x @ M @ x)


def quadratic_term_matrix(S, mode=1):
    """Dense matricization of the quadratic-term tensor defined by S.

    Only the last row (mode 1) or the trailing column of each block
    (mode 2) is occupied; the dense (n+1) x (n+1)^2 array is intended for
    verification at small n, the reduction pipeline itself never forms it.
    """
    S = _as_matrix(S, "S")
    n = S.shape[0]
    H = np.zeros((n + 1, (n + 1) ** 2))
    if mode == 1:
        for k in range(n):
            H[n, k * (n + 1):k * (n + 1) + n] = S[:, k]
    elif mode == 2:
        for k in range(n):
            H[:n, k * (n + 1) + n] = S[:, k]
    else:
        raise ValueError(f"mode must be 1 or 2, got {mode}")
    return H


@dataclass(frozen=True)
class LtiQuadraticSystem:
    """Stable LTI system x' = A x + B u with quadratic output y = x^T M x.

    M is symmetrized on construction (the quadratic form only sees the
    symmetric part).  A must have all eigenvalues in the open left
    half-plane; construction fails otherwise.  For n above
    STABILITY_CHECK_LIMIT the dense eigenvalue check is refused unless the
    caller passes assume_stable=True.
    """

    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    x0: np.ndarray = None
    assume_stable: bool = field(default=False, compare=False)

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
        if B.shape[1] > n:
            raise ValueError(f"more inputs ({B.shape[1]}) than states ({n})")
        M = symmetrize(self.M)
        if M.shape != (n, n):
            raise ValueError(f"M has shape {M.shape}, expected {(n, n)}")
        x0 = np.zeros(n) if self.x0 is None else np.array(self.x0, dtype=float).ravel()
        if x0.size != n:
            raise ValueError(f"x0 has size {x0.size}, expected {n}")
        if not self.assume_stable:
            if n > STABILITY_CHECK_LIMIT:
                raise ValueError(
                    f"n = {n} exceeds the dense stability-check limit "
                    f"({STABILITY_CHECK_LIMIT}); pass assume_stable=True to skip"
                )
            alpha = spectral_abscissa(A)
            if alpha >= 0.0:
                raise UnstableSystemError(
                    f"system matrix is not asymptotically stable "
                    f"(spectral abscissa {alpha:.3e} >= 0)"
                )
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "M", _frozen(M))
        object.__setattr__(self, "x0", _frozen(x0))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def n_in(self):
        return self.B.shape[1]

    def output(self, x):
        """Quadratic output at a single state."""
        return eval_quadratic_output(x, self.M)


@dataclass(frozen=True)
class MimoLinearSystem:
    """The same state dynamics with linear outputs z+ = Lp^T x, z- = Lm^T x.

    The factors satisfy Lp Lp^T - Lm Lm^T = M, so the quadratic output is
    recovered as y = ||z+||^2 - ||z-||^2.  Either factor may have zero
    columns (definite or zero M).
    """

    A: np.ndarray
    B: np.ndarray
    L_plus: np.ndarray
    L_minus: np.ndarray
    x0: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        Lp = np.array(self.L_plus, dtype=float).reshape(n, -1)
        Lm = np.array(self.L_minus, dtype=float).reshape(n, -1)
        x0 = np.zeros(n) if self.x0 is None else np.array(self.x0, dtype=float).ravel()
        for name, a in (("A", A), ("B", B), ("L_plus", Lp), ("L_minus", Lm)):
            if a.shape[0] != n:
                raise ValueError(f"{name} has {a.shape[0]} rows, expected {n}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "L_plus", _frozen(Lp))
        object.__setattr__(self, "L_minus", _frozen(Lm))
        object.__setattr__(self, "x0", _frozen(x0))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def n_in(self):
        return self.B.shape[1]

    @property
    def n_out(self):
        return self.L_plus.shape[1] + self.L_minus.shape[1]

    def outputs(self, x):
        """Stacked linear outputs (z+, z-) at a single state."""
        return np.concatenate([self.L_plus.T @ x, self.L_minus.T @ x])

    def recombined_output(self, x):
        """||z+||^2 - ||z-||^2, which equals the quadratic output."""
        zp = self.L_plus.T @ x
        zm = self.L_minus.T @ x
        return float(zp @ zp - zm @ zm)


@dataclass(frozen=True)
class QuadraticBilinearSystem:
    """Augmented system carrying the quadratic output as state n+1.

    State (x, y) with
        x' = A x + B u
        y' = -eps * y + sum_j u_j (N[j] @ x) + x^T S x
    and the single linear output equal to y itself.  S = sym(A^T M + M A)
    drives the quadratic term; row j of N is 2 b_j^T M.  The quadratic
    term's matricization has a single occupied row, so S is the canonical
    storage and the (n+1) x (n+1)^2 array is never formed.
    """

    A: np.ndarray
    B: np.ndarray
    N: np.ndarray
    S: np.ndarray
    epsilon: float
    x0: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n} (top block only)")
        N = np.array(self.N, dtype=float).reshape(-1, n)
        S = _as_matrix(self.S, "S")
        if S.shape != (n, n):
            raise ValueError(f"S has shape {S.shape}, expected {(n, n)}")
        if not np.array_equal(S, S.T):
            raise ValueError("S must be exactly symmetric")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        x0 = np.array(self.x0, dtype=float).ravel()
        if x0.size != n + 1:
            raise ValueError(f"x0 has size {x0.size}, expected {n + 1}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "N", _frozen(N))
        object.__setattr__(self, "S", _frozen(S))
        object.__setattr__(self, "x0", _frozen(x0))

    @property
    def n(self):
        """Dimension of the embedded linear state (full state is n + 1)."""
        return self.A.shape[0]

    @property
    def n_in(self):
        return self.B.shape[1]

    @property
    def output_index(self):
        """Index of the state component that equals the output."""
        return self.n

    def a_aug(self):
        """Dense augmented system matrix diag(A, -eps)."""
        n = self.n
        At = np.zeros((n + 1, n + 1))
        At[:n, :n] = self.A
        At[n, n] = -self.epsilon
        return At

    def b_aug(self):
        """Dense augmented input matrix (B stacked on a zero row)."""
        return np.vstack([self.B, np.zeros((1, self.n_in))])

    def n_aug(self, j):
        """Dense augmented bilinear matrix for input channel j (single occupied row)."""
        n = self.n
        Nj = np.zeros((n + 1, n + 1))
        Nj[n, :n] = self.N[j]
        return Nj
