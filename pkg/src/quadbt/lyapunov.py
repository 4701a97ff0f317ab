"""Solvers for linear Lyapunov equations A G + G A^T + F = 0.

Two routes: a dense direct solve (real Schur decomposition with triangular
back-substitution, via LAPACK) for moderate n, and the low-rank ADI
iteration producing tall factors Z with G ~ Z Z^T for right-hand sides of
low rank.  Shift parameters for ADI come from a Penzl-style heuristic on
Ritz values.

References: T. Penzl, A cyclic low-rank Smith method for large sparse
Lyapunov equations, SIAM J. Sci. Comput. 21 (1999); P. Benner,
P. Kuerschner, J. Saak, Efficient handling of complex shift parameters in
the low-rank Cholesky factor ADI method, Numer. Algorithms 62 (2013).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    AdiIterationError,
    EigendecompositionError,
    SingularOperatorError,
    SolverAccuracyError,
    UnstableSystemError,
)
from .systems import symmetrize

DEFAULT_ADI_MAX_ITER = 50
DEFAULT_ADI_TOL = 1e-8
DEFAULT_NUM_SHIFTS = 16
DEFAULT_NUM_RITZ_LARGE = 20
DEFAULT_NUM_RITZ_SMALL = 20
DEFAULT_ARNOLDI_DEPTH = 40
DEFAULT_INV_ARNOLDI_DEPTH = 20

DENSE_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class GramianFactor:
    """Tall factor Z of a Gramian approximation G ~ Z Z^T.

    residual_norm is the relative Frobenius residual of the Lyapunov
    equation at the factored solution; residuals records it per ADI
    iteration (starting at 1 before the first step).
    """

    Z: np.ndarray
    kind: str
    residual_norm: float
    residuals: tuple = field(default=(), compare=False)

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] < 1:
            raise ValueError(f"factor must be a matrix with >= 1 column, got shape {Z.shape}")
        if not np.all(np.isfinite(Z)):
            raise ValueError("factor contains non-finite entries")
        if self.kind not in ("reachability", "observability"):
            raise ValueError(f"unknown Gramian kind {self.kind!r}")
        object.__setattr__(self, "Z", Z)

    @property
    def rank(self):
        return self.Z.shape[1]

    def gramian(self):
        """Dense Z Z^T (symmetric PSD by construction)."""
        return self.Z @ self.Z.T


@dataclass(frozen=True)
class ShiftSet:
    """ADI shift parameters: left half-plane, closed under conjugation.

    Complex shifts are stored with the conjugate immediately following, so
    the real-arithmetic double step can consume pairs in order.
    """

    shifts: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.shifts, dtype=complex))
        if s.size == 0:
            raise ValueError("shift set must contain at least one shift")
        if np.any(s.real >= 0):
            raise ValueError("all shifts must have negative real part")
        i = 0
        while i < s.size:
            if s[i].imag != 0.0:
                if i + 1 >= s.size or s[i + 1] != np.conj(s[i]):
                    raise ValueError("complex shifts must appear in adjacent conjugate pairs")
                i += 2
            else:
                i += 1
        object.__setattr__(self, "shifts", s)

    def __len__(self):
        return self.shifts.size


def _pair_up(values):
    """Order complex values so each is followed by its conjugate."""
    out = []
    used = np.zeros(len(values), dtype=bool)
    for i, v in enumerate(values):
        if used[i]:
            continue
        used[i] = True
        if v.imag == 0.0:
            out.append(complex(v.real))
            continue
        out.append(v)
        # find the unused conjugate partner
        for j in range(i + 1, len(values)):
            if not used[j] and values[j] == np.conj(v):
                used[j] = True
                break
        out.append(np.conj(v))
    return out


def solve_lyapunov_dense(A, F, residual_tol=DENSE_RESIDUAL_TOL):
    """Direct dense solve of A G + G A^T + F = 0 for symmetric F.

    Uses the real-Schur (Bartels-Stewart) algorithm.  The result is
    explicitly symmetrized; for PSD right-hand sides it is PSD up to a
    roundoff-sized negative eigenvalue tail.  A singular operator
    (lam_i + lam_j = 0) is reported separately from plain instability.
    """
    A = np.asarray(A, dtype=float)
    F = np.asarray(F, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or F.shape != (n, n):
        raise ValueError(f"A and F must be square of equal size, got {A.shape}, {F.shape}")
    asym = np.linalg.norm(F - F.T)
    if asym > 1e-10 * max(np.linalg.norm(F), 1.0):
        raise ValueError("right-hand side F must be symmetric")
    F = symmetrize(F)
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionError(f"eigenvalue computation failed: {exc}") from exc
    alpha = float(np.max(lam.real))
    if alpha >= 0.0:
        pair_sums = np.abs(lam[:, None] + lam[None, :])
        if np.min(pair_sums) <= 1e-12 * max(np.max(np.abs(lam)), 1.0):
            raise SingularOperatorError(
                "Lyapunov operator is singular: eigenvalues with lam_i + lam_j = 0"
            )
        raise UnstableSystemError(
            f"A must be asymptotically stable (spectral abscissa {alpha:.3e})"
        )
    G = symmetrize(sla.solve_continuous_lyapunov(A, -F))
    norm_F = np.linalg.norm(F)
    if norm_F > 0:
        rel = np.linalg.norm(A @ G + G @ A.T + F) / norm_F
        if rel > residual_tol:
            raise SolverAccuracyError(
                f"dense Lyapunov solve residual {rel:.3e} exceeds {residual_tol:.1e}"
            )
    return G


def _arnoldi_ritz(apply_op, n, depth, start):
    """Ritz values from a modified Gram-Schmidt Arnoldi process.

    On early breakdown the Ritz values of the completed part are returned
    (the Krylov space is invariant, so they are exact eigenvalues); an
    empty array signals that nothing was computed.
    """
    depth = min(depth, n)
    v = start / np.linalg.norm(start)
    V = np.empty((n, depth + 1))
    V[:, 0] = v
    H = np.zeros((depth + 1, depth))
    for j in range(depth):
        w = apply_op(V[:, j])
        for i in range(j + 1):
            H[i, j] = V[:, i] @ w
            w = w - H[i, j] * V[:, i]
        hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext
        if hnext <= 1e-12 * max(np.abs(H[: j + 1, j]).max(), 1.0):
            return np.linalg.eigvals(H[: j + 1, : j + 1])
        V[:, j + 1] = w / hnext
    return np.linalg.eigvals(H[:depth, :depth])


def _adi_objective(chosen, points):
    """prod_i |t - p_i| / |t + p_i| per point t (log-domain)."""
    t = np.asarray(points)[:, None]
    p = np.asarray(chosen)[None, :]
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(t - p)) - np.log(np.abs(t + p))
    vals = np.exp(np.sum(logs, axis=1))
    return vals


def _wachspress_points(lo, hi, count):
    """Elliptic-integral optimal shifts for a real spectrum in [-hi, -lo].

    These minimize the ADI min-max rational objective over the interval
    (E. Wachspress, The ADI model problem); used here to seed the shift
    candidate pool, since Ritz values cluster at the spectrum's ends and
    leave the interior uncovered.
    """
    from scipy.special import ellipj, ellipk

    if count < 1 or lo <= 0 or not np.isfinite(hi):
        return np.empty(0, dtype=complex)
    if hi / lo < 1.0 + 1e-12:
        return np.full(count, -lo, dtype=complex)
    kp = lo / hi
    m = 1.0 - kp * kp
    K = ellipk(m)
    u = (2.0 * np.arange(1, count + 1) - 1.0) * K / (2.0 * count)
    dn = ellipj(u, m)[2]
    return (-hi * dn).astype(complex)


def compute_shifts(
    A,
    num_shifts=DEFAULT_NUM_SHIFTS,
    num_ritz_large=DEFAULT_NUM_RITZ_LARGE,
    num_ritz_small=DEFAULT_NUM_RITZ_SMALL,
    arnoldi_depth=DEFAULT_ARNOLDI_DEPTH,
    inv_arnoldi_depth=DEFAULT_INV_ARNOLDI_DEPTH,
    start=None,
):
    """Penzl-style heuristic ADI shifts for a stable matrix.

    The spectrum is probed by Ritz values of A (outer part) and
    reciprocal Ritz values of A^{-1} (inner part), filtered to the open
    left half-plane.  Shift candidates are these probes enriched with
    interval fillers (a log grid and Wachspress elliptic points between
    the extreme moduli, since Ritz values cluster at the ends).  Shifts
    are selected greedily to minimize the ADI rational min-max objective
    on the Ritz probes, then improved by exchange sweeps.  If the Arnoldi
    processes yield no usable probes, the fallback is the eigenvalue
    extreme heuristic {-m, -sqrt(m*M), -M} built from the moduli of the
    spectrum.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if start is None:
        start = np.ones(n)
    start = np.asarray(start, dtype=float).ravel()
    if np.linalg.norm(start) == 0.0:
        start = np.ones(n)

    probes = []
    ritz = _arnoldi_ritz(lambda v: A @ v, n, arnoldi_depth, start)
    if ritz.size:
        order = np.argsort(-np.abs(ritz))
        probes.extend(ritz[order[:num_ritz_large]])
    try:
        lu = sla.lu_factor(A)
        inv_ritz = _arnoldi_ritz(lambda v: sla.lu_solve(lu, v), n, inv_arnoldi_depth, start)
        inv_ritz = inv_ritz[np.abs(inv_ritz) > 0]
        if inv_ritz.size:
            recip = 1.0 / inv_ritz
            order = np.argsort(np.abs(recip))
            probes.extend(recip[order[:num_ritz_small]])
    except (sla.LinAlgError, ValueError):
        pass

    pts = np.array([c for c in probes if c.real < 0], dtype=complex)
    if pts.size:
        # deduplicate up to roundoff so the selection sees distinct points
        rounded = np.round(pts, decimals=12)
        _, keep = np.unique(rounded, return_index=True)
        pts = pts[np.sort(keep)]
    if pts.size == 0:
        moduli = np.abs(np.linalg.eigvals(A))
        lo, hi = float(np.min(moduli)), float(np.max(moduli))
        pts = np.unique(np.array([-lo, -np.sqrt(lo * hi), -hi], dtype=complex))
    # deterministic order: descending real part, then imaginary part
    pts = pts[np.lexsort((pts.imag, -pts.real))]

    lo = float(np.min(np.abs(pts.real)))
    hi = float(np.max(np.abs(pts.real)))
    fillers = [_wachspress_points(lo, hi, num_shifts)]
    if hi > lo > 0:
        fillers.append(-np.exp(np.linspace(np.log(lo), np.log(hi),
                                           2 * num_shifts)).astype(complex))
    cands = np.concatenate([pts, *fillers])
    rounded = np.round(cands, decimals=12)
    _, keep = np.unique(rounded, return_index=True)
    cands = cands[np.sort(keep)]

    chosen = _select_shifts(cands, pts, num_shifts)
    return ShiftSet(np.array(_pair_up(chosen), dtype=complex))


def _select_shifts(cands, pts, num_shifts):
    """Greedy min-max selection on the probe points plus exchange sweeps."""

    def width(c):
        return 1 if c.imag == 0.0 else 2

    def expand(c):
        return [complex(c.real)] if c.imag == 0.0 else [c, np.conj(c)]

    def objective(sel):
        return float(np.max(_adi_objective(sel, pts)))

    best, best_val = None, np.inf
    for c in cands:
        val = objective(expand(c))
        if val < best_val - 1e-15:
            best, best_val = c, val
    chosen = expand(best)
    while len(chosen) < num_shifts:
        vals = _adi_objective(chosen, pts)
        worst_pt = pts[int(np.argmax(vals))]
        if np.max(vals) <= 0.0:
            break
        # place the next shift at the candidate nearest the worst probe
        cand = cands[int(np.argmin(np.abs(cands - worst_pt)))]
        if len(chosen) + width(cand) > num_shifts:
            break
        chosen = chosen + expand(cand)

    # exchange sweeps: replace any shift by any candidate if that lowers
    # the objective; fixes the myopia of the greedy pass
    best_val = objective(chosen)
    for _ in range(6):
        improved = False
        i = 0
        while i < len(chosen):
            w = width(chosen[i])
            for c in cands:
                if width(c) != w:
                    continue
                trial = chosen[:i] + expand(c) + chosen[i + w:]
                val = objective(trial)
                if val < best_val * (1.0 - 1e-12):
                    chosen, best_val = trial, val
                    improved = True
                    break
            i += width(chosen[i])
        if not improved:
            break
    return chosen


def solve_lyapunov_adi(
    A,
    Z_F,
    shifts,
    max_iter=DEFAULT_ADI_MAX_ITER,
    tol=DEFAULT_ADI_TOL,
    kind="reachability",
):
    """Low-rank ADI iteration for A G + G A^T + Z_F Z_F^T = 0.

    Shifts are applied cyclically; a conjugate pair is processed jointly in
    real arithmetic and counts as two iterations.  Each iteration appends
    k_F columns to the factor.  The iteration stops once the relative
    residual (tracked through the low-rank residual factor, no dense
    assembly) drops below tol, or after max_iter iterations.  Set tol = 0
    to force a fixed iteration count.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    Z_F = np.asarray(Z_F, dtype=float)
    if Z_F.ndim == 1:
        Z_F = Z_F.reshape(-1, 1)
    if Z_F.shape[0] != n:
        raise ValueError(f"Z_F has {Z_F.shape[0]} rows, expected {n}")
    if not isinstance(shifts, ShiftSet):
        shifts = ShiftSet(np.asarray(shifts, dtype=complex))

    norm0 = np.linalg.norm(Z_F.T @ Z_F)
    if norm0 == 0.0:
        return GramianFactor(np.zeros_like(Z_F), kind, 0.0, (0.0,))

    W = Z_F.copy()
    blocks = []
    residuals = [1.0]
    lu_cache = {}
    eye = np.eye(n)
    idx = 0
    it = 0
    while it < max_iter:
        mu = shifts.shifts[idx % len(shifts)]
        try:
            if mu.imag == 0.0:
                a = mu.real
                if idx % len(shifts) not in lu_cache:
                    lu_cache[idx % len(shifts)] = sla.lu_factor(A + a * eye)
                V = sla.lu_solve(lu_cache[idx % len(shifts)], W)
                blocks.append(np.sqrt(-2.0 * a) * V)
                W = W - 2.0 * a * V
                it += 1
                idx += 1
            else:
                a, b = mu.real, mu.imag
                key = idx % len(shifts)
                if key not in lu_cache:
                    lu_cache[key] = sla.lu_factor(A + mu * eye.astype(complex))
                V = sla.lu_solve(lu_cache[key], W.astype(complex))
                delta = a / b
                Vr = V.real + delta * V.imag
                blocks.append(2.0 * np.sqrt(-a) * Vr)
                blocks.append(2.0 * np.sqrt(-a) * np.sqrt(delta**2 + 1.0) * V.imag)
                W = W - 4.0 * a * Vr
                it += 2
                idx += 2
        except (sla.LinAlgError, ValueError) as exc:
            raise AdiIterationError(it, mu, f"shifted solve failed: {exc}") from exc
        rel = np.linalg.norm(W.T @ W) / norm0
        residuals.append(float(rel))
        if tol > 0 and rel <= tol:
            break
    Z = np.hstack(blocks)
    return GramianFactor(Z, kind, residuals[-1], tuple(residuals))


def observability_rhs_factor(S, Z_P, M, B, k_P_prime=None):
    """Low-rank factor of the observability right-hand side.

    The observability equation has inhomogeneity S P S + 4 M B B^T M;
    with P ~ Z_P Z_P^T this factors as (S Z_P, 2 M B).  Using only the
    leading k_P_prime columns of Z_P keeps the column count low.  The
    factorization is exact when Z_P is a full-rank factor of P.
    """
    Z_P = np.asarray(Z_P, dtype=float)
    if Z_P.ndim == 1:
        Z_P = Z_P.reshape(-1, 1)
    k = Z_P.shape[1] if k_P_prime is None else int(k_P_prime)
    if k < 0 or k > Z_P.shape[1]:
        raise ValueError(f"k_P_prime = {k} outside [0, {Z_P.shape[1]}]")
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    return np.hstack([np.asarray(S) @ Z_P[:, :k], 2.0 * (np.asarray(M) @ B)])


def compress_factor(Z, tol_rank=1e-8):
    """Rank-revealing compression of a Gramian factor.

    Thin QR followed by an SVD truncation of the triangular part; the
    dropped tail satisfies ||Z' Z'^T - Z Z^T||_F <= tol_rank ||Z Z^T||_F.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(-1, 1)
    if Z.size == 0:
        raise ValueError("factor must be nonempty")
    Q, R = np.linalg.qr(Z)
    U, s, _ = np.linalg.svd(R)
    energy = s**2
    total = np.linalg.norm(energy)
    if total == 0.0:
        return np.zeros((Z.shape[0], 1))
    # smallest k' with || dropped eigenvalue tail ||_2 within tolerance
    tail = np.sqrt(np.cumsum(energy[::-1] ** 2))[::-1]
    keep = int(np.searchsorted(-tail, -tol_rank * total))
    keep = max(keep, 1)
    return Q @ (U[:, :keep] * s[:keep])
