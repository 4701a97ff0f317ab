"""Time integration and error metrics for the full and reduced systems.

An embedded Dormand-Prince 5(4) pair with PI step-size control covers the
non-stiff transient runs; a fixed-step implicit trapezoidal rule with a
single reused LU factorization covers long mildly stiff runs.  Both the
augmented system and the reduced model keep their nonlinearities in the
final state equation only, so the trapezoidal update stays linear: the
leading block is advanced first and the last component follows from a
scalar linear relation.

Reference for the pair: J. R. Dormand, P. J. Prince, A family of embedded
Runge-Kutta formulae, J. Comput. Appl. Math. 6 (1980).
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import trapezoid

from .balancing import ReducedMimoModel, ReducedModel
from .errors import GridMismatchError, SingularOperatorError, StepSizeUnderflowError
from .systems import LtiQuadraticSystem, MimoLinearSystem, QuadraticBilinearSystem

DEFAULT_RTOL = 1e-6
DEFAULT_ATOL = 1e-8

#: Near-zero floor below which reference values are excluded from the
#: relative-error integrand.
RELATIVE_ERROR_FLOOR = 1e-300


@dataclass(frozen=True)
class Trajectory:
    """Discrete solution: strictly increasing times, states, output samples.

    output holds the scalar quantity of interest per time point, or the
    stacked linear outputs for the multi-output formulation; None for raw
    integrator results.
    """

    times: np.ndarray
    states: np.ndarray
    output: np.ndarray = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be a strictly increasing 1-d grid")
        if x.shape[0] != t.size:
            raise ValueError(f"{x.shape[0]} states for {t.size} time points")
        if self.output is not None:
            y = np.asarray(self.output, dtype=float)
            if y.shape[0] != t.size:
                raise ValueError(f"{y.shape[0]} outputs for {t.size} time points")
            object.__setattr__(self, "output", y)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class InputSignal:
    """Excitation evaluable at any time, broadcast over n_in channels.

    kinds: 'chirp' u = sin(k0 t^2) with linearly growing instantaneous
    frequency, 'harmonic' u = sin(omega t), 'zero', and 'table' (linear
    interpolation of sample pairs).
    """

    kind: str
    rate: float = 0.0
    n_in: int = 1
    table_t: np.ndarray = None
    table_u: np.ndarray = None

    @classmethod
    def chirp(cls, k0, n_in=1):
        return cls(kind="chirp", rate=float(k0), n_in=n_in)

    @classmethod
    def harmonic(cls, omega, n_in=1):
        return cls(kind="harmonic", rate=float(omega), n_in=n_in)

    @classmethod
    def zero(cls, n_in=1):
        return cls(kind="zero", n_in=n_in)

    @classmethod
    def table(cls, times, values, n_in=1):
        t = np.asarray(times, dtype=float)
        u = np.asarray(values, dtype=float)
        if t.ndim != 1 or u.shape[0] != t.size:
            raise ValueError("table needs matching 1-d times and values")
        return cls(kind="table", n_in=n_in, table_t=t, table_u=u)

    def scalar(self, t):
        if self.kind == "chirp":
            return math.sin(self.rate * t * t)
        if self.kind == "harmonic":
            return math.sin(self.rate * t)
        if self.kind == "zero":
            return 0.0
        if self.kind == "table":
            return float(np.interp(t, self.table_t, self.table_u))
        raise ValueError(f"unknown input kind {self.kind!r}")

    def __call__(self, t):
        return np.full(self.n_in, self.scalar(t))


def eval_input(signal, t):
    """Input vector at time t."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return signal(t)


# Dormand-Prince 5(4) tableau, FSAL form.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# Quartic interpolant coefficients (Shampine's free interpolant for the pair).
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
# PI (Lund) stabilized controller exponents for an order-4 error estimate
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA


def _rms(v):
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(f, t0, x0, f0, rtol, atol, max_step):
    scale = atol + rtol * np.abs(x0)
    d0 = _rms(x0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    f1 = f(t0 + h0, x0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)


def integrate_adaptive(
    f,
    x0,
    t_span,
    rtol=DEFAULT_RTOL,
    atol=DEFAULT_ATOL,
    t_eval=None,
    max_step=None,
    first_step=None,
    max_steps=1_000_000,
):
    """Adaptive Dormand-Prince 5(4) integration of x' = f(t, x).

    Step sizes follow a PI controller targeting a componentwise local
    error of atol + rtol * |x|.  Solution values at requested times come
    from the pair's quartic interpolant; without t_eval the accepted step
    points are returned.  A persistent failure to meet the tolerance
    raises StepSizeUnderflowError with the time of failure.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("rtol and atol must be positive")
    t0, t_end = float(t_span[0]), float(t_span[1])
    if t_end <= t0:
        raise ValueError(f"empty time span {t_span}")
    x = np.array(x0, dtype=float).ravel()
    dim = x.size
    if max_step is None:
        max_step = (t_end - t0) / 10.0
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval[0] < t0 - 1e-12 or t_eval[-1] > t_end + 1e-12:
            raise ValueError("t_eval must lie inside t_span")

    K = np.empty((7, dim))
    K[0] = f(t0, x)
    if first_step is None:
        h = _initial_step(f, t0, x, K[0], rtol, atol, max_step)
    else:
        h = min(float(first_step), max_step)
    t = t0

    ts, xs = [t0], [x.copy()]
    eval_idx = 0
    out_t, out_x = [], []
    if t_eval is not None:
        while eval_idx < t_eval.size and t_eval[eval_idx] <= t0 + 1e-15 * max(1.0, abs(t0)):
            out_t.append(t_eval[eval_idx])
            out_x.append(x.copy())
            eval_idx += 1

    err_prev = 1e-4
    n_steps = 0
    while t < t_end:
        if n_steps >= max_steps:
            raise StepSizeUnderflowError(t, h)
        h = min(h, max_step, t_end - t)
        last = t + h >= t_end
        h_min = 16.0 * np.finfo(float).eps * max(abs(t), abs(t_end))
        if h < h_min:
            raise StepSizeUnderflowError(t, h)

        for i in range(1, 6):
            K[i] = f(t + _C[i] * h, x + h * (_A[i] @ K[:i]))
        x_new = x + h * (_B[:6] @ K[:6])
        K[6] = f(t + h, x_new)
        # componentwise control: every state must meet its own budget
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.max(np.abs(h * (_E @ K)) / scale))
        n_steps += 1

        if err > 1.0:
            h *= max(0.1, _SAFETY * err**-0.2)
            continue

        t_next = t_end if last else t + h
        if t_eval is not None and eval_idx < t_eval.size:
            # quartic interpolation at requested points inside this step
            Q = K.T @ _P
            while eval_idx < t_eval.size and t_eval[eval_idx] <= t_next + 1e-12 * max(1.0, abs(t_next)):
                theta = (t_eval[eval_idx] - t) / h
                p = np.array([theta, theta**2, theta**3, theta**4])
                out_t.append(t_eval[eval_idx])
                out_x.append(x + h * (Q @ p))
                eval_idx += 1
        t = t_next
        x = x_new
        K[0] = K[6]
        ts.append(t)
        xs.append(x.copy())

        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = min(
                _MAX_FACTOR,
                max(_MIN_FACTOR, _SAFETY * err**-_EXPO * err_prev**_BETA),
            )
        h *= factor
        err_prev = max(err, 1e-4)

    if t_eval is not None:
        return Trajectory(np.array(out_t), np.array(out_x))
    return Trajectory(np.array(ts), np.array(xs))


def rhs_rom(rom, t, x, u):
    """Right-hand side of the reduced model at state x and input vector u.

    The first r-1 components are linear; the last is
    -eps * x_r + sum_j u_j (N[j] . x*) + x*^T S x*, evaluated without
    forming any r^2 Kronecker vector.
    """
    xs = x[:-1]
    dxs = rom.A @ xs + rom.B @ u
    dlast = -rom.epsilon * x[-1] + float(u @ (rom.N @ xs)) + float(xs @ (rom.S @ xs))
    return np.append(dxs, dlast)


def rhs_qb(qb, t, x, u):
    """Right-hand side of the augmented quadratic-bilinear system."""
    xs = x[:-1]
    dxs = qb.A @ xs + qb.B @ u
    dlast = -qb.epsilon * x[-1] + float(u @ (qb.N @ xs)) + float(xs @ (qb.S @ xs))
    return np.append(dxs, dlast)


def _make_rhs(system, signal):
    if isinstance(system, (LtiQuadraticSystem, MimoLinearSystem)):
        A, B = system.A, system.B
        return lambda t, x: A @ x + B @ signal(t)
    if isinstance(system, QuadraticBilinearSystem):
        return lambda t, x: rhs_qb(system, t, x, signal(t))
    if isinstance(system, ReducedModel):
        return lambda t, x: rhs_rom(system, t, x, signal(t))
    if isinstance(system, ReducedMimoModel):
        A, B = system.A, system.B
        return lambda t, x: A @ x + B @ signal(t)
    raise TypeError(f"cannot build a right-hand side for {type(system).__name__}")


def _output_from_states(system, states):
    if isinstance(system, LtiQuadraticSystem):
        return np.einsum("ij,jk,ik->i", states, system.M, states)
    if isinstance(system, MimoLinearSystem):
        return np.hstack([states @ system.L_plus, states @ system.L_minus])
    if isinstance(system, QuadraticBilinearSystem):
        return states[:, -1].copy()
    if isinstance(system, ReducedModel):
        return system.output_gain * states[:, -1]
    if isinstance(system, ReducedMimoModel):
        zp = states @ system.C_plus.T
        zm = states @ system.C_minus.T
        return np.sum(zp * zp, axis=1) - np.sum(zm * zm, axis=1)
    raise TypeError(f"cannot evaluate outputs for {type(system).__name__}")


def recombine_quadratic(mimo, z):
    """||z+||^2 - ||z-||^2 per time point from stacked linear outputs."""
    mp = mimo.L_plus.shape[1]
    zp, zm = z[:, :mp], z[:, mp:]
    return np.sum(zp * zp, axis=1) - np.sum(zm * zm, axis=1)


def simulate(
    system,
    signal,
    t_span,
    rtol=DEFAULT_RTOL,
    atol=DEFAULT_ATOL,
    t_eval=None,
    x0=None,
):
    """Adaptive transient simulation returning a Trajectory with outputs.

    The initial state defaults to the one stored in the system.  For the
    multi-output formulation the trajectory output holds the stacked
    linear outputs; recombine_quadratic turns them into the quadratic
    quantity of interest.
    """
    if x0 is None:
        x0 = system.x0
    f = _make_rhs(system, signal)
    raw = integrate_adaptive(f, x0, t_span, rtol=rtol, atol=atol, t_eval=t_eval)
    return Trajectory(raw.times, raw.states, _output_from_states(system, raw.states))


def integrate_trapezoidal(system, signal, t_span, num_steps, x0=None):
    """Fixed-step implicit trapezoidal rule over a uniform grid.

    For linear state dynamics one LU factorization of (I - h/2 A) is
    reused in every step.  For the augmented and reduced systems the
    nonlinear terms live only in the last state equation, so that
    component is updated afterwards by a scalar linear relation using the
    trapezoidal average of the already-computed leading-block stages; no
    nonlinear algebraic solve occurs.
    """
    if num_steps < 1:
        raise ValueError(f"num_steps must be at least 1, got {num_steps}")
    t0, t_end = float(t_span[0]), float(t_span[1])
    if t_end <= t0:
        raise ValueError(f"empty time span {t_span}")
    if x0 is None:
        x0 = system.x0
    x0 = np.asarray(x0, dtype=float).ravel()
    times = np.linspace(t0, t_end, num_steps + 1)
    h = (t_end - t0) / num_steps

    if isinstance(system, (LtiQuadraticSystem, MimoLinearSystem, ReducedMimoModel)):
        states = _trapezoid_linear(system.A, system.B, signal, x0, times, h)
    elif isinstance(system, (QuadraticBilinearSystem, ReducedModel)):
        states = _trapezoid_augmented(system, signal, x0, times, h)
    else:
        raise TypeError(f"cannot integrate {type(system).__name__}")
    return Trajectory(times, states, _output_from_states(system, states))


def _stage_lu(A, h):
    n = A.shape[0]
    try:
        return sla.lu_factor(np.eye(n) - 0.5 * h * A)
    except sla.LinAlgError as exc:
        raise SingularOperatorError(f"singular trapezoidal stage matrix: {exc}") from exc


def _trapezoid_linear(A, B, signal, x0, times, h):
    lu = _stage_lu(A, h)
    states = np.empty((times.size, x0.size))
    states[0] = x0
    x = x0
    u = signal(times[0])
    for k in range(times.size - 1):
        u_next = signal(times[k + 1])
        rhs = x + 0.5 * h * (A @ x + B @ (u + u_next))
        x = sla.lu_solve(lu, rhs)
        states[k + 1] = x
        u = u_next
    return states


def _trapezoid_augmented(system, signal, x0, times, h):
    A, B, N, S = system.A, system.B, system.N, system.S
    eps = system.epsilon
    lu = _stage_lu(A, h)
    decay = (1.0 - 0.5 * h * eps) / (1.0 + 0.5 * h * eps)
    gain_h = 0.5 * h / (1.0 + 0.5 * h * eps)
    states = np.empty((times.size, x0.size))
    states[0] = x0
    xs = x0[:-1]
    w = x0[-1]
    u = signal(times[0])
    nl = float(u @ (N @ xs)) + float(xs @ (S @ xs))
    for k in range(times.size - 1):
        u_next = signal(times[k + 1])
        rhs = xs + 0.5 * h * (A @ xs + B @ (u + u_next))
        xs = sla.lu_solve(lu, rhs)
        nl_next = float(u_next @ (N @ xs)) + float(xs @ (S @ xs))
        w = decay * w + gain_h * (nl + nl_next)
        states[k + 1, :-1] = xs
        states[k + 1, -1] = w
        u, nl = u_next, nl_next
    return states


@dataclass(frozen=True)
class ErrorMetrics:
    """Maximum absolute error and integral mean relative error.

    excluded counts grid points whose reference output magnitude fell
    below the floor and was left out of the relative integrand.
    """

    e_abs: float
    e_rel: float
    excluded: int


def error_metrics(reference, test, floor=RELATIVE_ERROR_FLOOR):
    """Compare two trajectories sharing the reference time grid.

    e_abs is the grid maximum of |y_test - y_ref|; e_rel is the
    trapezoidal approximation of (1/T) * integral of |y_test - y_ref| /
    |y_ref|, with near-zero reference points excluded from the integrand
    and counted.
    """
    if not np.array_equal(reference.times, test.times):
        raise GridMismatchError(
            f"time grids differ ({reference.times.size} vs {test.times.size} points)"
        )
    y_ref = np.asarray(reference.output, dtype=float)
    y_test = np.asarray(test.output, dtype=float)
    if y_ref.ndim != 1 or y_test.ndim != 1:
        raise ValueError("error metrics require scalar outputs")
    diff = np.abs(y_test - y_ref)
    e_abs = float(np.max(diff))
    mask = np.abs(y_ref) >= floor
    integrand = np.zeros_like(diff)
    integrand[mask] = diff[mask] / np.abs(y_ref[mask])
    span = reference.times[-1] - reference.times[0]
    e_rel = float(trapezoid(integrand, reference.times) / span)
    return ErrorMetrics(e_abs=e_abs, e_rel=e_rel, excluded=int(np.sum(~mask)))
