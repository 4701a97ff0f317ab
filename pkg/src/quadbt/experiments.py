"""Benchmark systems and the end-to-end reduction pipeline.

run_reduction executes the full recipe for each requested method: solve
the two linear Lyapunov equations (densely or by ADI), factor, compute
the output energy, balance, truncate per reduced order, simulate, and
score against the full-order reference on its own time grid.  Per-cell
failures are recorded and the sweep continues.
"""

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import balancing, lyapunov, transform
from .errors import QuadbtError
from .simulate import InputSignal, Trajectory, error_metrics, simulate
from .systems import LtiQuadraticSystem, spectral_abscissa

METHODS = ("linear_direct", "qb_direct", "qb_adi")


@dataclass(frozen=True)
class AdiSettings:
    """ADI iteration recipe tied to the reduced order.

    The reachability factor runs k_P = r + k_P_extra iterations; its first
    r columns enter the observability right-hand side, which then runs
    j_Q iterations.  tol > 0 additionally stops on the relative residual
    (off by default: fixed iteration counts).
    """

    k_P_extra: int = 10
    j_Q: int = 10
    tol: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark run: a system source, a method list and an r sweep."""

    generator: str = "random_definite"
    n: int = 200
    n_in: int = 1
    seed: int = 0
    system_dir: str = None
    n_masses: int = 10
    stiffness: float = 2.0
    damping: float = 0.4
    ground_stiffness: float = 0.0
    epsilon: float = 1e-8
    r_list: tuple = tuple(range(5, 85, 5))
    methods: tuple = METHODS
    adi: AdiSettings = field(default_factory=AdiSettings)
    input_kind: str = "chirp"
    input_rate: float = 0.1
    t_end: float = 100.0
    rtol: float = 1e-6
    atol: float = 1e-8
    tol_split: float = 1e-12

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a seed is mandatory for reproducible generators")
        object.__setattr__(self, "r_list", tuple(int(r) for r in self.r_list))
        object.__setattr__(self, "methods", tuple(self.methods))
        if isinstance(self.adi, dict):
            object.__setattr__(self, "adi", AdiSettings(**self.adi))
        for r in self.r_list:
            # n + 1 is the full augmented dimension (no truncation)
            if not 2 <= r <= self.n + 1:
                raise ValueError(f"reduced order {r} outside [2, n+1={self.n + 1}]")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")

    def signal(self):
        if self.input_kind == "chirp":
            return InputSignal.chirp(self.input_rate, self.n_in)
        if self.input_kind == "harmonic":
            return InputSignal.harmonic(self.input_rate, self.n_in)
        if self.input_kind == "zero":
            return InputSignal.zero(self.n_in)
        raise ValueError(f"unknown input kind {self.input_kind!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "adi" in data and isinstance(data["adi"], dict):
            data["adi"] = AdiSettings(**data["adi"])
        return cls(**data)


@dataclass(frozen=True)
class ErrorRecord:
    method: str
    r: int
    e_abs: float
    e_rel: float
    excluded: int = 0


@dataclass(frozen=True)
class FailureRecord:
    method: str
    r: int
    error_type: str
    message: str


@dataclass(frozen=True)
class TimingRecord:
    method: str
    r: int
    phase: str
    seconds: float


@dataclass
class ExperimentReport:
    """Everything a sweep produced: values, errors, failures, timings."""

    config: ExperimentConfig
    singular_values: dict
    output_energy: dict
    errors: list
    failures: list
    timings: list
    reference: Trajectory = None

    def error_for(self, method, r):
        for rec in self.errors:
            if rec.method == method and rec.r == r:
                return rec
        return None

    def is_complete(self):
        covered = {(e.method, e.r) for e in self.errors}
        covered |= {(f.method, f.r) for f in self.failures}
        return all(
            (m, r) in covered for m in self.config.methods for r in self.config.r_list
        )


def generate_random_system(n, seed, definiteness="definite", n_in=1):
    """Dense random stable benchmark system.

    A is standard Gaussian shifted left by the ceiling of its spectral
    abscissa, giving an asymptotically stable matrix; B is all ones.  The
    output matrix is the identity in definite mode, or the symmetrized
    uniform [-1, 1] matrix (dense, full rank, indefinite) otherwise.
    Fully reproducible from the seed.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    rng = np.random.default_rng(seed)
    A_raw = rng.standard_normal((n, n))
    gamma = spectral_abscissa(A_raw)
    A = A_raw - math.ceil(gamma) * np.eye(n)
    B = np.ones((n, n_in))
    if definiteness == "definite":
        M = np.eye(n)
    elif definiteness == "indefinite":
        M = rng.uniform(-1.0, 1.0, size=(n, n))
        M = (M + M.T) / 2.0
    else:
        raise ValueError(f"unknown definiteness {definiteness!r}")
    return LtiQuadraticSystem(A, B, M, assume_stable=True)


def generate_msd_chain(n_masses, stiffness, damping, seed, ground_stiffness=0.0):
    """Damped mass-spring chain with total mechanical energy as output.

    Unit masses coupled by springs (the first mass anchored to a wall),
    each mass damped against the ground and optionally tied to the ground
    by a spring, forced at the last mass.  In first-order form x = (q, v)
    the energy (1/2) q^T K q + (1/2) v^T v is the quadratic output, so
    M = blockdiag(K/2, I/2) is PSD and the output is non-increasing for
    the unforced system.  Per-spring stiffness is jittered reproducibly
    from the seed.  Ground springs bound the slowest mode away from zero,
    which keeps the spectrum's spread moderate on long chains.
    """
    if n_masses < 1:
        raise ValueError(f"n_masses must be at least 1, got {n_masses}")
    if stiffness <= 0 or damping <= 0:
        raise ValueError("stiffness and damping must be positive")
    if ground_stiffness < 0:
        raise ValueError("ground stiffness must be non-negative")
    rng = np.random.default_rng(seed)
    k = stiffness * (1.0 + 0.1 * rng.uniform(-1.0, 1.0, size=n_masses))
    K = ground_stiffness * np.eye(n_masses)
    for i in range(n_masses):
        K[i, i] += k[i]
        if i + 1 < n_masses:
            K[i, i] += k[i + 1]
            K[i, i + 1] -= k[i + 1]
            K[i + 1, i] -= k[i + 1]
    n = 2 * n_masses
    A = np.zeros((n, n))
    A[:n_masses, n_masses:] = np.eye(n_masses)
    A[n_masses:, :n_masses] = -K
    A[n_masses:, n_masses:] = -damping * np.eye(n_masses)
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    M = np.zeros((n, n))
    M[:n_masses, :n_masses] = K / 2.0
    M[n_masses:, n_masses:] = np.eye(n_masses) / 2.0
    return LtiQuadraticSystem(A, B, M)


def build_system(config):
    """System instance for a config (generator or file bundle)."""
    if config.generator == "random_definite":
        return generate_random_system(config.n, config.seed, "definite", config.n_in)
    if config.generator == "random_indefinite":
        return generate_random_system(config.n, config.seed, "indefinite", config.n_in)
    if config.generator == "msd_chain":
        return generate_msd_chain(config.n_masses, config.stiffness, config.damping,
                                  config.seed, config.ground_stiffness)
    if config.generator == "from_files":
        from .io import load_system

        if not config.system_dir:
            raise ValueError("generator 'from_files' needs system_dir")
        return load_system(config.system_dir)
    raise ValueError(f"unknown generator {config.generator!r}")


class _Stopwatch:
    def __init__(self, timings, method, r, phase):
        self.timings = timings
        self.method, self.r, self.phase = method, r, phase

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.timings.append(
            TimingRecord(self.method, self.r, self.phase, time.perf_counter() - self.start)
        )
        return False


def _simulate_rom(model, signal, ref, rtol, atol):
    traj = simulate(model, signal, (ref.times[0], ref.times[-1]), rtol=rtol, atol=atol,
                    t_eval=ref.times)
    return error_metrics(ref, traj)


def run_reduction(config):
    """Execute the configured methods over the r sweep and score the ROMs.

    The full-order model is simulated once; its adaptive time grid is the
    reference grid on which every reduced model is sampled (through the
    integrator's dense output) and scored.  Failures are recorded per
    (method, r) cell and do not stop the sweep.
    """
    sys = build_system(config)
    signal = config.signal()
    timings, errors, failures = [], [], []
    singular_values, output_energy = {}, {}

    with _Stopwatch(timings, "fom", 0, "simulate"):
        ref = simulate(sys, signal, (0.0, config.t_end), rtol=config.rtol, atol=config.atol)

    for method in config.methods:
        runner = {
            "linear_direct": _run_linear_direct,
            "qb_direct": _run_qb_direct,
            "qb_adi": _run_qb_adi,
        }[method]
        try:
            runner(config, sys, signal, ref, errors, failures, timings,
                   singular_values, output_energy)
        except (QuadbtError, np.linalg.LinAlgError, ValueError) as exc:
            for r in config.r_list:
                failures.append(FailureRecord(method, r, type(exc).__name__, str(exc)))

    return ExperimentReport(
        config=config,
        singular_values=singular_values,
        output_energy=output_energy,
        errors=errors,
        failures=failures,
        timings=timings,
        reference=ref,
    )


def _record_cell(method, r, metrics, errors):
    errors.append(ErrorRecord(method, r, metrics.e_abs, metrics.e_rel, metrics.excluded))


def _run_linear_direct(config, sys, signal, ref, errors, failures, timings,
                       singular_values, output_energy):
    method = "linear_direct"
    mimo = transform.to_mimo_linear(sys, config.tol_split)
    with _Stopwatch(timings, method, 0, "lyapunov"):
        L_P = balancing.symmetric_factor(
            lyapunov.solve_lyapunov_dense(mimo.A, mimo.B @ mimo.B.T))
        L = np.hstack([mimo.L_plus, mimo.L_minus])
        L_Q = balancing.symmetric_factor(
            lyapunov.solve_lyapunov_dense(mimo.A.T, L @ L.T))
    with _Stopwatch(timings, method, 0, "svd"):
        hankel = np.linalg.svd(L_Q.T @ L_P, compute_uv=False)
    singular_values[method] = hankel
    for r in config.r_list:
        try:
            with _Stopwatch(timings, method, r, "reduce"):
                rom = balancing.linear_balanced_truncation(mimo, r, L_P=L_P, L_Q=L_Q)
            with _Stopwatch(timings, method, r, "simulate"):
                metrics = _simulate_rom(rom, signal, ref, config.rtol, config.atol)
            _record_cell(method, r, metrics, errors)
        except (QuadbtError, np.linalg.LinAlgError, ValueError) as exc:
            failures.append(FailureRecord(method, r, type(exc).__name__, str(exc)))


def _qb_dense_factors(config, sys, timings, method):
    qb = transform.to_quadratic_bilinear(sys, config.epsilon)
    with _Stopwatch(timings, method, 0, "lyapunov"):
        P = lyapunov.solve_lyapunov_dense(sys.A, sys.B @ sys.B.T)
        F_obs = qb.S @ P @ qb.S + (qb.N.T / 2.0) @ (qb.N.T / 2.0).T * 4.0
        Q = lyapunov.solve_lyapunov_dense(sys.A.T, F_obs)
        p2 = balancing.compute_output_energy(P, qb.S, sys.M, sys.B)
        L_P = balancing.symmetric_factor(P)
        L_Q = balancing.symmetric_factor(Q)
    return qb, L_P, L_Q, p2


def _run_qb_direct(config, sys, signal, ref, errors, failures, timings,
                   singular_values, output_energy):
    method = "qb_direct"
    qb, L_P, L_Q, p2 = _qb_dense_factors(config, sys, timings, method)
    output_energy[method] = p2
    for r in config.r_list:
        try:
            with _Stopwatch(timings, method, r, "svd"):
                bt = balancing.balance(L_P, L_Q, p2, config.epsilon, r)
            with _Stopwatch(timings, method, r, "reduce"):
                rom = balancing.reduce_model(qb, bt)
            if method not in singular_values:
                singular_values[method] = bt.singular_values_augmented()
            with _Stopwatch(timings, method, r, "simulate"):
                metrics = _simulate_rom(rom, signal, ref, config.rtol, config.atol)
            _record_cell(method, r, metrics, errors)
        except (QuadbtError, np.linalg.LinAlgError, ValueError) as exc:
            failures.append(FailureRecord(method, r, type(exc).__name__, str(exc)))


def _run_qb_adi(config, sys, signal, ref, errors, failures, timings,
                singular_values, output_energy):
    method = "qb_adi"
    qb = transform.to_quadratic_bilinear(sys, config.epsilon)
    shifts = lyapunov.compute_shifts(sys.A, start=sys.B[:, 0])
    # the observability solve runs few iterations, so its shift set is
    # sized to exactly one cycle
    shifts_obs = lyapunov.compute_shifts(sys.A, num_shifts=config.adi.j_Q,
                                         start=sys.B[:, 0])
    for r in config.r_list:
        try:
            k_P = r + config.adi.k_P_extra
            with _Stopwatch(timings, method, r, "lyapunov"):
                Z_P = lyapunov.solve_lyapunov_adi(
                    sys.A, sys.B, shifts, max_iter=k_P, tol=config.adi.tol,
                    kind="reachability")
                Z_F = lyapunov.observability_rhs_factor(
                    qb.S, Z_P.Z, sys.M, sys.B, k_P_prime=min(r, Z_P.rank))
                Z_Q = lyapunov.solve_lyapunov_adi(
                    sys.A.T, Z_F, shifts_obs, max_iter=config.adi.j_Q,
                    tol=config.adi.tol, kind="observability")
                p2 = balancing.compute_output_energy_lowrank(Z_P.Z, qb.S, sys.M, sys.B)
            with _Stopwatch(timings, method, r, "svd"):
                bt = balancing.balance(Z_P.Z, Z_Q.Z, p2, config.epsilon, r)
            with _Stopwatch(timings, method, r, "reduce"):
                rom = balancing.reduce_model(qb, bt)
            singular_values[method] = bt.singular_values_augmented()
            output_energy[method] = p2
            with _Stopwatch(timings, method, r, "simulate"):
                metrics = _simulate_rom(rom, signal, ref, config.rtol, config.atol)
            _record_cell(method, r, metrics, errors)
        except (QuadbtError, np.linalg.LinAlgError, ValueError) as exc:
            failures.append(FailureRecord(method, r, type(exc).__name__, str(exc)))


def epsilon_sensitivity(config, eps_list, r, num_samples=2001):
    """Maximum output differences of one ROM across stabilization values.

    Builds the order-r reduced model for every eps in eps_list (reduced
    output damping kept at zero), simulates each on a shared uniform
    grid, and reports the max-over-time difference to the run with the
    smallest eps as reference.  Every eps must keep the augmented
    singular value inside the dominant set, otherwise the balancing step
    raises.
    """
    eps_list = sorted(float(e) for e in eps_list)
    if any(e <= 0 for e in eps_list):
        raise ValueError("all stabilization parameters must be positive")
    sys = build_system(config)
    signal = config.signal()
    base = replace(config, epsilon=eps_list[0])
    _, L_P, L_Q, p2 = _qb_dense_factors(base, sys, [], "qb_direct")
    grid = np.linspace(0.0, config.t_end, num_samples)

    outputs = {}
    for eps in eps_list:
        bt = balancing.balance(L_P, L_Q, p2, eps, r)
        qb = transform.to_quadratic_bilinear(sys, eps)
        rom = balancing.reduce_model(qb, bt, epsilon_rom=0.0)
        traj = simulate(rom, signal, (0.0, config.t_end), rtol=config.rtol,
                        atol=config.atol, t_eval=grid)
        outputs[eps] = traj.output
    ref = outputs[eps_list[0]]
    return {
        eps: float(np.max(np.abs(outputs[eps] - ref))) for eps in eps_list[1:]
    }
