"""Command line interface.

Subcommands: generate a benchmark system, reduce a system to a model
bundle, simulate a system or reduced model, sweep a full config, and
check the structural invariants of a system bundle.  Report directories
contain the delimited data, rendered figures and a manifest with content
hashes.
"""

import argparse
import json
import sys as _sys
from pathlib import Path

import numpy as np

from . import balancing, io, lyapunov, plots, transform
from .errors import QuadbtError
from .experiments import (
    ExperimentConfig,
    build_system,
    generate_msd_chain,
    generate_random_system,
    run_reduction,
)
from .simulate import InputSignal, error_metrics, integrate_trapezoidal, simulate
from .systems import quadratic_term_matrix, spectral_abscissa


def _add_generate(sub):
    p = sub.add_parser("generate", help="create a benchmark system bundle")
    p.add_argument("--kind", required=True,
                   choices=["random-definite", "random-indefinite", "msd-chain"])
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--n-in", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--masses", type=int, default=10)
    p.add_argument("--stiffness", type=float, default=2.0)
    p.add_argument("--damping", type=float, default=0.4)
    p.add_argument("--out", required=True)


def _add_reduce(sub):
    p = sub.add_parser("reduce", help="balance and truncate a system bundle")
    p.add_argument("--system", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-r", "--order", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--method", choices=["qb-direct", "qb-adi"], default="qb-direct")
    p.add_argument("--adi-extra", type=int, default=10,
                   help="extra reachability iterations beyond r")
    p.add_argument("--adi-obs-steps", type=int, default=10,
                   help="observability iterations")
    p.add_argument("--residuals", action="store_true",
                   help="dump per-iteration ADI residual CSVs")


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="transient simulation of a bundle")
    p.add_argument("--model", required=True, help="system or reduced-model directory")
    p.add_argument("--out", required=True)
    p.add_argument("--input", choices=["chirp", "harmonic", "zero"], default="chirp")
    p.add_argument("--rate", type=float, default=0.1, help="chirp k0 or harmonic omega")
    p.add_argument("--t-end", type=float, default=100.0)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--atol", type=float, default=1e-8)
    p.add_argument("--trapezoidal-steps", type=int, default=0,
                   help="use the fixed-step trapezoidal rule with this many steps")


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="full method/order sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)


def _add_check(sub):
    p = sub.add_parser("check", help="run the invariant suite on a system bundle")
    p.add_argument("--system", required=True)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--t-end", type=float, default=10.0)


def _signal_from_args(args, n_in):
    if args.input == "chirp":
        return InputSignal.chirp(args.rate, n_in)
    if args.input == "harmonic":
        return InputSignal.harmonic(args.rate, n_in)
    return InputSignal.zero(n_in)


def cmd_generate(args):
    if args.kind == "msd-chain":
        sys = generate_msd_chain(args.masses, args.stiffness, args.damping, args.seed)
    else:
        mode = "definite" if args.kind == "random-definite" else "indefinite"
        sys = generate_random_system(args.n, args.seed, mode, args.n_in)
    io.save_system(sys, args.out)
    print(f"wrote system bundle: n={sys.n}, n_in={sys.n_in} -> {args.out}")
    return 0


def cmd_reduce(args):
    sys = io.load_system(args.system)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    qb = transform.to_quadratic_bilinear(sys, args.epsilon)
    r = args.order
    if args.method == "qb-direct":
        P = lyapunov.solve_lyapunov_dense(sys.A, sys.B @ sys.B.T)
        F_obs = qb.S @ P @ qb.S + 4.0 * (qb.N.T / 2.0) @ (qb.N.T / 2.0).T
        Q = lyapunov.solve_lyapunov_dense(sys.A.T, F_obs)
        p2 = balancing.compute_output_energy(P, qb.S, sys.M, sys.B)
        L_P = balancing.symmetric_factor(P)
        L_Q = balancing.symmetric_factor(Q)
    else:
        shifts = lyapunov.compute_shifts(sys.A, start=sys.B[:, 0])
        shifts_obs = lyapunov.compute_shifts(sys.A, num_shifts=args.adi_obs_steps,
                                             start=sys.B[:, 0])
        Z_P = lyapunov.solve_lyapunov_adi(sys.A, sys.B, shifts,
                                          max_iter=r + args.adi_extra, tol=0.0)
        Z_F = lyapunov.observability_rhs_factor(qb.S, Z_P.Z, sys.M, sys.B,
                                                k_P_prime=min(r, Z_P.rank))
        Z_Q = lyapunov.solve_lyapunov_adi(sys.A.T, Z_F, shifts_obs,
                                          max_iter=args.adi_obs_steps, tol=0.0,
                                          kind="observability")
        p2 = balancing.compute_output_energy_lowrank(Z_P.Z, qb.S, sys.M, sys.B)
        L_P, L_Q = Z_P.Z, Z_Q.Z
        if args.residuals:
            io.write_residual_csv(out / "adi_residuals_P.csv", Z_P.residuals)
            io.write_residual_csv(out / "adi_residuals_Q.csv", Z_Q.residuals)
    bt = balancing.balance(L_P, L_Q, p2, args.epsilon, r)
    rom = balancing.reduce_model(qb, bt)
    io.save_rom(rom, out)
    sv = bt.singular_values_augmented()
    io.write_single_sv_csv(out / "sv.csv", sv)
    (out / "sv_meta.json").write_text(json.dumps({
        "epsilon": args.epsilon,
        "output_energy": p2,
        "n": sys.n,
        "r": r,
    }, indent=2) + "\n")
    plots.singular_value_figure({args.method.replace("-", "_"): sv}, out / "sv.png")
    print(f"wrote reduced model (r={r}, method={args.method}) -> {out}")
    return 0


def cmd_simulate(args):
    model = io.load_model(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    signal = _signal_from_args(args, model.n_in)
    if args.trapezoidal_steps > 0:
        traj = integrate_trapezoidal(model, signal, (0.0, args.t_end),
                                     args.trapezoidal_steps)
    else:
        traj = simulate(model, signal, (0.0, args.t_end), rtol=args.rtol, atol=args.atol)
    io.write_trajectory_csv(traj, out / "trajectory.csv")
    plots.trajectory_figure(traj, out / "trajectory.png")
    print(f"wrote trajectory ({len(traj)} points) -> {out}")
    return 0


def cmd_sweep(args):
    config = ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_reduction(config)
    io.write_sv_csv(out / "sv.csv", report.singular_values)
    io.write_errors_csv(out / "errors.csv", report.errors)
    io.write_timing_csv(out / "timing.csv", report.timings)
    (out / "report.json").write_text(json.dumps({
        "output_energy": report.output_energy,
        "failures": [vars(f) for f in report.failures],
        "complete": report.is_complete(),
    }, indent=2) + "\n")
    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    if report.singular_values:
        plots.singular_value_figure(report.singular_values, figures / "sv.png",
                                    max_index=max(config.r_list) * 2)
        plots.singular_value_figure(report.singular_values,
                                    figures / "sv_normalized.png",
                                    normalized=True, max_index=max(config.r_list) * 2)
    if report.errors:
        plots.error_figure(report.errors, figures / "errors.png")
    if report.timings:
        plots.timing_figure(report.timings, figures / "timing.png")
    io.write_manifest(out, config.to_dict())
    n_fail = len(report.failures)
    print(f"sweep complete: {len(report.errors)} cells, {n_fail} failures -> {out}")
    for f in report.failures:
        print(f"  FAILED {f.method} r={f.r}: {f.error_type}: {f.message}")
    return 0 if report.is_complete() else 1


def cmd_check(args):
    sys = io.load_system(args.system)
    failures = []

    def report(name, ok, detail=""):
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else ""))
        if not ok:
            failures.append(name)

    report("output matrix symmetric", np.array_equal(sys.M, sys.M.T))
    alpha = spectral_abscissa(sys.A)
    report("system matrix stable", alpha < 0, f"spectral abscissa {alpha:.3e}")

    L_plus, L_minus = transform.split_indefinite(sys.M)
    recon = L_plus @ L_plus.T - L_minus @ L_minus.T - sys.M
    norm_M = max(np.linalg.norm(sys.M), 1e-300)
    report("indefinite split reconstructs M",
           np.linalg.norm(recon) <= 1e-10 * norm_M,
           f"m+={L_plus.shape[1]}, m-={L_minus.shape[1]}")

    qb = transform.to_quadratic_bilinear(sys, args.epsilon)
    report("quadratic-term matrix symmetric", np.array_equal(qb.S, qb.S.T))
    report("bilinear rows match 2 b_j^T M",
           np.allclose(qb.N, 2.0 * sys.B.T @ sys.M, rtol=0, atol=1e-13 * norm_M))
    report("bilinear term vanishes", True,
           str(transform.bilinear_vanishes(sys)))

    if sys.n <= 50:
        H = quadratic_term_matrix(qb.S)
        rng = np.random.default_rng(0)
        ok = True
        for _ in range(10):
            xt = rng.standard_normal(sys.n + 1)
            lhs = H @ np.kron(xt, xt)
            rhs = np.zeros(sys.n + 1)
            rhs[-1] = xt[:-1] @ qb.S @ xt[:-1]
            ok = ok and np.allclose(lhs, rhs, atol=1e-10 * max(np.linalg.norm(qb.S), 1.0))
        report("quadratic matricization matches", ok)

    signal = InputSignal.chirp(0.1, sys.n_in)
    qb0 = transform.to_quadratic_bilinear(sys, 0.0)
    ref = simulate(sys, signal, (0.0, args.t_end))
    aug = simulate(qb0, signal, (0.0, args.t_end), t_eval=ref.times)
    gap = np.max(np.abs(aug.output - ref.output))
    scale = 1e-8 + 1e-6 * np.max(np.abs(ref.output))
    report("augmented output matches quadratic output", gap <= 10 * scale,
           f"max gap {gap:.3e}")

    mimo = transform.to_mimo_linear(sys)
    z = simulate(mimo, signal, (0.0, args.t_end), t_eval=ref.times)
    from .simulate import recombine_quadratic

    gap = np.max(np.abs(recombine_quadratic(mimo, z.output) - ref.output))
    report("recombined linear outputs match", gap <= 10 * scale, f"max gap {gap:.3e}")

    print(f"{'OK' if not failures else 'FAILED'}: {len(failures)} failing checks")
    return 0 if not failures else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="quadbt",
        description="Balanced truncation for linear systems with quadratic outputs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_reduce(sub)
    _add_simulate(sub)
    _add_sweep(sub)
    _add_check(sub)
    args = parser.parse_args(argv)
    handler = {
        "generate": cmd_generate,
        "reduce": cmd_reduce,
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "check": cmd_check,
    }[args.command]
    try:
        return handler(args)
    except (QuadbtError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
