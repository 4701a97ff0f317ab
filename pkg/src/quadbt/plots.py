"""Figure rendering for reduction reports.

Every plot goes straight to a file next to the CSV it illustrates; no
interactive backends are touched.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_METHOD_STYLE = {
    "linear_direct": dict(color="tab:blue", marker="o", ms=3),
    "qb_direct": dict(color="tab:red", marker="s", ms=3),
    "qb_adi": dict(color="tab:green", marker="^", ms=3),
    "fom": dict(color="black"),
}


def _style(method):
    return _METHOD_STYLE.get(method, dict(marker="."))


def singular_value_figure(sv_by_method, path, normalized=False, max_index=None):
    """Semilogy decay of the reported singular values per method.

    Normalization follows the augmented-system convention: methods whose
    largest value is the stabilization-scaled output direction are scaled
    by their second value, the linear baseline by its first.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, values in sv_by_method.items():
        v = np.sort(np.asarray(values, dtype=float))[::-1]
        if max_index:
            v = v[:max_index]
        if normalized:
            pivot = v[1] if method.startswith("qb") and v.size > 1 else v[0]
            v = v / pivot
        ax.semilogy(np.arange(1, v.size + 1), v, label=method, lw=1, **_style(method))
    ax.set_xlabel("index")
    ax.set_ylabel("normalized singular value" if normalized else "singular value")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def error_figure(error_records, path):
    """Maximum absolute and mean relative error against reduced order."""
    methods = sorted({rec.method for rec in error_records})
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for which, ax, label in ((0, axes[0], "E_abs"), (1, axes[1], "E_rel")):
        for method in methods:
            rows = sorted((rec.r, rec) for rec in error_records if rec.method == method)
            rs = [r for r, _ in rows]
            vals = [rec.e_abs if which == 0 else rec.e_rel for _, rec in rows]
            ax.semilogy(rs, vals, label=method, lw=1, **_style(method))
        ax.set_xlabel("reduced dimension r")
        ax.set_ylabel(label)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def timing_figure(timing_records, path):
    """Per-phase wall-clock seconds against reduced order."""
    methods = sorted({rec.method for rec in timing_records if rec.method != "fom"})
    phases = sorted({rec.phase for rec in timing_records})
    fig, axes = plt.subplots(1, len(methods) or 1, figsize=(4 * max(len(methods), 1), 4),
                             squeeze=False)
    for ax, method in zip(axes[0], methods):
        for phase in phases:
            rows = sorted(
                (rec.r, rec.seconds)
                for rec in timing_records
                if rec.method == method and rec.phase == phase
            )
            if not rows:
                continue
            ax.semilogy([r for r, _ in rows], [s for _, s in rows], marker=".",
                        lw=1, label=phase)
        ax.set_title(method)
        ax.set_xlabel("r")
        ax.set_ylabel("seconds")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def trajectory_figure(traj, path, label="y"):
    """Output of one transient simulation over time."""
    fig, ax = plt.subplots(figsize=(6, 4))
    y = np.asarray(traj.output)
    if y.ndim == 1:
        ax.plot(traj.times, y, lw=0.8, color="black")
    else:
        for j in range(min(y.shape[1], 12)):
            ax.plot(traj.times, y[:, j], lw=0.6)
    ax.set_xlabel("time")
    ax.set_ylabel(label)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
