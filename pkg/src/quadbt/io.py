"""File formats: Matrix Market system bundles, CSV reports, manifests.

A system or reduced model is a directory of Matrix Market files (dense
array or sparse coordinate, real) named by a small JSON manifest.  All
delimited output uses 17 significant digits so identical runs produce
identical bytes; manifests record git-style blob hashes of every file.
"""

import hashlib
import json
from pathlib import Path

import numpy as np
from scipy.io import mmread, mmwrite

from .balancing import ReducedModel
from .systems import LtiQuadraticSystem

SYSTEM_MANIFEST = "system.json"
ROM_MANIFEST = "rom.json"
TRAJECTORY_FORMAT_VERSION = 1


def fmt(x):
    """Fixed 17-significant-digit float formatting used in all CSV output."""
    return f"{float(x):.17g}"


def _read_matrix(path):
    a = mmread(str(path))
    if not isinstance(a, np.ndarray):
        a = a.toarray()
    return np.asarray(a, dtype=float)


def save_system(sys, directory):
    """Write a system bundle (A, B, M, x0 plus manifest) to a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"A": "A.mtx", "B": "B.mtx", "M": "M.mtx", "x0": "x0.mtx"}
    mmwrite(str(directory / files["A"]), sys.A)
    mmwrite(str(directory / files["B"]), sys.B)
    mmwrite(str(directory / files["M"]), sys.M)
    mmwrite(str(directory / files["x0"]), sys.x0.reshape(-1, 1))
    manifest = {
        "kind": "lti_quadratic",
        "n": sys.n,
        "n_in": sys.n_in,
        "files": files,
    }
    (directory / SYSTEM_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return directory


def load_system(directory, assume_stable=False):
    """Read a system bundle written by save_system."""
    directory = Path(directory)
    manifest = json.loads((directory / SYSTEM_MANIFEST).read_text())
    if manifest.get("kind") != "lti_quadratic":
        raise ValueError(f"not a system bundle: kind={manifest.get('kind')!r}")
    files = manifest["files"]
    A = _read_matrix(directory / files["A"])
    B = _read_matrix(directory / files["B"])
    M = _read_matrix(directory / files["M"])
    x0 = _read_matrix(directory / files["x0"]).ravel()
    return LtiQuadraticSystem(A, B, M, x0, assume_stable=assume_stable)


def save_rom(rom, directory):
    """Write a reduced model bundle to a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"A": "A_r.mtx", "B": "B_r.mtx", "N": "N_r.mtx", "S": "S_r.mtx", "x0": "x0_r.mtx"}
    mmwrite(str(directory / files["A"]), rom.A)
    mmwrite(str(directory / files["B"]), rom.B)
    mmwrite(str(directory / files["N"]), rom.N)
    mmwrite(str(directory / files["S"]), rom.S)
    mmwrite(str(directory / files["x0"]), rom.x0.reshape(-1, 1))
    manifest = {
        "kind": "reduced_quadratic_bilinear",
        "r": rom.r,
        "n_in": rom.n_in,
        "output_energy": rom.output_energy,
        "epsilon": rom.epsilon,
        "files": files,
    }
    (directory / ROM_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return directory


def load_rom(directory):
    """Read a reduced model bundle written by save_rom."""
    directory = Path(directory)
    manifest = json.loads((directory / ROM_MANIFEST).read_text())
    if manifest.get("kind") != "reduced_quadratic_bilinear":
        raise ValueError(f"not a reduced model bundle: kind={manifest.get('kind')!r}")
    files = manifest["files"]
    S = _read_matrix(directory / files["S"])
    return ReducedModel(
        A=_read_matrix(directory / files["A"]),
        B=_read_matrix(directory / files["B"]),
        N=_read_matrix(directory / files["N"]),
        S=(S + S.T) / 2.0,
        output_energy=float(manifest["output_energy"]),
        epsilon=float(manifest["epsilon"]),
        x0=_read_matrix(directory / files["x0"]).ravel(),
    )


def load_model(directory):
    """Load either a system or a reduced model, detected by manifest."""
    directory = Path(directory)
    if (directory / SYSTEM_MANIFEST).exists():
        return load_system(directory)
    if (directory / ROM_MANIFEST).exists():
        return load_rom(directory)
    raise FileNotFoundError(f"no {SYSTEM_MANIFEST} or {ROM_MANIFEST} in {directory}")


def write_trajectory_csv(traj, path):
    """Trajectory as CSV, header t,y or t,y1..ym for vector outputs."""
    y = np.asarray(traj.output)
    lines = []
    if y.ndim == 1:
        lines.append("t,y")
        for t, yi in zip(traj.times, y):
            lines.append(f"{fmt(t)},{fmt(yi)}")
    else:
        m = y.shape[1]
        lines.append("t," + ",".join(f"y{j + 1}" for j in range(m)))
        for t, row in zip(traj.times, y):
            lines.append(fmt(t) + "," + ",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def save_trajectory(traj, path):
    """Versioned binary round-trip of a trajectory (npz container)."""
    np.savez(
        path,
        format_version=TRAJECTORY_FORMAT_VERSION,
        times=traj.times,
        states=traj.states,
        output=traj.output if traj.output is not None else np.empty(0),
    )


def load_trajectory(path):
    from .simulate import Trajectory

    with np.load(path) as data:
        version = int(data["format_version"])
        if version != TRAJECTORY_FORMAT_VERSION:
            raise ValueError(f"unsupported trajectory format version {version}")
        output = data["output"]
        return Trajectory(
            data["times"], data["states"], output if output.size else None
        )


def write_sv_csv(path, sv_by_method):
    """Singular values per method: columns method,index,sigma (descending)."""
    lines = ["method,index,sigma"]
    for method, values in sv_by_method.items():
        for i, s in enumerate(np.asarray(values, dtype=float)):
            lines.append(f"{method},{i + 1},{fmt(s)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_single_sv_csv(path, sigma):
    """Singular values of one reduction: columns index,sigma (descending)."""
    lines = ["index,sigma"]
    for i, s in enumerate(np.asarray(sigma, dtype=float)):
        lines.append(f"{i + 1},{fmt(s)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_errors_csv(path, records):
    """Error sweep rows: method,r,E_abs,E_rel."""
    lines = ["method,r,E_abs,E_rel"]
    for rec in records:
        lines.append(f"{rec.method},{rec.r},{fmt(rec.e_abs)},{fmt(rec.e_rel)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_timing_csv(path, records):
    """Phase timing rows: method,r,phase,seconds."""
    lines = ["method,r,phase,seconds"]
    for rec in records:
        lines.append(f"{rec.method},{rec.r},{rec.phase},{fmt(rec.seconds)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_residual_csv(path, residuals):
    """Per-iteration ADI residual history: iter,residual."""
    lines = ["iter,residual"]
    for i, r in enumerate(residuals):
        lines.append(f"{i},{fmt(r)}")
    Path(path).write_text("\n".join(lines) + "\n")


def git_blob_sha1(path):
    """Hash of file contents in git blob form: sha1('blob <len>\\0' + data)."""
    data = Path(path).read_bytes()
    h = hashlib.sha1()
    h.update(f"blob {len(data)}\0".encode())
    h.update(data)
    return h.hexdigest()


def write_manifest(run_dir, config_dict, extra=None):
    """Run manifest: config echo plus blob hashes of every produced file."""
    run_dir = Path(run_dir)
    files = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[str(p.relative_to(run_dir))] = git_blob_sha1(p)
    manifest = {"config": config_dict, "files": files}
    if extra:
        manifest.update(extra)
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return run_dir / "manifest.json"
