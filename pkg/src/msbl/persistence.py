"""Run directories, manifests and report/trajectory files.

Report files carry no timestamps or host data, so identical inputs give
byte-identical files.  Only the run directory name holds the wall-clock time.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from pathlib import Path

import numpy as np

from .frozen import FbarEstimate
from .integrators import Trajectory

__all__ = [
    "canonical_json",
    "content_hash",
    "make_run_dir",
    "write_json",
    "write_error_report",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_manifest",
    "write_fbar_estimate",
    "read_fbar_estimate",
]


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_default, allow_nan=True) + "\n"


def content_hash(obj) -> str:
    """Git blob SHA-1 of the canonical JSON encoding of ``obj``."""
    data = canonical_json(obj).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def make_run_dir(out: str | Path, config_hash: str, now: _dt.datetime | None = None) -> Path:
    now = now or _dt.datetime.now()
    base = Path(out) / f"{now:%Y%m%d-%H%M%S}_{config_hash[:10]}"
    path, k = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(canonical_json(obj))
    return path


def _fmt(v: float) -> str:
    return repr(float(v))


def write_error_report(report, directory: str | Path, stem: str) -> list[Path]:
    """``<stem>.json``, ``<stem>.csv`` (eps, error, std_err) and ``<stem>_plot.csv``."""
    from .experiments import fit_line

    d = Path(directory)
    files = [write_json(d / f"{stem}.json", report.to_json())]
    p = d / f"{stem}.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "error", "std_err"])
        for row in zip(report.eps_grid, report.errors, report.std_errs):
            w.writerow([_fmt(v) for v in row])
    files.append(p)
    line = fit_line(report.eps_grid, report.errors, report.std_errs)
    p = d / f"{stem}_plot.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["log10_eps", "log10_error", "fit_line"])
        for e, err, f in zip(report.eps_grid, report.errors, line):
            w.writerow([_fmt(np.log10(e)), _fmt(np.log10(err)), _fmt(f)])
    files.append(p)
    return files


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> Path:
    """Columns ``t, mode_1 .. mode_m`` for a single-path trajectory."""
    states = traj.states.coeffs
    if states.ndim != 2:
        raise ValueError("write one path per file; got a batched trajectory")
    path = Path(path)
    m = states.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"mode_{k}" for k in range(1, m + 1)])
        for t, row in zip(traj.times, states):
            w.writerow([_fmt(t)] + [_fmt(v) for v in row])
    return path


def read_trajectory_csv(path: str | Path, kind: str) -> Trajectory:
    from .spectral import SineField

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(data[:, 0], SineField(data[:, 1:]), kind)


def write_manifest(directory: str | Path, config: dict, **extra) -> Path:
    """``manifest.json``: the full config, its content hash and run metadata."""
    body = {"config": config, "config_hash": content_hash(config)}
    body.update(extra)
    return write_json(Path(directory) / "manifest.json", body)


def write_fbar_estimate(est: FbarEstimate, path: str | Path) -> Path:
    return write_json(path, est.to_json())


def read_fbar_estimate(path: str | Path) -> FbarEstimate:
    return FbarEstimate.from_json(json.loads(Path(path).read_text()))
