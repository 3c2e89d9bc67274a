"""Command-line entry point.

Exit codes: 0 success, 1 assumption or acceptance failure, 2 config error,
3 bias-guard abort, 4 degenerate study.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .coefficients import validate_assumptions
from .config import ConfigError, build_model, build_params, initial_state, load_config
from .frozen import estimate_fbar_ergodic, fbar_analytic
from .integrators import ErgodicFbarTable, n_substeps, simulate_averaged, simulate_coupled
from .noise import NoiseStream
from .persistence import (canonical_json, content_hash, make_run_dir, write_error_report,
                          write_fbar_estimate, write_json, write_manifest, write_trajectory_csv)
from .spectral import SineField

log = logging.getLogger("msbl")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD, EXIT_DEGENERATE = 0, 1, 2, 3, 4

_STUDY_SECTION = {"study-strong": "strong", "study-weak": "weak", "study-moments": "moments",
                  "study-galerkin": "galerkin", "simulate": "simulate"}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="parent directory for run directories")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override a config key (repeatable), e.g. sim.macro_dt=5e-4")
    common.add_argument("--paths", type=int, metavar="N", help="Monte-Carlo path count")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="msbl", description="Slow-fast stochastic Burgers averaging lab")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check the standing assumptions")
    sp = sub.add_parser("simulate", parents=[common], help="write trajectories")
    sp.add_argument("--eps", type=float, help="scale parameter for this run")
    fp = sub.add_parser("fbar", parents=[common], help="averaged drift at a slow state")
    fp.add_argument("x", metavar="X_CSV", help="coefficient CSV (mode,value rows)")
    for name, desc in (("study-strong", "strong order in eps"), ("study-weak", "weak order in eps"),
                       ("study-moments", "uniform moment bounds"),
                       ("study-galerkin", "spectral truncation convergence")):
        sub.add_parser(name, parents=[common], help=desc)
    return p


def _load(args) -> dict:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"sim.master_seed={args.seed}")
    if args.paths is not None:
        section = _STUDY_SECTION.get(args.command, "sim")
        overrides.append(f"{section}.n_paths={args.paths}")
    return load_config(args.config, overrides)


def _emit(args, payload: dict, text: str) -> None:
    print(canonical_json(payload) if args.json else text, end="" if args.json else "\n")


def _run_dir(args, cfg: dict, name: str) -> Path:
    out = args.out or cfg["out"]
    d = make_run_dir(out, content_hash(cfg))
    write_manifest(d, cfg, command=name, model_id=_model_id(cfg),
                   master_seed=cfg["sim"]["master_seed"])
    return d


def _model_id(cfg: dict) -> str:
    m = cfg["model"]
    return m if isinstance(m, str) else m.get("id", m.get("name", m.get("family", "inline")))


def cmd_validate(args, cfg) -> int:
    model = build_model(cfg)
    params = build_params(cfg)
    rep = validate_assumptions(model, params.cov1, params.cov2)
    lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: measured={c.measured:.6g} "
             f"threshold={c.threshold:.6g} ({c.detail})" for c in rep.checks]
    lines.append(f"overall: {'PASS' if rep.overall else 'FAIL'}")
    _emit(args, rep.to_dict(), "\n".join(lines))
    return EXIT_OK if rep.overall else EXIT_FAIL


def cmd_simulate(args, cfg) -> int:
    model = build_model(cfg)
    extra = {} if args.eps is None else {"eps": args.eps}
    params = build_params(cfg, "simulate", **extra)
    sec = cfg["simulate"]
    x0 = initial_state(sec["x0"], params.m)
    y0 = initial_state(sec["y0"], params.m)
    d = _run_dir(args, cfg, "simulate")
    files = []
    log.info("n_sub=%d fast substeps per macro step", n_substeps(params))
    mode = "analytic" if model.is_linear else ErgodicFbarTable(model, params.cov2, tol=0.1)
    for pid in range(params.n_paths):
        xs, ys = simulate_coupled(x0, y0, model, params, pid)
        files.append(write_trajectory_csv(xs, d / f"slow_eps_{pid}.csv"))
        files.append(write_trajectory_csv(ys, d / f"fast_eps_{pid}.csv"))
        if sec["averaged"]:
            xb = simulate_averaged(x0, model, params, mode, pid)
            files.append(write_trajectory_csv(xb, d / f"averaged_{pid}.csv"))
    write_json(d / "simulation.json", {"params": params.to_dict(), "model": model.to_dict(),
                                       "n_sub": n_substeps(params),
                                       "files": [f.name for f in files]})
    _emit(args, {"run_dir": str(d), "files": [f.name for f in files]},
          f"wrote {len(files)} trajectories to {d}")
    return EXIT_OK


def _read_x(path: str, m: int) -> SineField:
    coeffs = np.zeros(m)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    for i, row in enumerate(rows):
        try:
            if len(row) >= 2:
                k, v = int(row[0]), float(row[1])
            else:
                k, v = i + 1, float(row[0])
        except ValueError:
            raise ConfigError(f"{path}: row {i + 1}: cannot parse {row!r}") from None
        if not 1 <= k <= m:
            raise ConfigError(f"{path}: mode {k} outside 1..{m}")
        coeffs[k - 1] = v
    return SineField(coeffs)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_fbar(args, cfg) -> int:
    model = build_model(cfg)
    params = build_params(cfg)
    x = _read_x(args.x, params.m)
    fc = cfg["fbar"]
    if not model.is_linear and not fc["ergodic"]:
        print(f"model {model.name!r} has no analytic averaged drift and ergodic mode is off",
              file=sys.stderr)
        return EXIT_FAIL
    analytic = fbar_analytic(model, x).coeffs if model.is_linear else None
    est = None
    if fc["ergodic"]:
        est = estimate_fbar_ergodic(model, x, params.cov2, burn_in=fc["burn_in"], window=fc["window"],
                                    micro_dt=fc["micro_dt"],
                                    stream=NoiseStream(params.master_seed, int(fc["seed"])))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "analytic", "ergodic", "std_err"])
    for k in range(params.m):
        w.writerow([k + 1,
                    "" if analytic is None else repr(float(analytic[k])),
                    "" if est is None else repr(float(est.value.coeffs[k])),
                    "" if est is None else repr(float(est.std_err[k]))])
    if args.out:
        d = _run_dir(args, cfg, "fbar")
        (d / "fbar.csv").write_text(buf.getvalue())
        if est is not None:
            write_fbar_estimate(est, d / "fbar_estimate.json")
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _print_order(args, report: ex.ErrorReport, band, d: Path) -> int:
    ok = band[0] <= report.fitted_order <= band[1] and not report.flags
    payload = {"fitted_order": report.fitted_order, "order_ci": list(report.order_ci),
               "band": list(band), "flags": report.flags, "passed": ok, "run_dir": str(d)}
    text = (f"{report.kind} order {report.fitted_order:.4f} "
            f"(95% CI [{report.order_ci[0]:.4f}, {report.order_ci[1]:.4f}]), "
            f"band [{band[0]}, {band[1]}]: {'PASS' if ok else 'FAIL'}")
    for f in report.flags:
        text += f"\n  flag: {f}"
    _emit(args, payload, text + f"\nreports in {d}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_study(args, cfg) -> int:
    kind = _STUDY_SECTION[args.command]
    sec = cfg[kind]
    model = build_model(cfg)
    params = build_params(cfg, kind)
    x0 = initial_state(sec["x0"], params.m)
    y0 = initial_state(sec["y0"], params.m)
    if kind == "strong":
        rep = ex.strong_error_study(model, x0, y0, sec["eps_grid"], params, p=sec["p"], guard=sec["guard"])
    elif kind == "weak":
        rep = ex.weak_error_study(model, x0, y0, sec["phi"], sec["eps_grid"], params, guard=sec["guard"])
    elif kind == "moments":
        rep = ex.moment_check(model, x0, y0, sec["eps_grid"], params, p=sec["p"],
                              threshold=sec["threshold"])
    else:
        m_ref = sec["m_ref"]
        x0 = initial_state(sec["x0"], m_ref)
        y0 = initial_state(sec["y0"], m_ref)
        rep = ex.galerkin_refinement_check(model, sec["eps"], params, sec["m_list"], m_ref, x0, y0)
    d = _run_dir(args, cfg, args.command)
    if kind in ("strong", "weak"):
        write_error_report(rep, d, kind)
        return _print_order(args, rep, sec["band"], d)
    write_json(d / f"{kind}.json", rep.to_json())
    if kind == "moments":
        ok = rep.passed
        text = (f"moments: E sup|X|^p ratio {rep.ratio_x:.4f}, sup E|Y|^p ratio {rep.ratio_y:.4f} "
                f"(limit {rep.threshold}): {'PASS' if ok else 'FAIL'}")
    else:
        ok = rep.decreasing
        vals = ", ".join(f"m={m}: {e:.4g}" for m, e in zip(rep.m_list, rep.errors))
        text = f"galerkin vs m_ref={rep.m_ref}: {vals}: {'PASS' if ok else 'FAIL (not decreasing)'}"
    _emit(args, {**rep.to_json(), "run_dir": str(d)}, text + f"\nreports in {d}")
    return EXIT_OK if ok else EXIT_FAIL


_COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate, "fbar": cmd_fbar}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        return _COMMANDS.get(args.command, cmd_study)(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ex.BiasGuardError as e:
        print(f"bias guard: {e}\n  dt_bias={e.dt_bias:.6g} suggested macro_dt={e.suggested_macro_dt:.6g}",
              file=sys.stderr)
        return EXIT_GUARD
    except ex.DegenerateStudyError as e:
        print(str(e), file=sys.stderr)
        return EXIT_DEGENERATE
    except ex.AssumptionError as e:
        print(f"validation failed: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
