"""Monte-Carlo strong/weak error studies, moment and Galerkin diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .coefficients import ModelSpec, validate_assumptions
from .integrators import SimParams, n_substeps, run_paths
from .spectral import SineField

__all__ = [
    "StudyError",
    "AssumptionError",
    "BiasGuardError",
    "DegenerateStudyError",
    "ErrorReport",
    "TestFunctional",
    "FUNCTIONALS",
    "get_functional",
    "fit_order",
    "fit_line",
    "bias_guard",
    "strong_error_study",
    "weak_error_study",
    "moment_check",
    "galerkin_refinement_check",
    "STRONG_EPS_GRID",
    "WEAK_EPS_GRID",
]

STRONG_EPS_GRID = tuple(2.0**-k for k in range(3, 9))
WEAK_EPS_GRID = tuple(2.0**-k for k in range(2, 7))


class StudyError(RuntimeError):
    exit_code = 1


class AssumptionError(StudyError):
    exit_code = 1


class BiasGuardError(StudyError):
    exit_code = 3

    def __init__(self, msg: str, dt_bias: float, reference: float, suggested_macro_dt: float):
        super().__init__(msg)
        self.dt_bias = dt_bias
        self.reference = reference
        self.suggested_macro_dt = suggested_macro_dt


class DegenerateStudyError(StudyError):
    exit_code = 4


@dataclass(frozen=True)
class TestFunctional:
    """Bounded test function ``phi: H -> R`` evaluated on coefficient arrays."""

    id: str
    fn: Callable[[np.ndarray], np.ndarray]
    constant: bool = False

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(coeffs))


FUNCTIONALS = {
    "sin_e1": TestFunctional("sin_e1", lambda c: np.sin(c[..., 0])),
    "exp_neg_sq": TestFunctional("exp_neg_sq", lambda c: np.exp(-np.sum(c**2, axis=-1))),
    "inv_one_plus_sq": TestFunctional("inv_one_plus_sq", lambda c: 1.0 / (1.0 + np.sum(c**2, axis=-1))),
    "constant": TestFunctional("constant", lambda c: np.ones(c.shape[:-1]), constant=True),
}


def get_functional(phi_id: str) -> TestFunctional:
    try:
        return FUNCTIONALS[phi_id]
    except KeyError:
        raise KeyError(f"unknown test functional {phi_id!r}; known: {sorted(FUNCTIONALS)}") from None


@dataclass
class ErrorReport:
    eps_grid: list
    errors: list
    std_errs: list
    fitted_order: float
    order_ci: tuple
    protocol: dict
    kind: str = "strong"
    flags: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    bias_guard: dict | None = None

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ValueError("eps_grid must be strictly decreasing")
        if any(e <= 0 for e in self.errors):
            raise ValueError("errors must be > 0")
        lo, hi = self.order_ci
        if not lo <= self.fitted_order <= hi:
            raise ValueError("order_ci must contain fitted_order")

    def in_band(self, band: tuple[float, float]) -> bool:
        return band[0] <= self.fitted_order <= band[1]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "eps_grid": list(map(float, self.eps_grid)),
            "errors": list(map(float, self.errors)),
            "std_errs": list(map(float, self.std_errs)),
            "estimates": list(map(float, self.estimates)),
            "fitted_order": float(self.fitted_order),
            "order_ci": [float(self.order_ci[0]), float(self.order_ci[1])],
            "flags": list(self.flags),
            "bias_guard": self.bias_guard,
            "protocol": self.protocol,
        }


def _wls(eps_grid, errors, std_errs=None):
    eps = np.asarray(eps_grid, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.shape != err.shape or eps.ndim != 1:
        raise ValueError("eps_grid and errors must be 1-d of equal length")
    if len(eps) < 3:
        raise ValueError(f"need at least 3 points to fit an order, got {len(eps)}")
    if np.any(err <= 0) or np.any(eps <= 0):
        raise ValueError("errors and eps must be positive")
    X = np.log(eps)
    Y = np.log(err)
    w = np.ones_like(X)
    if std_errs is not None:
        se = np.asarray(std_errs, dtype=float)
        if np.all(se > 0) and np.all(np.isfinite(se)):
            w = (err / se) ** 2
    W = w.sum()
    xm = np.sum(w * X) / W
    ym = np.sum(w * Y) / W
    sxx = np.sum(w * (X - xm) ** 2)
    slope = float(np.sum(w * (X - xm) * (Y - ym)) / sxx)
    resid = Y - ym - slope * (X - xm)
    s2 = float(np.sum(w * resid**2) / (len(X) - 2))
    return slope, float(ym - slope * xm), math.sqrt(s2 / sxx)


def fit_order(eps_grid, errors, std_errs=None, level: float = 0.95) -> tuple[float, tuple[float, float]]:
    """Least-squares slope of ``log(error)`` against ``log(eps)``.

    With ``std_errs`` the points are weighted by ``(error / std_err)^2``, the
    inverse variance of ``log(error)``.  The interval uses Student's t with
    ``n - 2`` degrees of freedom and the residual variance of the fit.
    """
    slope, _, sd = _wls(eps_grid, errors, std_errs)
    half = float(stats.t.ppf(0.5 + level / 2, len(eps_grid) - 2) * sd)
    return slope, (slope - half, slope + half)


def fit_line(eps_grid, errors, std_errs=None) -> np.ndarray:
    """``log10`` of the fitted power law at each eps."""
    slope, icpt, _ = _wls(eps_grid, errors, std_errs)
    return (icpt + slope * np.log(np.asarray(eps_grid, dtype=float))) / math.log(10.0)


def _protocol(model: ModelSpec, params: SimParams, x0, y0, **extra) -> dict:
    d = {
        "model": model.to_dict(),
        "params": params.to_dict(),
        "x0": np.asarray(_coeffs(x0)).tolist(),
        "y0": None if y0 is None else np.asarray(_coeffs(y0)).tolist(),
    }
    d.update(extra)
    return d


def _coeffs(v) -> np.ndarray:
    return v.coeffs if isinstance(v, SineField) else np.asarray(v, dtype=float)


def _check_grid(eps_grid) -> list:
    grid = [float(e) for e in eps_grid]
    if len(grid) < 3:
        raise ValueError(f"need at least 3 eps values, got {len(grid)}")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError("eps_grid must be strictly decreasing")
    return grid


def _validate(model: ModelSpec, params: SimParams) -> None:
    rep = validate_assumptions(model, params.cov1, params.cov2)
    if not rep.overall:
        raise AssumptionError(f"assumption checks failed: {', '.join(rep.failed())}")


def _strong_stats(diff_norm: np.ndarray, p: float) -> tuple[float, float]:
    s = np.max(diff_norm, axis=0) ** p
    mean = float(np.mean(s))
    err = mean ** (1.0 / p)
    se_mean = float(np.std(s, ddof=1) / math.sqrt(len(s))) if len(s) > 1 else 0.0
    se = err * se_mean / (p * mean) if mean > 0 else 0.0
    return err, se


def bias_guard(model: ModelSpec, x0, y0, params: SimParams, kind: str = "strong", p: float = 2.0,
               phi: TestFunctional | None = None, n_probe: int | None = None,
               threshold: float = 0.1) -> dict:
    """Step-halving probe at ``params.eps``.

    Runs the scheme at ``macro_dt`` and ``macro_dt / 2`` on the same ``W1``
    increments and the same fast substep grid.  For ``kind="strong"`` the
    bias is the RMS over paths of the sup-in-time change of ``X^eps - Xbar``;
    for ``kind="weak"`` it is the change in the mean difference of ``phi``.
    The guard passes when the bias is below ``threshold`` times the
    averaging error measured by the coarse run.
    """
    n_probe = min(params.n_paths, 100 if kind == "strong" else 500) if n_probe is None else n_probe
    paths = np.arange(n_probe)
    fine_params = params.with_(macro_dt=params.macro_dt / 2)
    n_f = n_substeps(fine_params)
    coarse = run_paths(model, params, x0, y0, paths, coupled=True, averaged=True,
                       refine=2, n_sub=2 * n_f, store=(kind == "strong"))
    fine = run_paths(model, fine_params, x0, y0, paths, coupled=True, averaged=True,
                     n_sub=n_f, store=(kind == "strong"))
    if kind == "strong":
        dc = coarse.x_traj - coarse.xbar_traj
        df = (fine.x_traj - fine.xbar_traj)[::2]
        dt_bias = float(np.sqrt(np.mean(np.max(np.linalg.norm(dc - df, axis=-1), axis=0) ** 2)))
        reference, _ = _strong_stats(coarse.diff_norm, p)
    elif kind == "weak":
        dcoarse = float(np.mean(phi(coarse.x_final) - phi(coarse.xbar_final)))
        dfine = float(np.mean(phi(fine.x_final) - phi(fine.xbar_final)))
        dt_bias = abs(dcoarse - dfine)
        reference = abs(dcoarse)
    else:
        raise ValueError(f"unknown guard kind {kind!r}")
    ratio = dt_bias / reference if reference > 0 else math.inf
    passed = ratio < threshold
    suggested = params.macro_dt if passed else params.macro_dt * max(threshold / ratio, 1e-3) * 0.5
    return {
        "eps": params.eps,
        "macro_dt": params.macro_dt,
        "n_probe": n_probe,
        "dt_bias": dt_bias,
        "averaging_error": reference,
        "ratio": ratio,
        "threshold": threshold,
        "passed": bool(passed),
        "suggested_macro_dt": suggested,
    }


def _guard_or_raise(guard: dict) -> None:
    if not guard["passed"]:
        raise BiasGuardError(
            f"time-discretisation bias {guard['dt_bias']:.3g} is {guard['ratio']:.1%} of the "
            f"averaging error {guard['averaging_error']:.3g} at eps={guard['eps']:g} "
            f"(limit {guard['threshold']:.0%}); try macro_dt={guard['suggested_macro_dt']:.3g}",
            guard["dt_bias"], guard["averaging_error"], guard["suggested_macro_dt"])


def strong_error_study(model: ModelSpec, x0, y0, eps_grid=STRONG_EPS_GRID, params: SimParams | None = None,
                       p: float = 2.0, *, validate: bool = True, guard: bool = True,
                       estimator: Callable[[float], tuple[float, float]] | None = None) -> ErrorReport:
    """``(E sup_t |X^eps_t - Xbar_t|^p)^{1/p}`` over coupled pairs, per eps.

    The supremum is taken over the macro grid.  ``estimator`` replaces the
    simulation by a callable ``eps -> (error, std_err)``.
    """
    if p < 2:
        raise ValueError("moment p must be >= 2")
    grid = _check_grid(eps_grid)
    params = params or SimParams()
    if validate:
        _validate(model, params)
    guard_info = None
    if estimator is None and guard:
        guard_info = bias_guard(model, x0, y0, params.with_(eps=grid[-1]), "strong", p=p)
        _guard_or_raise(guard_info)
    errors, ses, n_subs = [], [], []
    for eps in grid:
        if estimator is not None:
            e, s = estimator(eps)
        else:
            pe = params.with_(eps=eps)
            res = run_paths(model, pe, x0, y0, coupled=True, averaged=True)
            e, s = _strong_stats(res.diff_norm, p)
            n_subs.append(res.n_sub)
        errors.append(float(e))
        ses.append(float(s))
    if any(e <= 0 for e in errors):
        raise DegenerateStudyError("strong error vanished at some eps")
    slope, ci = fit_order(grid, errors, ses)
    proto = _protocol(model, params, x0, y0, kind="strong", p=p,
                      sup="discrete sup over macro grid nodes", n_sub=n_subs,
                      estimator="simulation" if estimator is None else "injected")
    return ErrorReport(grid, errors, ses, slope, ci, proto, kind="strong",
                       estimates=list(errors), bias_guard=guard_info)


def weak_error_study(model: ModelSpec, x0, y0, phi: TestFunctional | str = "sin_e1",
                     eps_grid=WEAK_EPS_GRID, params: SimParams | None = None, *,
                     validate: bool = True, guard: bool = True,
                     estimator: Callable[[float], tuple[float, float]] | None = None) -> ErrorReport:
    """``|E phi(X^eps_T) - E phi(Xbar_T)|`` from coupled differences, per eps.

    Each path contributes ``phi(X^eps_T) - phi(Xbar_T)`` with both systems
    driven by the same ``W1``.  Points with ``|estimate| < 3 std_err`` are
    listed in ``flags``.
    """
    if isinstance(phi, str):
        phi = get_functional(phi)
    grid = _check_grid(eps_grid)
    params = params or SimParams(n_paths=2000)
    if phi.constant:
        raise DegenerateStudyError(f"degenerate functional {phi.id!r}: weak error is identically 0")
    if validate:
        _validate(model, params)
    guard_info = None
    if estimator is None and guard:
        guard_info = bias_guard(model, x0, y0, params.with_(eps=grid[-1]), "weak", phi=phi)
        _guard_or_raise(guard_info)
    estimates, ses, n_subs = [], [], []
    for eps in grid:
        if estimator is not None:
            d, s = estimator(eps)
        else:
            pe = params.with_(eps=eps)
            res = run_paths(model, pe, x0, y0, coupled=True, averaged=True)
            diff = phi(res.x_final) - phi(res.xbar_final)
            d = float(np.mean(diff))
            s = float(np.std(diff, ddof=1) / math.sqrt(len(diff)))
            n_subs.append(res.n_sub)
        estimates.append(float(d))
        ses.append(float(s))
    errors = [abs(d) for d in estimates]
    flags = [f"eps={e:g}: |estimate| < 3 std_err" for e, d, s in zip(grid, errors, ses) if d < 3 * s]
    if any(e == 0 for e in errors):
        raise DegenerateStudyError(f"weak error is exactly 0 for functional {phi.id!r}")
    slope, ci = fit_order(grid, errors, ses)
    proto = _protocol(model, params, x0, y0, kind="weak", phi=phi.id, n_sub=n_subs,
                      estimator="coupled difference" if estimator is None else "injected")
    return ErrorReport(grid, errors, ses, slope, ci, proto, kind="weak", flags=flags,
                       estimates=estimates, bias_guard=guard_info)


@dataclass
class MomentReport:
    eps_grid: list
    sup_x: list       # E sup_t |X_t|^p
    sup_y_mean: list  # sup_t E |Y_t|^p
    sup_y_path: list  # E sup_t |Y_t|^p, informational (grows like 1/eps)
    ratio_x: float
    ratio_y: float
    threshold: float
    protocol: dict

    @property
    def passed(self) -> bool:
        return self.ratio_x < self.threshold and self.ratio_y < self.threshold

    def to_json(self) -> dict:
        return {
            "kind": "moments", "eps_grid": self.eps_grid, "sup_x": self.sup_x,
            "sup_y_mean": self.sup_y_mean, "sup_y_path": self.sup_y_path,
            "ratio_x": self.ratio_x, "ratio_y": self.ratio_y, "threshold": self.threshold,
            "passed": self.passed, "protocol": self.protocol,
        }


def moment_check(model: ModelSpec, x0, y0, eps_grid, params: SimParams | None = None, p: float = 2.0,
                 threshold: float = 1.2) -> MomentReport:
    """Uniformity in eps of ``E sup_t |X|^p`` and ``sup_t E |Y|^p``."""
    params = params or SimParams(n_paths=200)
    grid = [float(e) for e in eps_grid]
    sx, sy, syp = [], [], []
    for eps in grid:
        res = run_paths(model, params.with_(eps=eps), x0, y0, coupled=True)
        sx.append(float(np.mean(np.max(res.x_norm, axis=0) ** p)))
        sy.append(float(np.max(np.mean(res.y_norm**p, axis=1))))
        syp.append(float(np.mean(np.max(res.y_norm, axis=0) ** p)))

    def ratio(v):
        lo = min(v)
        return max(v) / lo if lo > 0 else (1.0 if max(v) == 0 else math.inf)

    proto = _protocol(model, params, x0, y0, kind="moments", p=p)
    return MomentReport(grid, sx, sy, syp, ratio(sx), ratio(sy), threshold, proto)


@dataclass
class GalerkinReport:
    eps: float
    m_list: list
    m_ref: int
    errors: list
    std_errs: list
    protocol: dict

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))

    def to_json(self) -> dict:
        return {
            "kind": "galerkin", "eps": self.eps, "m_list": self.m_list, "m_ref": self.m_ref,
            "errors": self.errors, "std_errs": self.std_errs, "decreasing": self.decreasing,
            "protocol": self.protocol,
        }


def galerkin_refinement_check(model: ModelSpec, eps: float, params: SimParams | None = None,
                              m_list=(8, 16, 32), m_ref: int | None = None, x0=None, y0=None) -> GalerkinReport:
    """``(E sup_t |X^{m} - X^{m_ref}|^2)^{1/2}`` for each ``m`` in ``m_list``.

    Noise for mode ``k`` is the same at every truncation level, so the runs
    differ only by the truncation.  ``x0``/``y0`` are given at ``m_ref`` modes
    (default ``e_1`` and 0) and projected.
    """
    m_list = [int(m) for m in m_list]
    if any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("m_list must be increasing")
    m_ref = 2 * max(m_list) if m_ref is None else int(m_ref)
    if m_ref <= max(m_list):
        raise ValueError("m_ref must exceed every m in m_list")
    params = (params or SimParams(n_paths=50)).with_(eps=eps)
    x0 = SineField.basis(1, m_ref) if x0 is None else x0
    y0 = SineField.zeros(m_ref) if y0 is None else y0
    xr, yr = _coeffs(x0), _coeffs(y0)
    ref = run_paths(model, params.with_(m=m_ref), xr, yr, coupled=True, store=True)
    errors, ses = [], []
    for m in m_list:
        res = run_paths(model, params.with_(m=m), xr[..., :m], yr[..., :m], coupled=True, store=True)
        d = ref.x_traj.copy()
        d[..., :m] -= res.x_traj
        s = np.max(np.linalg.norm(d, axis=-1), axis=0) ** 2
        mean = float(np.mean(s))
        errors.append(math.sqrt(mean))
        se = float(np.std(s, ddof=1) / math.sqrt(len(s))) if len(s) > 1 else 0.0
        ses.append(math.sqrt(mean) * se / (2 * mean) if mean > 0 else 0.0)
    proto = _protocol(model, params, xr, yr, kind="galerkin")
    return GalerkinReport(float(eps), m_list, m_ref, errors, ses, proto)
