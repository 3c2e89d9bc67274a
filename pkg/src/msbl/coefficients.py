"""Nemytskii coefficients ``F, G`` and checks of the standing assumptions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .noise import CovSpec
from .spectral import SineField, grid_coeffs, grid_values

__all__ = [
    "ModelSpec",
    "Check",
    "ValidationReport",
    "SCALAR_FUNCTIONS",
    "linear_gaussian",
    "general_model",
    "get_model",
    "MODEL_CATALOG",
    "nemytskii",
    "apply_F",
    "apply_G",
    "validate_assumptions",
    "power_series_converges",
]

LAMBDA1 = np.pi**2

# scalar functions addressable from config files
SCALAR_FUNCTIONS: dict[str, Callable] = {
    "zero": lambda u: np.zeros_like(u),
    "identity": lambda u: u,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "half_sin": lambda u: 0.5 * np.sin(u),
}

# Lipschitz constants of the above
_SCALAR_LIP = {"zero": 0.0, "identity": 1.0, "sin": 1.0, "cos": 1.0, "tanh": 1.0, "half_sin": 0.5}

# two-argument functions for the general family, with (Lip in u, Lip in v)
PAIR_FUNCTIONS: dict[str, tuple[Callable, float, float]] = {
    "zero": (lambda u, v: np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v))), 0.0, 0.0),
    "sin_u_plus_tanh_v": (lambda u, v: np.sin(u) + np.tanh(v), 1.0, 1.0),
    "cos_u_minus_2v": (lambda u, v: np.cos(u) - 2.0 * v, 1.0, 2.0),
    "u_plus_v": (lambda u, v: u + v, 1.0, 1.0),
    "u_minus_v": (lambda u, v: u - v, 1.0, 1.0),
    "tanh_u": (lambda u, v: np.tanh(u) + 0.0 * v, 1.0, 0.0),
}


@dataclass(frozen=True)
class ModelSpec:
    """Coefficient pair ``F(x, y)(xi) = f(x(xi), y(xi))``, ``G`` likewise.

    For ``family == "linear_gaussian"`` the functions have the form
    ``f(u, v) = f1(u) + c v`` and ``g(u, v) = g1(u) - a v``; ``f1``, ``g1``,
    ``a`` and ``c`` are then stored in ``linear``.  ``metadata`` records the
    regularity parameters ``tau, alpha, beta``; only ``beta`` is read (by the
    trace check on ``Q2``).
    """

    name: str
    f_slow: Callable
    g_fast: Callable
    L_F: float
    L_G: float
    family: str = "general"
    linear: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=lambda: {"tau": 0.75, "alpha": 0.1, "beta": 1.1})
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in ("linear_gaussian", "general"):
            raise ValueError(f"unknown model family {self.family!r}")
        if self.family == "linear_gaussian":
            for key in ("a", "c", "f1", "g1"):
                if key not in self.linear:
                    raise ValueError(f"linear_gaussian model needs {key!r}")
            if self.linear["a"] < 0:
                raise ValueError("fast damping a must be >= 0")

    @property
    def is_linear(self) -> bool:
        return self.family == "linear_gaussian"

    def to_dict(self) -> dict:
        d = {"name": self.name, "family": self.family, "L_F": self.L_F, "L_G": self.L_G,
             "metadata": dict(self.metadata)}
        d.update(self.description)
        return d

    # -- coefficient-space evaluation (arrays with trailing mode axis) ------

    def F_coeffs(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.is_linear:
            return self.F1_coeffs(x) + self.linear["c"] * y
        return nemytskii(self.f_slow, x, y)

    def G_coeffs(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.is_linear:
            return self.G0_coeffs(x) - self.linear["a"] * y
        return nemytskii(self.g_fast, x, y)

    def F1_coeffs(self, x: np.ndarray) -> np.ndarray:
        return nemytskii1(self.linear["f1"], x)

    def G0_coeffs(self, x: np.ndarray) -> np.ndarray:
        return nemytskii1(self.linear["g1"], x)

    def frozen_drift(self, x: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """``y -> G(x, y)`` with ``x`` held fixed; reuses ``g1(x)`` when linear."""
        if self.is_linear:
            g0 = self.G0_coeffs(x)
            a = self.linear["a"]
            return lambda y: g0 - a * y
        return lambda y: nemytskii(self.g_fast, x, y)


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise ValueError(f"{what} produced a non-finite value at grid index {tuple(bad)}")


def nemytskii(fn: Callable, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Project ``fn(x(xi), y(xi))`` onto ``m`` modes via the ``2m`` grid."""
    m = x.shape[-1]
    if y.shape[-1] != m:
        raise ValueError(f"mismatched truncation levels {m} and {y.shape[-1]}")
    n = 2 * m
    xv = grid_values(x, n)
    yv = grid_values(y, n)
    _check_finite(xv, "slow state")
    _check_finite(yv, "fast state")
    vals = fn(xv, yv)
    _check_finite(vals, "Nemytskii function")
    return grid_coeffs(np.broadcast_to(vals, np.broadcast_shapes(xv.shape, yv.shape)))[..., :m]


def nemytskii1(fn: Callable, x: np.ndarray) -> np.ndarray:
    m = x.shape[-1]
    xv = grid_values(x, 2 * m)
    _check_finite(xv, "slow state")
    vals = fn(xv)
    _check_finite(vals, "Nemytskii function")
    return grid_coeffs(vals)[..., :m]


def apply_F(model: ModelSpec, x: SineField, y: SineField) -> SineField:
    if x.m != y.m:
        raise ValueError(f"mismatched truncation levels {x.m} and {y.m}")
    return SineField(nemytskii(model.f_slow, x.coeffs, y.coeffs))


def apply_G(model: ModelSpec, x: SineField, y: SineField) -> SineField:
    if x.m != y.m:
        raise ValueError(f"mismatched truncation levels {x.m} and {y.m}")
    return SineField(nemytskii(model.g_fast, x.coeffs, y.coeffs))


def linear_gaussian(a: float = 1.0, c: float = 1.0, f1: str = "sin", g1: str = "identity",
                    name: str | None = None, metadata: dict | None = None) -> ModelSpec:
    """``f(u, v) = f1(u) + c v``, ``g(u, v) = g1(u) - a v``.  ``L_G = a``."""
    if f1 not in SCALAR_FUNCTIONS or g1 not in SCALAR_FUNCTIONS:
        raise ValueError(f"unknown scalar function in ({f1!r}, {g1!r})")
    f1_fn, g1_fn = SCALAR_FUNCTIONS[f1], SCALAR_FUNCTIONS[g1]
    kw = {} if metadata is None else {"metadata": dict(metadata)}
    return ModelSpec(
        name=name or f"linear_gaussian(a={a},c={c},f1={f1},g1={g1})",
        f_slow=lambda u, v: f1_fn(u) + c * v,
        g_fast=lambda u, v: g1_fn(u) - a * v,
        L_F=_SCALAR_LIP[f1],
        L_G=float(a),
        family="linear_gaussian",
        linear={"a": float(a), "c": float(c), "f1": f1_fn, "g1": g1_fn},
        description={"a": float(a), "c": float(c), "f1": f1, "g1": g1},
        **kw,
    )


def general_model(f: str, g: str, L_F: float | None = None, L_G: float | None = None,
                  name: str | None = None, metadata: dict | None = None) -> ModelSpec:
    if f not in PAIR_FUNCTIONS or g not in PAIR_FUNCTIONS:
        raise ValueError(f"unknown pair function in ({f!r}, {g!r})")
    f_fn, lf, _ = PAIR_FUNCTIONS[f]
    g_fn, _, lg = PAIR_FUNCTIONS[g]
    kw = {} if metadata is None else {"metadata": dict(metadata)}
    return ModelSpec(
        name=name or f"general(f={f},g={g})",
        f_slow=f_fn,
        g_fast=g_fn,
        L_F=lf if L_F is None else float(L_F),
        L_G=lg if L_G is None else float(L_G),
        family="general",
        description={"f": f, "g": g},
        **kw,
    )


MODEL_CATALOG: dict[str, Callable[[], ModelSpec]] = {
    "linear_gaussian_default": lambda: linear_gaussian(1.0, 1.0, "sin", "identity",
                                                       name="linear_gaussian_default"),
    "nonlinear_default": lambda: general_model("sin_u_plus_tanh_v", "cos_u_minus_2v",
                                               name="nonlinear_default"),
    "zero": lambda: general_model("zero", "zero", name="zero"),
}


def get_model(model_id: str) -> ModelSpec:
    try:
        return MODEL_CATALOG[model_id]()
    except KeyError:
        raise KeyError(f"unknown model id {model_id!r}; known: {sorted(MODEL_CATALOG)}") from None


# -- assumption checks -------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "checks": [
                {"name": c.name, "passed": c.passed, "measured": c.measured,
                 "threshold": c.threshold, "detail": c.detail}
                for c in self.checks
            ],
        }


def power_series_converges(cov: CovSpec, s: float) -> tuple[bool, float]:
    """Whether ``sum_k lambda_k^s alpha_k`` is finite, by decay exponent.

    Returns ``(converges, margin)`` where ``margin = r - 2s - 1`` for a power
    law (converges iff > 0) and ``inf`` for finite-rank laws.
    """
    if cov.law == "power_decay":
        c, r = cov.params
        if c == 0.0:
            return True, float("inf")
        margin = r - 2.0 * s - 1.0
        return margin > 0, margin
    return True, float("inf")


def _lipschitz_probe(fn: Callable, wrt: int, rng: np.random.Generator, n: int = 20000,
                     scale: float = 3.0) -> float:
    base = rng.uniform(-scale, scale, size=(n, 2))
    h = rng.uniform(-1.0, 1.0, size=n) * 10.0 ** rng.uniform(-6, 0, size=n)
    moved = base.copy()
    moved[:, wrt] += h
    num = np.abs(fn(moved[:, 0], moved[:, 1]) - fn(base[:, 0], base[:, 1]))
    return float(np.max(num / np.abs(h)))


def validate_assumptions(model: ModelSpec, cov1: CovSpec, cov2: CovSpec,
                         m_check: int = 64, seed: int = 0) -> ValidationReport:
    """Dissipativity, noise-trace and Lipschitz checks.

    ``m_check`` is the depth of the reported partial trace sums; convergence
    itself is decided from the decay exponent.
    """
    checks = []
    slack_f = LAMBDA1 - 2.0 * model.L_F
    checks.append(Check("dissipativity_slow", slack_f > 0, slack_f, 0.0,
                        "lambda_1 - 2 L_F > 0"))
    slack_g = LAMBDA1 - model.L_G
    checks.append(Check("dissipativity_fast", slack_g > 0, slack_g, 0.0,
                        "lambda_1 - L_G > 0"))

    depth = min(m_check, cov1.m_max)
    lam = (np.pi * np.arange(1, depth + 1)) ** 2
    ok1, margin1 = power_series_converges(cov1, 1.0)
    partial1 = float(np.sum(lam * cov1.alphas(depth)))
    checks.append(Check("noise_trace_q1", ok1, margin1, 0.0,
                        f"sum lambda_k alpha_1k; partial sum to {depth} = {partial1:.6g}"))
    beta = float(model.metadata.get("beta", 1.1))
    ok2, margin2 = power_series_converges(cov2, beta - 1.0)
    checks.append(Check("noise_trace_q2", ok2, margin2, 0.0,
                        f"sum lambda_k^(beta-1) alpha_2k with beta={beta}"))

    rng = np.random.default_rng(seed)
    lf = _lipschitz_probe(model.f_slow, 0, rng)
    lg = _lipschitz_probe(model.g_fast, 1, rng)
    checks.append(Check("lipschitz_probe_f", lf <= 1.01 * model.L_F + 1e-12, lf, 1.01 * model.L_F,
                        "max difference quotient of f in u"))
    checks.append(Check("lipschitz_probe_g", lg <= 1.01 * model.L_G + 1e-12, lg, 1.01 * model.L_G,
                        "max difference quotient of g in v"))
    return ValidationReport(tuple(checks))
