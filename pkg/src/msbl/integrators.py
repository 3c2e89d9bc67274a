"""Exponential-Euler integration of the Galerkin slow-fast system and of the
averaged equation.

Slow step (size ``macro_dt``)::

    x' = e^{dt A} x + phi_1(dt) [B(x) + F_avg] + conv1

Fast variable: ``n_sub`` exponential-Euler substeps of the rescaled frozen
equation per macro step, each of rescaled length ``h = macro_dt / (n_sub eps)``,
holding ``x`` at its value at the start of the macro step.  ``F_avg`` is the
trapezoid mean of ``F(x, y_j)`` over the substep nodes (policy ``"mean"``)
or ``F(x, y_mid)`` (policy ``"midpoint"``).

Noise addresses: ``W1`` at macro step ``i`` uses step ``i * refine + j``
(``j < refine``), so a run with ``refine=2`` consumes exactly the increments of
a run with half the step.  ``W2`` at global substep ``s`` uses step ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .coefficients import ModelSpec
from .frozen import FbarEstimate, estimate_fbar_ergodic, fbar_analytic
from .noise import Channel, CovSpec, NoiseStream, convolution_std, gaussians
from .spectral import SineField, burgers_coeffs, eigenvalues, phi1

__all__ = [
    "SimParams",
    "Trajectory",
    "RunResult",
    "ErgodicFbarTable",
    "n_substeps",
    "step_coupled",
    "simulate_coupled",
    "simulate_averaged",
    "run_paths",
]

MAX_SUBSTEPS = 10**7
PATH_BATCH = 500


@dataclass(frozen=True)
class SimParams:
    """Discretisation and Monte-Carlo settings.

    ``kappa`` sets the fast substep: ``n_sub = ceil(macro_dt / (kappa eps))``.
    """

    eps: float = 2.0**-4
    T: float = 0.5
    macro_dt: float = 1e-3
    kappa: float = 0.05
    m: int = 32
    n_paths: int = 100
    master_seed: int = 20240101
    cov1: CovSpec = field(default_factory=lambda: CovSpec.power_decay(1.0, 4.0))
    cov2: CovSpec = field(default_factory=lambda: CovSpec.power_decay(1.0, 2.0))
    fast_policy: str = "mean"

    def __post_init__(self):
        for name in ("eps", "T", "macro_dt", "kappa"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        if self.eps > 1:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if self.macro_dt > self.T:
            raise ValueError("macro_dt must not exceed T")
        if self.m < 1 or self.n_paths < 1:
            raise ValueError("m and n_paths must be >= 1")
        if self.fast_policy not in ("mean", "midpoint"):
            raise ValueError(f"unknown fast policy {self.fast_policy!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.macro_dt))

    def with_(self, **kw) -> "SimParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "T": self.T, "macro_dt": self.macro_dt, "kappa": self.kappa,
            "m": self.m, "n_paths": self.n_paths, "master_seed": self.master_seed,
            "cov1": self.cov1.to_dict(), "cov2": self.cov2.to_dict(),
            "fast_policy": self.fast_policy,
        }


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: SineField  # coeffs shape (n_times, [paths,] m)
    kind: str

    def __post_init__(self):
        if self.kind not in ("slow_eps", "fast_eps", "averaged"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.states.coeffs.shape[0] != len(self.times):
            raise ValueError("one state per time node required")


def n_substeps(params: SimParams) -> int:
    n = math.ceil(params.macro_dt / (params.kappa * params.eps) - 1e-9)
    n = max(n, 1)
    if n > MAX_SUBSTEPS:
        raise ValueError(
            f"{n} fast substeps per macro step exceeds {MAX_SUBSTEPS}; "
            "shrink macro_dt or raise kappa")
    return n


class ErgodicFbarTable:
    """Averaged drift from ergodic estimates at tabulated slow states.

    Lookup returns the entry nearest in L2.  With ``tol`` set, a query farther
    than ``tol`` from every entry triggers a fresh ergodic estimate which is
    added to the table.
    """

    def __init__(self, model: ModelSpec, cov2: CovSpec, entries=(), tol: float | None = None,
                 window: float = 20.0, micro_dt: float = 1e-3, seed: int = 0):
        self.model = model
        self.cov2 = cov2
        self.entries: list[FbarEstimate] = list(entries)
        self.tol = tol
        self.window = window
        self.micro_dt = micro_dt
        self.seed = seed

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, x: SineField) -> FbarEstimate:
        est = estimate_fbar_ergodic(self.model, x, self.cov2, window=self.window,
                                    micro_dt=self.micro_dt,
                                    stream=NoiseStream(self.seed, len(self.entries)))
        self.entries.append(est)
        return est

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if not self.entries and self.tol is None:
            raise ValueError("ergodic Fbar table is empty")
        flat = x.reshape(-1, x.shape[-1])
        out = np.empty_like(flat)
        for i, row in enumerate(flat):
            if self.entries:
                nodes = np.stack([e.x.coeffs for e in self.entries])
                d = np.linalg.norm(nodes - row, axis=1)
                j = int(np.argmin(d))
            if not self.entries or (self.tol is not None and d[j] > self.tol):
                out[i] = self.add(SineField(row)).value.coeffs
            else:
                out[i] = self.entries[j].value.coeffs
        return out.reshape(x.shape)


def _fbar_callable(model: ModelSpec, fbar_mode) -> Callable[[np.ndarray], np.ndarray]:
    if fbar_mode == "analytic":
        if not model.is_linear:
            raise ValueError("analytic Fbar requires the linear_gaussian family")
        lam = None

        def fb(x):
            nonlocal lam
            if lam is None or lam.shape[0] != x.shape[-1]:
                lam = eigenvalues(x.shape[-1])
            return model.F1_coeffs(x) + model.linear["c"] * model.G0_coeffs(x) / (lam + model.linear["a"])

        return fb
    if isinstance(fbar_mode, ErgodicFbarTable):
        if not len(fbar_mode) and fbar_mode.tol is None:
            raise ValueError("ergodic Fbar table is empty")
        return fbar_mode
    if callable(fbar_mode):
        return fbar_mode
    raise ValueError(f"unknown fbar mode {fbar_mode!r}")


class _Kernel:
    """Per-run constants of the exponential-Euler scheme."""

    def __init__(self, model: ModelSpec, params: SimParams, refine: int = 1, n_sub: int | None = None):
        m = params.m
        dt = params.macro_dt
        self.model = model
        self.params = params
        self.refine = refine
        self.m = m
        self.decay = np.exp(-eigenvalues(m) * dt)
        self.w = phi1(m, dt)
        sub = dt / refine
        self.conv1_std = convolution_std(params.cov1, m, sub)
        self.conv1_decay = np.exp(-eigenvalues(m) * sub)
        self.n_sub = n_substeps(params) if n_sub is None else n_sub
        h = dt / (self.n_sub * params.eps)  # rescaled fast substep
        self.h = h
        self.fdecay = np.exp(-eigenvalues(m) * h)
        self.fw = phi1(m, h)
        self.conv2_std = convolution_std(params.cov2, m, h)
        self.seed = params.master_seed

    def conv1(self, paths: np.ndarray, step: int) -> np.ndarray:
        r = self.refine
        z = gaussians(self.seed, paths[None, :], int(Channel.W1),
                      np.arange(step * r, step * r + r)[:, None], self.m)
        inc = self.conv1_std * z[0]
        for j in range(1, r):
            inc = self.conv1_decay * inc + self.conv1_std * z[j]
        return inc

    def fast_block(self, paths: np.ndarray, step: int) -> np.ndarray:
        n = self.n_sub
        z = gaussians(self.seed, paths[None, :], int(Channel.W2),
                      np.arange(step * n, step * n + n)[:, None], self.m)
        return self.conv2_std * z

    def fast_and_forcing(self, x: np.ndarray, y: np.ndarray, paths: np.ndarray, step: int):
        """Advance ``y`` over one macro step; return ``(y_new, F_avg)``."""
        model = self.model
        z = self.fast_block(paths, step)
        n = self.n_sub
        drift = model.frozen_drift(x)
        policy = self.params.fast_policy
        mid = n // 2
        if model.is_linear:
            acc = 0.5 * y if policy == "mean" else None
            y_mid = y if mid == 0 else None
            for j in range(n):
                y = self.fdecay * y + self.fw * drift(y) + z[j]
                if policy == "mean":
                    acc = acc + (0.5 * y if j == n - 1 else y)
                elif j + 1 == mid:
                    y_mid = y
            yavg = acc / n if policy == "mean" else y_mid
            forcing = model.F1_coeffs(x) + model.linear["c"] * yavg
            return y, forcing
        if policy == "mean":
            acc = 0.5 * model.F_coeffs(x, y)
        else:
            y_mid = y if mid == 0 else None
        for j in range(n):
            y = self.fdecay * y + self.fw * drift(y) + z[j]
            if policy == "mean":
                acc = acc + (0.5 if j == n - 1 else 1.0) * model.F_coeffs(x, y)
            elif j + 1 == mid:
                y_mid = y
        forcing = acc / n if policy == "mean" else model.F_coeffs(x, y_mid)
        return y, forcing

    def slow(self, x: np.ndarray, forcing: np.ndarray, conv: np.ndarray, burgers: bool = True) -> np.ndarray:
        drift = forcing if not burgers else burgers_coeffs(x, x) + forcing
        return self.decay * x + self.w * drift + conv


@dataclass
class RunResult:
    """Output of :func:`run_paths` for a batch of paths.

    Norm arrays have shape ``(n_steps + 1, n_paths)``.  Full trajectories are
    kept only when requested.
    """

    times: np.ndarray
    paths: np.ndarray
    x_final: np.ndarray | None = None
    y_final: np.ndarray | None = None
    xbar_final: np.ndarray | None = None
    x_norm: np.ndarray | None = None
    y_norm: np.ndarray | None = None
    xbar_norm: np.ndarray | None = None
    diff_norm: np.ndarray | None = None
    x_traj: np.ndarray | None = None
    y_traj: np.ndarray | None = None
    xbar_traj: np.ndarray | None = None
    n_sub: int = 1


def _as_batch(v: SineField | np.ndarray, m: int, n: int) -> np.ndarray:
    c = v.coeffs if isinstance(v, SineField) else np.asarray(v, dtype=float)
    if c.shape[-1] != m:
        raise ValueError(f"initial state has {c.shape[-1]} modes, expected {m}")
    return np.broadcast_to(c, (n, m)).copy()


def run_paths(model: ModelSpec, params: SimParams, x0, y0=None, paths=None, *,
              coupled: bool = True, averaged: bool = False, fbar_mode="analytic",
              refine: int = 1, n_sub: int | None = None, store: bool = False,
              batch: int = PATH_BATCH) -> RunResult:
    """Simulate a set of paths, optionally coupled and averaged side by side.

    Both systems read the same ``W1`` addresses.  Paths are processed in
    batches of ``batch`` rows; each path's arithmetic does not depend on the
    batch it falls in.
    """
    if not coupled and not averaged:
        raise ValueError("nothing to simulate")
    if paths is None:
        paths = np.arange(params.n_paths)
    paths = np.asarray(paths, dtype=np.int64).reshape(-1)
    kern = _Kernel(model, params, refine=refine, n_sub=n_sub)
    fbar = _fbar_callable(model, fbar_mode) if averaged else None
    N = params.n_steps
    m = params.m
    times = np.arange(N + 1) * params.macro_dt
    P = len(paths)
    res = RunResult(times=times, paths=paths, n_sub=kern.n_sub)

    def alloc(shape):
        return np.empty(shape)

    if coupled:
        res.x_norm = alloc((N + 1, P))
        res.y_norm = alloc((N + 1, P))
        res.x_final = alloc((P, m))
        res.y_final = alloc((P, m))
        if store:
            res.x_traj = alloc((N + 1, P, m))
            res.y_traj = alloc((N + 1, P, m))
    if averaged:
        res.xbar_norm = alloc((N + 1, P))
        res.xbar_final = alloc((P, m))
        if store:
            res.xbar_traj = alloc((N + 1, P, m))
    if coupled and averaged:
        res.diff_norm = alloc((N + 1, P))

    for lo in range(0, P, batch):
        sl = slice(lo, min(lo + batch, P))
        pb = paths[sl]
        n = len(pb)
        x = _as_batch(x0, m, n)
        xb = x.copy()
        if coupled:
            if y0 is None:
                raise ValueError("coupled run needs y0")
            y = _as_batch(y0, m, n)
        for i in range(N + 1):
            if coupled:
                res.x_norm[i, sl] = np.linalg.norm(x, axis=-1)
                res.y_norm[i, sl] = np.linalg.norm(y, axis=-1)
                if store:
                    res.x_traj[i, sl] = x
                    res.y_traj[i, sl] = y
            if averaged:
                res.xbar_norm[i, sl] = np.linalg.norm(xb, axis=-1)
                if store:
                    res.xbar_traj[i, sl] = xb
            if coupled and averaged:
                res.diff_norm[i, sl] = np.linalg.norm(x - xb, axis=-1)
            if i == N:
                break
            conv = kern.conv1(pb, i)
            if coupled:
                y_new, forcing = kern.fast_and_forcing(x, y, pb, i)
                x = kern.slow(x, forcing, conv)
                y = y_new
                if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                    raise FloatingPointError(f"coupled state blew up at macro step {i + 1}")
            if averaged:
                xb = kern.slow(xb, fbar(xb), conv)
                if not np.all(np.isfinite(xb)):
                    raise FloatingPointError(f"averaged state blew up at macro step {i + 1}")
        if coupled:
            res.x_final[sl] = x
            res.y_final[sl] = y
        if averaged:
            res.xbar_final[sl] = xb
    return res


def step_coupled(x: SineField, y: SineField, model: ModelSpec, params: SimParams,
                 macro_index: int, stream_pair: tuple[NoiseStream, NoiseStream] | None = None):
    """One macro step of the coupled system.

    ``stream_pair`` supplies the seed and path ids (its step fields are
    ignored: addresses follow from ``macro_index``).  Returns ``(x', y')``.
    """
    if x.m != params.m or y.m != params.m:
        raise ValueError("state truncation differs from params.m")
    if stream_pair is None:
        stream_pair = (NoiseStream(params.master_seed, 0, Channel.W1),
                       NoiseStream(params.master_seed, 0, Channel.W2))
    s1 = stream_pair[0]
    paths = np.atleast_1d(s1._paths)
    kern = _Kernel(model, replace(params, master_seed=s1.master_seed))
    xc = np.broadcast_to(x.coeffs, (len(paths), params.m)).copy()
    yc = np.broadcast_to(y.coeffs, (len(paths), params.m)).copy()
    conv = kern.conv1(paths, macro_index)
    y_new, forcing = kern.fast_and_forcing(xc, yc, paths, macro_index)
    x_new = kern.slow(xc, forcing, conv)
    shape = s1._paths.shape + (params.m,)
    return SineField(x_new.reshape(shape)), SineField(y_new.reshape(shape))


def simulate_coupled(x0: SineField, y0: SineField, model: ModelSpec, params: SimParams,
                     path_id=0) -> tuple[Trajectory, Trajectory]:
    """Slow and fast trajectories on the macro grid for one path (or several)."""
    paths = np.atleast_1d(np.asarray(path_id, dtype=np.int64))
    res = run_paths(model, params, x0, y0, paths, coupled=True, store=True)
    squeeze = np.ndim(path_id) == 0
    xs, ys = res.x_traj, res.y_traj
    if squeeze:
        xs, ys = xs[:, 0], ys[:, 0]
    return (Trajectory(res.times, SineField(xs), "slow_eps"),
            Trajectory(res.times, SineField(ys), "fast_eps"))


def simulate_averaged(x0: SineField, model: ModelSpec, params: SimParams, fbar_mode="analytic",
                      path_id=0) -> Trajectory:
    """Averaged equation driven by the same ``W1`` addresses as the coupled run."""
    paths = np.atleast_1d(np.asarray(path_id, dtype=np.int64))
    res = run_paths(model, params, x0, None, paths, coupled=False, averaged=True,
                    fbar_mode=fbar_mode, store=True)
    xs = res.xbar_traj[:, 0] if np.ndim(path_id) == 0 else res.xbar_traj
    return Trajectory(res.times, SineField(xs), "averaged")
