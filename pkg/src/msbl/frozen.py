"""Frozen fast equation, averaged drift and Poisson-equation corrector.

The frozen equation ``dY = [AY + G(x, Y)] dt + sqrt(Q2) dW`` is advanced with
exponential Euler and the exact one-step stochastic convolution.  For the
``linear_gaussian`` family it is an affine AR(1) recursion per mode, which is
run through ``scipy.signal.lfilter`` instead of a Python loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal

from .coefficients import LAMBDA1, ModelSpec
from .noise import Channel, CovSpec, NoiseStream, convolution_std
from .spectral import SineField, eigenvalues, phi1

__all__ = [
    "FbarEstimate",
    "frozen_step",
    "simulate_frozen",
    "estimate_fbar_ergodic",
    "fbar_analytic",
    "invariant_mean_linear",
    "poisson_corrector_linear",
    "poisson_corrector_quadrature",
    "default_burn_in",
    "autocorrelation",
    "batch_means",
]

_CHUNK = 50_000


@dataclass(frozen=True)
class FbarEstimate:
    x: SineField
    value: SineField
    burn_in: float
    window: float
    micro_dt: float
    std_err: np.ndarray
    n_batches: int = 20

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window must be > 0")
        if not np.all(np.isfinite(self.std_err)):
            raise ValueError("std_err must be finite")

    def to_json(self) -> dict:
        return {
            "x": self.x.coeffs.tolist(),
            "value": self.value.coeffs.tolist(),
            "std_err": np.asarray(self.std_err).tolist(),
            "burn_in": self.burn_in,
            "window": self.window,
            "micro_dt": self.micro_dt,
            "n_batches": self.n_batches,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FbarEstimate":
        return cls(SineField(np.array(d["x"])), SineField(np.array(d["value"])),
                   d["burn_in"], d["window"], d["micro_dt"], np.array(d["std_err"]),
                   d.get("n_batches", 20))


def default_burn_in(model: ModelSpec) -> float:
    """Five mixing times of the ``exp(-(lambda_1 - L_G) t / 2)`` rate."""
    gap = LAMBDA1 - model.L_G
    if gap <= 0:
        raise ValueError("frozen equation is not dissipative (lambda_1 <= L_G)")
    return 10.0 / gap


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"time step must be > 0, got {dt}")


def frozen_step(model: ModelSpec, x_frozen: SineField, y: SineField, dt: float,
                stream: NoiseStream, cov2: CovSpec) -> SineField:
    """One exponential-Euler step of the frozen equation.

    ``y' = e^{dt A} y + phi_1(dt) G(x, y) + (stochastic convolution over dt)``.
    """
    _check_dt(dt)
    m = y.m
    lam = eigenvalues(m)
    drift = model.G_coeffs(np.broadcast_to(x_frozen.coeffs, y.coeffs.shape), y.coeffs)
    noise = convolution_std(cov2, m, dt) * stream.normals(m)
    return SineField(np.exp(-lam * dt) * y.coeffs + phi1(m, dt) * drift + noise)


def simulate_frozen(model: ModelSpec, x: SineField, y0: SineField, dt: float, n_steps: int,
                    stream: NoiseStream, cov2: CovSpec, antithetic: bool = False) -> np.ndarray:
    """States ``Y_1..Y_n`` of the frozen chain, shape ``(n_steps,) + y0.shape``.

    Step ``j`` draws from ``stream.at(stream.step + j)``.  With ``antithetic``
    the path axis is doubled: rows ``[0, P)`` use ``+z``, rows ``[P, 2P)`` use
    ``-z`` at the same addresses.  A ``y0`` that already has ``2P`` rows is
    taken as a doubled state, which lets a run continue in pieces.
    """
    _check_dt(dt)
    m = y0.m
    if x.m != m:
        raise ValueError(f"mismatched truncation levels {x.m} and {m}")
    stream = stream.with_channel(Channel.W2)
    y = np.array(y0.coeffs, dtype=float)
    npaths = stream._paths.shape
    doubled = antithetic and y.ndim == 2 and y.shape[0] == 2 * npaths[0]
    if y.shape[:-1] != npaths and not doubled:
        y = np.broadcast_to(y, npaths + (m,)).copy()
    if antithetic and y.shape[0] != 2 * npaths[0]:
        y = np.concatenate([y, y], axis=0)
    decay = np.exp(-eigenvalues(m) * dt)
    w = phi1(m, dt)
    std = convolution_std(cov2, m, dt)
    out = np.empty((n_steps,) + y.shape)
    xb = np.broadcast_to(x.coeffs, y.shape)

    if model.is_linear:
        rho = decay - model.linear["a"] * w
        offset = w * model.G0_coeffs(xb)
    else:
        drift = model.frozen_drift(xb)

    for start in range(0, n_steps, _CHUNK):
        stop = min(start + _CHUNK, n_steps)
        steps = np.arange(stream.step + start, stream.step + stop)
        z = std * stream.normals_steps(m, steps)
        if antithetic:
            z = np.concatenate([z, -z], axis=1)
        if model.is_linear:
            u = offset + z
            flat_u = u.reshape(stop - start, -1, m)
            flat_y = y.reshape(-1, m)
            res = np.empty_like(flat_u)
            for k in range(m):
                res[:, :, k], _ = signal.lfilter([1.0], [1.0, -rho[k]], flat_u[:, :, k], axis=0,
                                                 zi=rho[k] * flat_y[None, :, k])
            chunk = res.reshape(u.shape)
            y = chunk[-1].copy()
        else:
            chunk = np.empty_like(z)
            for j in range(stop - start):
                y = decay * y + w * drift(y) + z[j]
                chunk[j] = y
        out[start:stop] = chunk
    return out


def batch_means(samples: np.ndarray, n_batches: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Mean and batch-means standard error along axis 0."""
    n = samples.shape[0]
    if n < n_batches:
        raise ValueError(f"need at least {n_batches} samples, got {n}")
    size = n // n_batches
    used = samples[: size * n_batches]
    means = used.reshape((n_batches, size) + samples.shape[1:]).mean(axis=1)
    return used.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(n_batches)


def estimate_fbar_ergodic(model: ModelSpec, x: SineField, cov2: CovSpec, burn_in: float | None = None,
                          window: float = 200.0, micro_dt: float = 1e-3,
                          stream: NoiseStream | None = None, y0: SineField | None = None,
                          n_batches: int = 20) -> FbarEstimate:
    """Time average of ``F(x, Y_t)`` over ``[burn_in, burn_in + window]``."""
    _check_dt(micro_dt)
    if burn_in is None:
        burn_in = default_burn_in(model)
    if burn_in <= 0:
        raise ValueError("burn_in must be > 0")
    if window < n_batches * micro_dt:
        raise ValueError(f"window {window} shorter than {n_batches} micro steps")
    if stream is None:
        stream = NoiseStream(0)
    if np.ndim(stream.path_id) != 0:
        raise ValueError("ergodic estimate runs a single path")
    m = x.m
    if y0 is None:
        y0 = SineField.zeros(m)
    n_burn = int(round(burn_in / micro_dt))
    n_win = int(round(window / micro_dt))
    traj = simulate_frozen(model, x, y0, micro_dt, n_burn + n_win, stream, cov2)[n_burn:]
    if model.is_linear:
        # F(x, y) = F1(x) + c y exactly, so average y first
        ybar, yerr = batch_means(traj, n_batches)
        c = model.linear["c"]
        value = model.F1_coeffs(x.coeffs) + c * ybar
        err = abs(c) * yerr
    else:
        vals = np.empty_like(traj)
        for start in range(0, n_win, _CHUNK):
            seg = traj[start : start + _CHUNK]
            vals[start : start + _CHUNK] = model.F_coeffs(np.broadcast_to(x.coeffs, seg.shape), seg)
        value, err = batch_means(vals, n_batches)
    return FbarEstimate(x, SineField(value), burn_in, window, micro_dt, err, n_batches)


def _require_linear(model: ModelSpec, what: str) -> None:
    if not model.is_linear:
        raise ValueError(f"{what} needs the linear_gaussian family, got {model.family!r}")


def invariant_mean_linear(model: ModelSpec, x: SineField) -> SineField:
    """Mean ``(aI - A)^{-1} g1(x)`` of the frozen invariant measure."""
    _require_linear(model, "invariant_mean_linear")
    lam = eigenvalues(x.m)
    return SineField(model.G0_coeffs(x.coeffs) / (lam + model.linear["a"]))


def fbar_analytic(model: ModelSpec, x: SineField) -> SineField:
    """``F1(x) + c (aI - A)^{-1} G0(x)`` for the linear_gaussian family."""
    _require_linear(model, "fbar_analytic")
    mu = invariant_mean_linear(model, x)
    return SineField(model.F1_coeffs(x.coeffs) + model.linear["c"] * mu.coeffs)


def poisson_corrector_linear(model: ModelSpec, x: SineField, y: SineField) -> SineField:
    """Closed-form corrector ``c (aI - A)^{-1} (y - mu_x)``."""
    _require_linear(model, "poisson_corrector_linear")
    if x.m != y.m:
        raise ValueError(f"mismatched truncation levels {x.m} and {y.m}")
    lam = eigenvalues(x.m)
    mu = invariant_mean_linear(model, x).coeffs
    return SineField(model.linear["c"] * (y.coeffs - mu) / (lam + model.linear["a"]))


def poisson_corrector_quadrature(model: ModelSpec, x: SineField, y: SineField, cov2: CovSpec,
                                 t_max: float = 5.0, n_paths: int = 2000, micro_dt: float = 1e-3,
                                 stream: NoiseStream | None = None,
                                 fbar: SineField | None = None) -> SineField:
    """Trapezoid quadrature of ``int_0^t_max (E F(x, Y_t^{x,y}) - Fbar(x)) dt``.

    The expectation is a mean over ``n_paths`` frozen chains drawn as
    antithetic pairs (``n_paths`` must be even).  ``fbar`` defaults to
    :func:`fbar_analytic` when available, else to an ergodic estimate.
    """
    _check_dt(micro_dt)
    if t_max <= 0 or n_paths <= 0:
        raise ValueError("t_max and n_paths must be > 0")
    if n_paths % 2:
        raise ValueError("n_paths must be even (antithetic pairs)")
    if stream is None:
        stream = NoiseStream(0)
    base = int(stream.path_id) if np.ndim(stream.path_id) == 0 else int(stream.path_id[0])
    pairs = NoiseStream(stream.master_seed, tuple(range(base, base + n_paths // 2)),
                        Channel.W2, stream.step)
    if fbar is None:
        if model.is_linear:
            fbar = fbar_analytic(model, x)
        else:
            fbar = estimate_fbar_ergodic(model, x, cov2, micro_dt=micro_dt,
                                         stream=NoiseStream(stream.master_seed, base + n_paths)).value
    n_steps = int(round(t_max / micro_dt))
    m = x.m
    integrand = np.empty((n_steps + 1, m))
    integrand[0] = model.F_coeffs(x.coeffs, y.coeffs) - fbar.coeffs
    # run in pieces so that only path means are kept
    piece = max(1, _CHUNK * 40 // (n_paths * m))
    state = np.broadcast_to(y.coeffs, (n_paths, m)).copy()
    for start in range(0, n_steps, piece):
        k = min(piece, n_steps - start)
        traj = simulate_frozen(model, x, SineField(state), micro_dt, k, pairs.at(pairs.step + start),
                               cov2, antithetic=True)
        state = traj[-1]
        if model.is_linear:
            means = model.F1_coeffs(x.coeffs) + model.linear["c"] * traj.mean(axis=1)
        else:
            means = model.F_coeffs(np.broadcast_to(x.coeffs, traj.shape), traj).mean(axis=1)
        integrand[start + 1 : start + 1 + k] = means - fbar.coeffs
    return SineField(integrate.trapezoid(integrand, dx=micro_dt, axis=0))


def autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalised autocorrelation of a 1-d series for lags ``0..max_lag``."""
    s = np.asarray(series, dtype=float) - np.mean(series)
    n = len(s)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(s, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / np.arange(n, n - max_lag - 1, -1)
    return acov / acov[0]
