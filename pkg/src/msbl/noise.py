"""Q-Wiener increments with counter-addressed Gaussian streams.

Every Gaussian vector is a pure function of ``(master_seed, path_id, channel,
step)``.  The address is hashed with Philox4x32-10, so a draw never depends on
which other paths or steps were evaluated before it.  Mode ``k`` of an address
is always the same number whatever truncation level asks for it, which keeps
noise shared across Galerkin levels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .spectral import SineField, eigenvalues

__all__ = [
    "Channel",
    "CovSpec",
    "NoiseStream",
    "philox4x32",
    "gaussians",
    "wiener_increment",
    "convolution_increment",
    "convolution_std",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function.

    ``counter`` has shape ``(..., 4)``, ``key`` shape ``(..., 2)``; both hold
    32-bit words (any integer dtype).  Returns ``(..., 4)`` uint64 words < 2^32.
    """
    ctr = np.asarray(counter, dtype=np.uint64) & _MASK
    k = np.asarray(key, dtype=np.uint64) & _MASK
    c0, c1, c2, c3 = (ctr[..., i] for i in range(4))
    k0, k1 = k[..., 0], k[..., 1]
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ k1,
            p0 & _MASK,
        )
    return np.stack([c0, c1, c2, c3], axis=-1)


def gaussians(seed: int, path, channel: int, step, n: int) -> np.ndarray:
    """Standard normals for the addresses ``broadcast(path, step)``.

    Returns an array of shape ``broadcast(path, step).shape + (n,)``.  Entry
    ``k`` only depends on the address and ``k``.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    path = np.asarray(path, dtype=np.uint64)
    step = np.asarray(step, dtype=np.uint64)
    path, step = np.broadcast_arrays(path, step)
    nblk = (n + 1) // 2
    shape = path.shape + (nblk,)
    ctr = np.empty(shape + (4,), dtype=np.uint64)
    ctr[..., 0] = np.arange(nblk, dtype=np.uint64)
    ctr[..., 1] = step[..., None]
    ctr[..., 2] = path[..., None]
    ctr[..., 3] = np.uint64(channel)
    key = np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)
    w = philox4x32(ctr, key)
    # two 53-bit uniforms in (0, 1) per block
    u1 = (((w[..., 0] << _S32) | w[..., 1]) >> np.uint64(11)).astype(float)
    u2 = (((w[..., 2] << _S32) | w[..., 3]) >> np.uint64(11)).astype(float)
    u1 = (u1 + 0.5) * 2.0**-53
    u2 = (u2 + 0.5) * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(shape + (2,))
    z[..., 0] = r * np.cos(2.0 * np.pi * u2)
    z[..., 1] = r * np.sin(2.0 * np.pi * u2)
    return z.reshape(path.shape + (2 * nblk,))[..., :n]


class Channel(enum.IntEnum):
    W1 = 1
    W2 = 2


@dataclass(frozen=True)
class CovSpec:
    """Diagonal covariance ``Q e_k = alpha_k e_k``.

    ``law`` is ``"power_decay"`` (``params = (c, r)``, ``alpha_k = c k^-r``),
    ``"finite_rank"`` (``params`` lists ``alpha_1, alpha_2, ...``) or ``"zero"``.
    """

    law: str
    params: tuple = ()
    m_max: int = 128

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.law == "power_decay":
            if len(self.params) != 2:
                raise ValueError("power_decay needs (c, r)")
            c, r = self.params
            if not (np.isfinite(c) and np.isfinite(r)) or c < 0:
                raise ValueError(f"invalid power_decay parameters {self.params}")
        elif self.law == "finite_rank":
            a = np.array(self.params)
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError("finite_rank eigenvalues must be finite and >= 0")
        elif self.law == "zero":
            pass
        else:
            raise ValueError(f"unknown covariance law {self.law!r}")
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")

    @classmethod
    def power_decay(cls, c: float, r: float, m_max: int = 128) -> "CovSpec":
        return cls("power_decay", (c, r), m_max)

    @classmethod
    def finite_rank(cls, alphas, m_max: int = 128) -> "CovSpec":
        return cls("finite_rank", tuple(alphas), m_max)

    @classmethod
    def zero(cls, m_max: int = 128) -> "CovSpec":
        return cls("zero", (), m_max)

    def alphas(self, m: int) -> np.ndarray:
        if m > self.m_max:
            raise ValueError(f"requested {m} modes but covariance m_max={self.m_max}")
        if self.law == "power_decay":
            c, r = self.params
            return c * np.arange(1, m + 1, dtype=float) ** (-r)
        out = np.zeros(m)
        if self.law == "finite_rank":
            a = np.array(self.params[:m])
            out[: len(a)] = a
        return out

    @property
    def is_zero(self) -> bool:
        return self.law == "zero" or (self.law == "finite_rank" and not any(self.params)) or (
            self.law == "power_decay" and self.params[0] == 0.0
        )

    def to_dict(self) -> dict:
        return {"law": self.law, "params": list(self.params), "m_max": self.m_max}

    @classmethod
    def from_dict(cls, d: dict) -> "CovSpec":
        return cls(d["law"], tuple(d.get("params", ())), int(d.get("m_max", 128)))


@dataclass(frozen=True)
class NoiseStream:
    """Address of a Gaussian draw.

    ``path_id`` may be an int or a tuple of ints (a batch of paths); the
    emitted fields then carry a leading path axis.
    """

    master_seed: int
    path_id: int | tuple = 0
    channel: Channel = Channel.W1
    step: int = 0
    _paths: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = self.path_id
        if not np.isscalar(p):
            p = tuple(int(i) for i in p)
            object.__setattr__(self, "path_id", p)
        arr = np.asarray(p, dtype=np.int64)
        if np.any(arr < 0):
            raise ValueError("path ids must be non-negative")
        object.__setattr__(self, "_paths", arr)
        if self.step < 0:
            raise ValueError("step must be >= 0")

    def at(self, step: int) -> "NoiseStream":
        return replace(self, step=int(step))

    def advance(self, k: int = 1) -> "NoiseStream":
        return replace(self, step=self.step + k)

    def with_channel(self, channel: Channel) -> "NoiseStream":
        return replace(self, channel=Channel(channel))

    def normals(self, n: int, step: int | None = None) -> np.ndarray:
        s = self.step if step is None else step
        return gaussians(self.master_seed, self._paths, int(self.channel), s, n)

    def normals_steps(self, n: int, steps) -> np.ndarray:
        """Draws for many steps at once; steps on the leading axis."""
        steps = np.asarray(steps)
        p = self._paths
        z = gaussians(
            self.master_seed, p[None, ...], int(self.channel),
            steps.reshape((-1,) + (1,) * p.ndim), n,
        )
        return z


def convolution_std(cov: CovSpec, m: int, dt: float) -> np.ndarray:
    """Per-mode std of ``int_0^dt e^{(dt-s)A} sqrt(Q) dW_s``."""
    lam = eigenvalues(m)
    return np.sqrt(cov.alphas(m) * (-np.expm1(-2.0 * lam * dt)) / (2.0 * lam))


def wiener_increment(cov: CovSpec, m: int, dt: float, stream: NoiseStream) -> SineField:
    """``sqrt(Q)(W_{t+dt} - W_t)`` projected on ``m`` modes."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return SineField(np.sqrt(cov.alphas(m) * dt) * stream.normals(m))


def convolution_increment(cov: CovSpec, m: int, dt: float, stream: NoiseStream) -> SineField:
    """Exact one-step stochastic convolution of exponential Euler."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return SineField(convolution_std(cov, m, dt) * stream.normals(m))
