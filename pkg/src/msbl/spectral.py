"""Fields in the Dirichlet sine basis on (0, 1).

A field is stored through its coefficients ``a_k`` against the orthonormal
basis ``e_k(xi) = sqrt(2) sin(k pi xi)``, ``k = 1..m``.  Coefficient arrays may
carry leading batch axes (one row per Monte-Carlo path); every operation acts
on the last axis only.

The Laplacian is diagonal in this basis with eigenvalues ``-lambda_k``,
``lambda_k = k^2 pi^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft

__all__ = [
    "SineField",
    "GridField",
    "eigenvalues",
    "phi1",
    "to_grid",
    "from_grid",
    "apply_semigroup",
    "sobolev_norm",
    "bilinear_B",
    "burgers_B",
    "trilinear_b",
    "project",
    "inner",
]


def eigenvalues(m: int) -> np.ndarray:
    """``lambda_k = k^2 pi^2`` for ``k = 1..m``."""
    k = np.arange(1, m + 1, dtype=float)
    return (np.pi * k) ** 2


def phi1(m: int, dt: float) -> np.ndarray:
    """Per-mode weights ``(1 - exp(-lambda_k dt)) / lambda_k`` of exponential Euler."""
    lam = eigenvalues(m)
    return -np.expm1(-lam * dt) / lam


@dataclass(frozen=True, eq=False)
class SineField:
    """Truncated field ``sum_k a_k e_k``; ``coeffs[..., k-1] = a_k``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 0 or c.shape[-1] < 1:
            raise ValueError("a SineField needs at least one mode")
        if not np.all(np.isfinite(c)):
            raise ValueError("SineField coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def m(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @classmethod
    def zeros(cls, m: int, batch: tuple = ()) -> "SineField":
        return cls(np.zeros(tuple(batch) + (m,)))

    @classmethod
    def basis(cls, k: int, m: int, scale: float = 1.0) -> "SineField":
        """``scale * e_k`` truncated at ``m`` modes."""
        if not 1 <= k <= m:
            raise ValueError(f"mode {k} outside 1..{m}")
        c = np.zeros(m)
        c[k - 1] = scale
        return cls(c)

    def norm(self) -> np.ndarray | float:
        """L2 norm (Parseval)."""
        return np.sqrt(np.sum(self.coeffs**2, axis=-1))

    def __add__(self, other: "SineField") -> "SineField":
        _check_same_m(self, other)
        return SineField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SineField") -> "SineField":
        _check_same_m(self, other)
        return SineField(self.coeffs - other.coeffs)

    def __neg__(self) -> "SineField":
        return SineField(-self.coeffs)

    def __mul__(self, scalar) -> "SineField":
        return SineField(self.coeffs * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SineField(m={self.m}, batch={self.batch_shape})"


@dataclass(frozen=True, eq=False)
class GridField:
    """Point values at ``xi_j = j / (n + 1)``, ``j = 1..n``; zero at both ends."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 0 or v.shape[-1] < 1:
            raise ValueError("a GridField needs at least one interior point")
        if not np.all(np.isfinite(v)):
            raise ValueError("GridField values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / (self.n + 1)


def _check_same_m(*fields: SineField) -> None:
    ms = {f.m for f in fields}
    if len(ms) != 1:
        raise ValueError(f"fields have mismatched truncation levels {sorted(ms)}")


# Array kernels.  The integrators call these directly to skip the wrapper.

def grid_values(coeffs: np.ndarray, n: int) -> np.ndarray:
    m = coeffs.shape[-1]
    if n < m:
        raise ValueError(f"grid size n={n} smaller than truncation m={m}")
    padded = np.zeros(coeffs.shape[:-1] + (n,))
    padded[..., :m] = coeffs
    # DST-I: y_j = 2 sum_k a_k sin(pi j k / (n+1))
    return fft.dst(padded, type=1, axis=-1) / np.sqrt(2.0)


def grid_coeffs(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    return fft.dst(values, type=1, axis=-1) / (np.sqrt(2.0) * (n + 1))


def burgers_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficients of ``pi_m (x * d/dxi y)`` by exact convolution.

    With ``x = sum a_k e_k`` and ``y = sum b_l e_l``,
    ``x y' = (pi / sqrt 2) sum_{k,l} a_k l b_l [s_{k+l} + s_{k-l}]`` where
    ``s_j = sqrt(2) sin(j pi xi)`` and ``s_{-j} = -s_j``.
    """
    m = a.shape[-1]
    lb = b * np.arange(1, m + 1)
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    # index i <-> mode i+1
    for i in range(m):
        ai = a[..., i : i + 1]
        # k + l = n  ->  n-1 = i + j + 1
        if i + 1 < m:
            out[..., i + 1 :] += ai * lb[..., : m - i - 1]
        # k - l = n > 0  ->  l = k - n
        if i > 0:
            out[..., :i] += ai * lb[..., i - 1 :: -1]
        # l - k = n > 0  ->  l = k + n
        if i + 1 < m:
            out[..., : m - i - 1] -= ai * lb[..., i + 1 :]
    return out * (np.pi / np.sqrt(2.0))


# Public operations on SineField values.

def to_grid(x: SineField, n: int | None = None) -> GridField:
    """Evaluate ``x`` on ``n`` interior nodes (default ``2m``)."""
    if n is None:
        n = 2 * x.m
    return GridField(grid_values(x.coeffs, n))


def from_grid(g: GridField) -> SineField:
    """Discrete sine transform of ``g``; returns ``n`` modes."""
    return SineField(grid_coeffs(g.values))


def apply_semigroup(x: SineField, t: float) -> SineField:
    """Heat semigroup ``e^{tA} x``: mode ``k`` scaled by ``exp(-lambda_k t)``."""
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    return SineField(x.coeffs * np.exp(-eigenvalues(x.m) * t))


def sobolev_norm(x: SineField, s: float) -> np.ndarray | float:
    """``||x||_s = (sum lambda_k^s a_k^2)^{1/2}``; negative ``s`` allowed."""
    w = eigenvalues(x.m) ** s
    return np.sqrt(np.sum(w * x.coeffs**2, axis=-1))


def bilinear_B(x: SineField, y: SineField) -> SineField:
    """Galerkin projection of ``x * d/dxi y`` onto the first ``m`` modes."""
    _check_same_m(x, y)
    return SineField(burgers_coeffs(x.coeffs, y.coeffs))


def burgers_B(x: SineField) -> SineField:
    """``B(x) = x x' = (1/2) d/dxi (x^2)``, projected."""
    return bilinear_B(x, x)


def inner(x: SineField, y: SineField) -> np.ndarray | float:
    _check_same_m(x, y)
    return np.sum(x.coeffs * y.coeffs, axis=-1)


def trilinear_b(x: SineField, y: SineField, z: SineField) -> np.ndarray | float:
    """``b(x, y, z) = int_0^1 x y' z dxi`` (exact for truncated fields)."""
    _check_same_m(x, y, z)
    return inner(bilinear_B(x, y), z)


def project(x: SineField, m: int) -> SineField:
    """Keep the first ``m`` coefficients."""
    if m > x.m:
        raise ValueError(f"cannot project {x.m} modes up to {m}")
    if m < 1:
        raise ValueError("projection level must be >= 1")
    return SineField(x.coeffs[..., :m])
