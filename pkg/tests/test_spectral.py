import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from msbl.spectral import (GridField, SineField, apply_semigroup, bilinear_B, burgers_B, eigenvalues,
                           from_grid, inner, phi1, project, sobolev_norm, to_grid, trilinear_b)

coeff = st.floats(-3, 3, allow_nan=False, allow_subnormal=False)


@st.composite
def fields(draw, m=None, pair=False):
    m = draw(st.integers(1, 24)) if m is None else m
    xs = [SineField(draw(arrays(np.float64, m, elements=coeff))) for _ in range(2 if pair else 1)]
    return xs if pair else xs[0]


def _quad_b(a, b, c):
    """``int x y' z`` by Gauss-Legendre on 400 nodes (exact for these degrees)."""
    nodes, weights = np.polynomial.legendre.leggauss(400)
    xi = 0.5 * (nodes + 1.0)
    k = np.arange(1, len(a) + 1)
    S = math.sqrt(2) * np.sin(np.pi * np.outer(xi, k))
    C = math.sqrt(2) * np.pi * k * np.cos(np.pi * np.outer(xi, k))
    return 0.5 * np.sum(weights * (S @ a) * (C @ b) * (S @ c))


def test_eigenvalues():
    assert np.allclose(eigenvalues(3), [np.pi**2, 4 * np.pi**2, 9 * np.pi**2])


def test_phi1_small_dt_limit():
    assert np.allclose(phi1(4, 1e-12), 1e-12, rtol=1e-6)


def test_sinefield_rejects_nonfinite():
    with pytest.raises(ValueError):
        SineField(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        SineField(np.array([]))


def test_sinefield_immutable():
    x = SineField.basis(2, 4)
    with pytest.raises(ValueError):
        x.coeffs[0] = 1.0


def test_b_e1_e1_e2_value():
    e1, e2 = SineField.basis(1, 4), SineField.basis(2, 4)
    assert trilinear_b(e1, e1, e2) == pytest.approx(np.pi / math.sqrt(2), abs=1e-12)
    q, _ = integrate.quad(lambda s: 2 * math.sqrt(2) * np.pi * np.sin(np.pi * s) * np.cos(np.pi * s)
                          * np.sin(2 * np.pi * s), 0, 1, epsabs=1e-14)
    assert trilinear_b(e1, e1, e2) == pytest.approx(q, abs=1e-12)


def test_burgers_quadratic_homogeneity():
    out = burgers_B(SineField.basis(1, 6, 3.0)).coeffs
    expected = np.zeros(6)
    expected[1] = 9.0 * np.pi / math.sqrt(2)
    assert np.allclose(out, expected, atol=1e-12)
    assert np.all(burgers_B(SineField.zeros(5)).coeffs == 0)


def test_bilinear_against_quadrature_oracle():
    rng = np.random.default_rng(3)
    for _ in range(5):
        a, b = rng.normal(size=(2, 7))
        out = bilinear_B(SineField(a), SineField(b)).coeffs
        for n in range(7):
            c = np.zeros(7)
            c[n] = 1.0
            assert out[n] == pytest.approx(_quad_b(a, b, c), abs=1e-10)


def test_bilinear_mismatch_rejected():
    with pytest.raises(ValueError):
        bilinear_B(SineField.zeros(3), SineField.zeros(4))


@given(fields(pair=True))
def test_skew_symmetry(xy):
    x, y = xy
    scale = 1.0 + np.sum(np.abs(x.coeffs)) ** 2 * (1.0 + np.sum(np.abs(y.coeffs)))
    assert abs(trilinear_b(x, x, y) + 0.5 * trilinear_b(x, y, x)) <= 1e-10 * scale
    assert abs(trilinear_b(x, x, x)) <= 1e-10 * (1 + np.sum(np.abs(x.coeffs)) ** 3)


@given(fields(pair=True))
def test_burgers_matches_trilinear(xz):
    x, z = xz
    scale = 1.0 + np.sum(np.abs(x.coeffs)) ** 2 * np.sum(np.abs(z.coeffs))
    assert abs(inner(burgers_B(x), z) - trilinear_b(x, x, z)) <= 1e-10 * scale


@given(fields(), st.integers(0, 40))
def test_grid_roundtrip(x, extra):
    n = x.m + extra
    back = from_grid(to_grid(x, n)).coeffs
    assert np.allclose(back[: x.m], x.coeffs, rtol=1e-12, atol=1e-12)
    assert np.allclose(back[x.m :], 0.0, atol=1e-12)


def test_to_grid_small_n_rejected():
    with pytest.raises(ValueError):
        to_grid(SineField.zeros(8), 4)


def test_grid_nodes_and_values():
    g = to_grid(SineField.basis(1, 3), 5)
    assert np.allclose(g.nodes(), np.arange(1, 6) / 6)
    assert np.allclose(g.values, math.sqrt(2) * np.sin(np.pi * g.nodes()))
    with pytest.raises(ValueError):
        GridField(np.array([np.inf]))


@given(fields(), st.floats(0, 0.1), st.floats(0, 0.1))
def test_semigroup_composition(x, s, t):
    a = apply_semigroup(x, s + t).coeffs
    b = apply_semigroup(apply_semigroup(x, s), t).coeffs
    assert np.allclose(a, b, rtol=1e-13, atol=1e-300)


@given(fields(), st.floats(0, 1), st.floats(0, 0.05), st.floats(0, 0.05))
def test_semigroup_norm_nonincreasing(x, s, t1, dt):
    assert sobolev_norm(apply_semigroup(x, t1 + dt), s) <= sobolev_norm(apply_semigroup(x, t1), s) + 1e-12


def test_semigroup_negative_time_rejected():
    with pytest.raises(ValueError):
        apply_semigroup(SineField.zeros(2), -1.0)


@given(fields())
def test_parseval(x):
    assert sobolev_norm(x, 0) ** 2 == pytest.approx(np.sum(x.coeffs**2), rel=1e-14, abs=1e-300)


def test_sobolev_negative_index():
    x = SineField.basis(2, 3)
    assert sobolev_norm(x, -0.5) == pytest.approx((2 * np.pi) ** -0.5)


@given(fields(), st.data())
def test_project_contracts(x, data):
    k = data.draw(st.integers(1, x.m))
    assert project(x, k).norm() <= x.norm() + 1e-15
    assert np.array_equal(project(x, x.m).coeffs, x.coeffs)


def test_project_errors():
    assert np.all(project(SineField.basis(2, 3), 1).coeffs == 0)
    with pytest.raises(ValueError):
        project(SineField.zeros(3), 4)
    with pytest.raises(ValueError):
        project(SineField.zeros(3), 0)


def test_batched_fields():
    x = SineField(np.ones((4, 5)))
    assert x.batch_shape == (4,)
    assert burgers_B(x).coeffs.shape == (4, 5)
    assert np.allclose(x.norm(), math.sqrt(5))
