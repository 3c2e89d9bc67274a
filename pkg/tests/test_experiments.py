import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msbl.coefficients import get_model
from msbl.experiments import (FUNCTIONALS, BiasGuardError, DegenerateStudyError, ErrorReport,
                              AssumptionError, bias_guard, fit_line, fit_order, galerkin_refinement_check,
                              get_functional, moment_check, strong_error_study, weak_error_study)
from msbl.experiments import _guard_or_raise
from msbl.integrators import SimParams, run_paths
from msbl.noise import CovSpec
from msbl.spectral import SineField

LIN = get_model("linear_gaussian_default")
GRID6 = [2.0**-k for k in range(3, 9)]


@pytest.mark.parametrize("q", [0.5, 1.0, 1.7])
def test_fit_exact_power_law(q):
    eps = np.array(GRID6)
    slope, (lo, hi) = fit_order(eps, 3.0 * eps**q)
    assert slope == pytest.approx(q, abs=1e-12)
    assert hi - lo < 1e-9


@given(st.floats(0.1, 2.0), st.floats(1e-3, 1e3))
def test_fit_invariant_to_scale(q, c):
    eps = np.array(GRID6)
    assert fit_order(eps, c * eps**q, 0.1 * c * eps**q)[0] == pytest.approx(q, abs=1e-9)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_order([0.5, 0.25], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_order([0.5, 0.25, 0.125], [1.0, 0.0, 0.5])


def test_fit_slope_band_and_coverage():
    rng = np.random.default_rng(2024)
    eps = np.array(GRID6)
    inside = covered = 0
    for _ in range(1000):
        err = eps**0.5 * (1.0 + 0.1 * rng.standard_normal(6))
        slope, (lo, hi) = fit_order(eps, err, 0.1 * err)
        inside += 0.4 <= slope <= 0.6
        covered += lo <= 0.5 <= hi
    assert inside >= 950
    assert covered >= 900


def test_fit_line_passes_through_exact_data():
    eps = np.array(GRID6)
    err = 2.0 * eps**0.5
    assert np.allclose(fit_line(eps, err), np.log10(err))


def test_error_report_invariants():
    with pytest.raises(ValueError):
        ErrorReport([0.1, 0.2, 0.05], [1, 1, 1], [0, 0, 0], 0.5, (0.4, 0.6), {})
    with pytest.raises(ValueError):
        ErrorReport([0.4, 0.2, 0.1], [1, 0, 1], [0, 0, 0], 0.5, (0.4, 0.6), {})
    with pytest.raises(ValueError):
        ErrorReport([0.4, 0.2, 0.1], [1, 1, 1], [0, 0, 0], 0.7, (0.4, 0.6), {})


def test_strong_study_with_stub():
    rep = strong_error_study(LIN, None, None, GRID6, SimParams(), estimator=lambda e: (e**0.5, 0.0))
    assert rep.fitted_order == pytest.approx(0.5, abs=1e-6)
    assert rep.protocol["estimator"] == "injected"
    assert rep.in_band((0.4, 0.6))


def test_weak_study_with_stub():
    rep = weak_error_study(LIN, None, None, "sin_e1", [2.0**-k for k in range(2, 7)], SimParams(),
                           estimator=lambda e: (e, 0.01 * e))
    assert rep.fitted_order == pytest.approx(1.0, abs=1e-6)
    assert rep.flags == []


def test_weak_flags_unresolved_points():
    rep = weak_error_study(LIN, None, None, "sin_e1", [0.5, 0.25, 0.125], SimParams(),
                           estimator=lambda e: (-e, e))
    assert len(rep.flags) == 3
    assert rep.estimates == [-0.5, -0.25, -0.125]


def test_constant_functional_is_degenerate():
    with pytest.raises(DegenerateStudyError, match="degenerate functional"):
        weak_error_study(LIN, None, None, "constant", [0.5, 0.25, 0.125], SimParams())


def test_grid_checks():
    with pytest.raises(ValueError):
        strong_error_study(LIN, None, None, [0.5, 0.25], SimParams(), estimator=lambda e: (e, 0))
    with pytest.raises(ValueError):
        strong_error_study(LIN, None, None, [0.25, 0.5, 0.125], SimParams(), estimator=lambda e: (e, 0))
    with pytest.raises(ValueError):
        strong_error_study(LIN, None, None, GRID6, SimParams(), p=1.0, estimator=lambda e: (e, 0))


def test_validation_gate():
    bad = SimParams(cov1=CovSpec.power_decay(1.0, 2.0))
    with pytest.raises(AssumptionError):
        strong_error_study(LIN, None, None, GRID6, bad, estimator=lambda e: (e, 0))


def test_functionals_bounded():
    x = np.random.default_rng(0).normal(size=(50, 8)) * 10
    for phi in FUNCTIONALS.values():
        v = phi(x)
        assert v.shape == (50,) and np.all(np.abs(v) <= 1.0)
    with pytest.raises(KeyError):
        get_functional("nope")


def test_bias_guard_probe_and_abort():
    m = 8
    p = SimParams(m=m, T=0.1, eps=0.125, n_paths=10)
    x0, y0 = SineField.basis(1, m), SineField.zeros(m)
    g = bias_guard(LIN, x0, y0, p, "strong")
    assert g["passed"] and g["ratio"] < 0.1
    strict = bias_guard(LIN, x0, y0, p, "strong", threshold=1e-12)
    assert not strict["passed"] and strict["suggested_macro_dt"] < p.macro_dt
    with pytest.raises(BiasGuardError) as info:
        _guard_or_raise(strict)
    assert info.value.dt_bias == strict["dt_bias"]
    assert info.value.exit_code == 3


def test_strong_study_small_end_to_end():
    p = SimParams(m=8, T=0.1, n_paths=20)
    rep = strong_error_study(LIN, SineField.basis(1, 8), SineField.zeros(8), [0.25, 0.125, 0.0625], p)
    assert rep.bias_guard["passed"]
    assert all(b < a for a, b in zip(rep.errors, rep.errors[1:]))
    assert rep.protocol["sup"].startswith("discrete sup")


def test_coupled_difference_beats_independent_samples():
    m = 16
    p = SimParams(m=m, T=0.5, eps=2.0**-4, n_paths=200)
    x0, y0 = SineField.basis(1, m), SineField.basis(1, m, 50.0)
    phi = FUNCTIONALS["sin_e1"]
    res = run_paths(LIN, p, x0, y0, coupled=True, averaged=True)
    coupled = np.var(phi(res.x_final) - phi(res.xbar_final), ddof=1)
    # independent W1 for the averaged run
    other = run_paths(LIN, p, x0, None, paths=np.arange(10**6, 10**6 + 200), coupled=False, averaged=True)
    independent = np.var(phi(res.x_final), ddof=1) + np.var(phi(other.xbar_final), ddof=1)
    assert coupled <= independent
    assert coupled < 0.1 * independent


def test_moment_check_zero_model():
    m = 8
    p = SimParams(m=m, T=0.1, n_paths=3, cov1=CovSpec.zero(), cov2=CovSpec.zero())
    rep = moment_check(get_model("zero"), SineField.basis(1, m, 0.5), SineField.zeros(m),
                       [0.25, 0.0625], p)
    assert rep.sup_x[0] == pytest.approx(0.25, rel=1e-12)
    assert rep.ratio_x == pytest.approx(1.0, abs=1e-12)
    assert rep.passed
    assert rep.to_json()["passed"] is True


def test_galerkin_small():
    p = SimParams(T=0.05, n_paths=10)
    rep = galerkin_refinement_check(LIN, 0.25, p, [4, 8], m_ref=16)
    assert rep.decreasing
    assert rep.to_json()["m_ref"] == 16
    with pytest.raises(ValueError):
        galerkin_refinement_check(LIN, 0.25, p, [8, 4])
    with pytest.raises(ValueError):
        galerkin_refinement_check(LIN, 0.25, p, [4, 8], m_ref=8)


def test_galerkin_reference_stable():
    p = SimParams(n_paths=20)
    a = galerkin_refinement_check(LIN, 2.0**-4, p, [8, 16, 32], m_ref=64)
    b = galerkin_refinement_check(LIN, 2.0**-4, p, [8, 16, 32], m_ref=128)
    assert abs(b.errors[0] - a.errors[0]) < 0.1 * a.errors[0]
