import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msbl.coefficients import get_model
from msbl.integrators import (ErgodicFbarTable, SimParams, n_substeps, run_paths, simulate_averaged,
                              simulate_coupled, step_coupled)
from msbl.noise import Channel, CovSpec, NoiseStream
from msbl.spectral import SineField, apply_semigroup, burgers_B, phi1

ZERO = get_model("zero")
LIN = get_model("linear_gaussian_default")
QUIET = dict(cov1=CovSpec.zero(), cov2=CovSpec.zero())


def test_params_invariants():
    with pytest.raises(ValueError):
        SimParams(eps=0.0)
    with pytest.raises(ValueError):
        SimParams(eps=2.0)
    with pytest.raises(ValueError):
        SimParams(macro_dt=1.0, T=0.5)
    with pytest.raises(ValueError):
        SimParams(m=0)
    with pytest.raises(ValueError):
        SimParams(fast_policy="later")
    assert SimParams(T=0.5, macro_dt=1e-3).n_steps == 500


def test_substep_count_and_limit():
    assert n_substeps(SimParams(eps=2.0**-4, macro_dt=1e-3, kappa=0.05)) == 1
    assert n_substeps(SimParams(eps=2.0**-8, macro_dt=1e-3, kappa=0.05)) == 6
    with pytest.raises(ValueError, match="exceeds"):
        n_substeps(SimParams(eps=1e-9, macro_dt=0.1, kappa=1e-3))


def test_pure_semigroup_step():
    p = SimParams(m=6, eps=0.1, macro_dt=0.01, T=0.1, **QUIET)
    y = SineField(np.linspace(1, 0.2, 6))
    x1, y1 = step_coupled(SineField.zeros(6), y, ZERO, p, 0)
    assert np.all(x1.coeffs == 0)
    assert np.allclose(y1.coeffs, apply_semigroup(y, p.macro_dt / p.eps).coeffs, rtol=1e-12)


def test_semigroup_exact_for_any_step():
    # B(e_4) lives on mode 8, outside the truncation
    for dt in (1e-3, 0.01, 0.05):
        p = SimParams(m=4, macro_dt=dt, T=0.1, **QUIET)
        res = run_paths(ZERO, p, SineField.basis(4, 4), SineField.zeros(4), paths=[0], store=True)
        assert np.allclose(res.x_traj[-1, 0], apply_semigroup(SineField.basis(4, 4), 0.1).coeffs, rtol=1e-12)


@given(st.integers(0, 2**31))
@settings(max_examples=10, deadline=None)
def test_zero_noise_energy_nonincreasing(seed):
    rng = np.random.default_rng(seed)
    x0 = SineField(rng.normal(size=16) * 3 / np.arange(1, 17))
    p = SimParams(m=16, macro_dt=1e-3, T=0.05, **QUIET)
    res = run_paths(ZERO, p, x0, SineField.zeros(16), paths=[0])
    assert np.all(np.diff(res.x_norm[:, 0]) <= 1e-12)


def test_eps_one_matches_single_scale_stepper():
    m, dt = 8, 2e-3
    p = SimParams(eps=1.0, m=m, macro_dt=dt, T=0.02, **QUIET)
    x0 = SineField.basis(1, m, 2.0)
    xs, _ = simulate_coupled(x0, SineField.zeros(m), ZERO, p, 0)
    x = x0
    for _ in range(p.n_steps):
        x = SineField(apply_semigroup(x, dt).coeffs + phi1(m, dt) * burgers_B(x).coeffs)
    assert np.allclose(xs.states.coeffs[-1], x.coeffs, atol=1e-13)


def test_determinism_and_path_independence():
    p = SimParams(m=8, T=0.02, n_paths=3)
    x0, y0 = SineField.basis(1, 8), SineField.zeros(8)
    a, _ = simulate_coupled(x0, y0, LIN, p, 2)
    b, _ = simulate_coupled(x0, y0, LIN, p, 2)
    assert np.array_equal(a.states.coeffs, b.states.coeffs)
    batch = run_paths(LIN, p, x0, y0, paths=[0, 1, 2], store=True)
    assert np.array_equal(batch.x_traj[:, 2], a.states.coeffs)
    small = run_paths(LIN, p, x0, y0, paths=[0, 1, 2], store=True, batch=1)
    assert np.array_equal(small.x_traj, batch.x_traj)


def test_w1_shared_between_coupled_and_averaged():
    # with F = 0 both equations reduce to the same SPDE, so identical noise gives identical paths
    p = SimParams(m=8, T=0.05, n_paths=4)
    x0 = SineField.basis(1, 8)
    res = run_paths(ZERO, p, x0, SineField.zeros(8), coupled=True, averaged=True,
                    fbar_mode=lambda x: np.zeros_like(x), store=True)
    assert np.array_equal(res.x_traj, res.xbar_traj)
    avg = simulate_averaged(x0, ZERO, p, lambda x: np.zeros_like(x), path_id=3)
    assert np.array_equal(avg.states.coeffs, res.xbar_traj[:, 3])


def test_refine_consumes_half_step_increments():
    # with refine=2 the combined W1 convolution over two half steps equals the exact full-step law
    p = SimParams(m=4, T=0.02, macro_dt=0.01, **{"cov2": CovSpec.zero()})
    half = p.with_(macro_dt=0.005)
    a = run_paths(ZERO, p, SineField.zeros(4), SineField.zeros(4), paths=[0], refine=2, store=True)
    b = run_paths(ZERO, half, SineField.zeros(4), SineField.zeros(4), paths=[0], store=True)
    # zero model, zero initial state: only the linear part acts on the first step
    assert np.allclose(a.x_traj[1, 0], b.x_traj[2, 0], atol=1e-3)


def test_averaged_analytic_requires_linear():
    p = SimParams(m=4, T=0.01)
    with pytest.raises(ValueError):
        simulate_averaged(SineField.zeros(4), get_model("nonlinear_default"), p, "analytic")


def test_ergodic_table():
    model = get_model("nonlinear_default")
    cov2 = CovSpec.power_decay(1.0, 2.0)
    table = ErgodicFbarTable(model, cov2, window=1.0)
    with pytest.raises(ValueError):
        table(np.zeros((1, 4)))
    table.add(SineField.zeros(4))
    assert len(table) == 1
    out = table(np.zeros((3, 4)))
    assert out.shape == (3, 4)
    lazy = ErgodicFbarTable(model, cov2, tol=0.5, window=1.0)
    lazy(np.ones((2, 4)))
    assert len(lazy) == 1


def test_averaged_ergodic_close_to_analytic():
    m = 8
    p = SimParams(m=m, T=0.05, n_paths=2)
    cov2 = p.cov2
    x0 = SineField.basis(1, m)
    table = ErgodicFbarTable(LIN, cov2, tol=0.05, window=20.0)
    a = simulate_averaged(x0, LIN, p, "analytic", 0)
    e = simulate_averaged(x0, LIN, p, table, 0)
    assert np.max(np.abs(a.states.coeffs - e.states.coeffs)) < 0.01


def test_blowup_is_reported():
    p = SimParams(m=8, T=0.5, macro_dt=0.1)
    with pytest.raises(FloatingPointError), np.errstate(all="ignore"):
        run_paths(ZERO, p, SineField.basis(1, 8, 1e200), SineField.zeros(8), paths=[0])


def test_step_coupled_stream_pair():
    p = SimParams(m=4, T=0.01)
    x, y = SineField.basis(1, 4), SineField.zeros(4)
    pair = (NoiseStream(p.master_seed, 0, Channel.W1), NoiseStream(p.master_seed, 0, Channel.W2))
    x1, y1 = step_coupled(x, y, LIN, p, 0, pair)
    res = run_paths(LIN, p, x, y, paths=[0], store=True)
    assert np.allclose(x1.coeffs, res.x_traj[1, 0], atol=1e-14)
    assert np.allclose(y1.coeffs, res.y_traj[1, 0], atol=1e-14)


def test_step_halving_order_nonlinear():
    model = get_model("nonlinear_default")
    base = SimParams(m=16, eps=0.25, T=0.2, kappa=0.5, n_paths=20)
    x0, y0 = SineField.basis(1, 16), SineField.zeros(16)
    dts = [0.02, 0.01, 0.005]
    errs = []
    for dt in dts:
        coarse = base.with_(macro_dt=dt)
        fine = base.with_(macro_dt=dt / 2)
        nf = n_substeps(fine)
        a = run_paths(model, coarse, x0, y0, refine=2, n_sub=2 * nf, store=True)
        b = run_paths(model, fine, x0, y0, n_sub=nf, store=True)
        d = np.linalg.norm(a.x_traj - b.x_traj[::2], axis=-1).max(axis=0)
        errs.append(np.sqrt(np.mean(d**2)))
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 0.7 <= order <= 1.3, (errs, order)


def test_moments_flat_in_eps():
    x0, y0 = SineField.basis(1, 16), SineField.zeros(16)
    vals = []
    for eps in (2.0**-2, 2.0**-4, 2.0**-6):
        res = run_paths(LIN, SimParams(m=16, eps=eps, n_paths=100, T=0.25), x0, y0)
        vals.append(np.mean(res.x_norm.max(axis=0) ** 2))
    assert max(vals) / min(vals) < 1.2
