import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from msbl.noise import (Channel, CovSpec, NoiseStream, convolution_increment, convolution_std, gaussians,
                        philox4x32, wiener_increment)
from msbl.spectral import eigenvalues

# Random123 known-answer vectors for philox4x32-10
KAT = [
    ([0, 0, 0, 0], [0, 0], [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]),
    ([0xFFFFFFFF] * 4, [0xFFFFFFFF] * 2, [0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]),
    ([0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344], [0xA4093822, 0x299F31D0],
     [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    assert philox4x32(ctr, key).tolist() == expected


def test_gaussians_deterministic_and_addressed():
    a = gaussians(7, 3, 1, 11, 16)
    assert np.array_equal(a, gaussians(7, 3, 1, 11, 16))
    for other in (gaussians(8, 3, 1, 11, 16), gaussians(7, 4, 1, 11, 16),
                  gaussians(7, 3, 2, 11, 16), gaussians(7, 3, 1, 12, 16)):
        assert not np.allclose(a, other)


@given(st.integers(1, 40), st.integers(1, 40))
def test_mode_draws_independent_of_truncation(m1, m2):
    a = gaussians(1, 0, 1, 5, m1)
    b = gaussians(1, 0, 1, 5, m2)
    k = min(m1, m2)
    assert np.array_equal(a[:k], b[:k])


def test_batch_does_not_change_values():
    batch = gaussians(5, np.arange(10), 1, 3, 4)
    single = np.stack([gaussians(5, p, 1, 3, 4) for p in range(10)])
    assert np.array_equal(batch, single)


def test_gaussian_distribution():
    z = gaussians(123, np.arange(20000), 1, 0, 10).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_stream_steps_and_channels():
    s = NoiseStream(9, (0, 1, 2), Channel.W2)
    z = s.normals_steps(5, [0, 1, 2, 3])
    assert z.shape == (4, 3, 5)
    assert np.array_equal(z[2], s.at(2).normals(5))
    assert np.array_equal(s.advance(3).normals(5), z[3])
    assert not np.allclose(s.with_channel(Channel.W1).normals(5), s.normals(5))


def test_stream_rejects_negative():
    with pytest.raises(ValueError):
        NoiseStream(0, -1)
    with pytest.raises(ValueError):
        NoiseStream(0, 0, step=-1)


def test_covspec_laws():
    assert np.allclose(CovSpec.power_decay(2.0, 2.0).alphas(3), [2.0, 0.5, 2 / 9])
    assert np.allclose(CovSpec.finite_rank([1.0, 0.5]).alphas(4), [1.0, 0.5, 0, 0])
    assert CovSpec.zero().is_zero and not CovSpec.zero().alphas(3).any()
    c = CovSpec.power_decay(1.0, 3.0, m_max=16)
    assert CovSpec.from_dict(c.to_dict()) == c
    with pytest.raises(ValueError):
        c.alphas(17)


@pytest.mark.parametrize("bad", [("power_decay", (1.0,)), ("power_decay", (-1.0, 2.0)),
                                 ("finite_rank", (1.0, -0.5)), ("nope", ())])
def test_covspec_invalid(bad):
    with pytest.raises(ValueError):
        CovSpec(*bad)


@given(st.floats(1e-6, 1.0))
def test_convolution_std_formula(dt):
    cov = CovSpec.power_decay(1.0, 2.0)
    lam = eigenvalues(6)
    expected = np.sqrt(cov.alphas(6) * (1 - np.exp(-2 * lam * dt)) / (2 * lam))
    assert np.allclose(convolution_std(cov, 6, dt), expected, rtol=1e-12)


def test_convolution_variance_empirical():
    cov = CovSpec.power_decay(1.0, 2.0)
    dt = 0.01
    s = NoiseStream(3, tuple(range(20000)))
    inc = convolution_increment(cov, 4, dt, s).coeffs
    target = convolution_std(cov, 4, dt) ** 2
    assert np.allclose(inc.var(axis=0), target, rtol=0.05)
    w = wiener_increment(cov, 4, dt, s).coeffs
    assert np.allclose(w.var(axis=0), cov.alphas(4) * dt, rtol=0.05)


def test_increments_reject_bad_dt():
    cov = CovSpec.power_decay(1.0, 2.0)
    with pytest.raises(ValueError):
        wiener_increment(cov, 3, 0.0, NoiseStream(0))
    with pytest.raises(ValueError):
        convolution_increment(cov, 3, -1.0, NoiseStream(0))
