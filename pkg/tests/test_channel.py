import numpy as np
import pytest
from conftest import tiny_scenario

from mcmimo.channel import (
    complex_normal,
    draw_channels,
    error_variance,
    estimation_coefficients,
    observe_and_estimate,
    observe_pilots,
    sample_directions,
)
from mcmimo.geometry import UserDrop


def _drop_from_gains(gains):
    gains = np.asarray(gains, dtype=float)
    L, _, K = gains.shape
    return UserDrop(np.zeros((L, K, 2)), np.ones_like(gains), np.zeros_like(gains), gains, 3.7)


def test_complex_normal_moments(rng):
    n = 100_000
    z = complex_normal(rng, (n,), 1.0)
    se = 1 / np.sqrt(n)
    assert abs(np.mean(np.abs(z) ** 2) - 1) < 3 * se
    assert abs(np.mean(z**2)) < 3 * se * np.sqrt(2)


def test_complex_normal_variance_split(rng):
    z = complex_normal(rng, (200_000,), 4.0)
    assert np.var(z.real) == pytest.approx(2.0, rel=0.02)
    assert np.var(z.imag) == pytest.approx(2.0, rel=0.02)


def test_draw_channels_shapes_and_variance(net, rng):
    from mcmimo.geometry import make_drop

    drop = make_drop(net, 2, rng)
    h = draw_channels(drop, 8, rng, n=500)
    assert h.shape == (500, 19, 19, 2, 8)
    ratio = np.mean(np.abs(h) ** 2, axis=(0, -1)) / drop.gains
    assert np.mean(ratio) == pytest.approx(1.0, abs=0.01)
    with pytest.raises(ValueError):
        draw_channels(drop, 0, rng)


@pytest.mark.parametrize(
    "gains,index,B,expected",
    [
        ([[[1.0]]], [[0]], 1, [1 / 2]),
        ([[[1.0]]], [[0]], 2, [1 / 3, 1.0]),  # pilot 1 unused: 1 / sigma2
        ([[[1.0], [1.0]], [[1.0], [1.0]]], [[0], [0]], 2, [1 / 5, 1.0]),
    ],
)
def test_estimation_coefficients_hand_values(gains, index, B, expected):
    sc = tiny_scenario(gains, index, B)
    assert np.allclose(sc.alpha[0], expected)


def test_single_user_error_variance():
    sc = tiny_scenario([[[1.0]]], [[0]], 1)
    drop = _drop_from_gains([[[1.0]]])
    assert error_variance(drop, sc.alloc, sc.powers, sc.alpha, 0, 0, 0) == pytest.approx(0.5)
    assert sc.err_var[0, 0, 0] == pytest.approx(0.5)


def test_error_variance_flags_inconsistent_alpha():
    sc = tiny_scenario([[[1.0]]], [[0]], 1)
    drop = _drop_from_gains([[[1.0]]])
    with pytest.raises(ValueError):
        error_variance(drop, sc.alloc, sc.powers, sc.alpha * 3, 0, 0, 0)


def test_sum_rule_and_alpha_bounds(small_scenario):
    _, sc = small_scenario
    # exact up to one rounding of the subtraction
    assert np.allclose(sc.est_var + sc.err_var, sc.gains, rtol=1e-15, atol=0)
    assert np.all(sc.err_var >= 0)
    a = sc.alpha[np.arange(19)[:, None, None], sc.index[None]]
    prod = a * sc.B * sc.powers.p[None] * sc.gains
    assert np.all(prod > 0) and np.all(prod <= 1)


def test_noiseless_single_user_estimate_is_exact(rng):
    sc = tiny_scenario([[[1.0]]], [[0]], 1, sigma2=1e-14)
    drop = _drop_from_gains([[[1.0]]])
    h = draw_channels(drop, 6, rng)
    est = observe_and_estimate(h, drop, sc.alloc, sc.powers, rng)
    assert np.allclose(est.h_dir[0, 0], h[0, 0, 0], atol=1e-6)
    assert sc.err_var[0, 0, 0] < 1e-12


def _explicit_pilot_observation(h, index, B, p, noise):
    """Oracle: build Y_j = sum sqrt(p) h v^T + N with a unit-modulus DFT book, then Y v_b^*."""
    V = np.exp(2j * np.pi * np.outer(np.arange(B), np.arange(B)) / B)  # rows v_b, v_b^H v_b = B
    L, _, K, M = h.shape
    Y = np.zeros((L, M, B), dtype=complex)
    for j in range(L):
        for l in range(L):
            for k in range(K):
                Y[j] += np.sqrt(p[l, k]) * np.outer(h[j, l, k], V[index[l, k]])
    Y += noise
    return np.einsum("jmt,bt->jbm", Y, V.conj())


def test_projected_observation_matches_explicit_pilot_matrix(rng):
    gains = rng.uniform(0.5, 2.0, size=(2, 2, 2))
    index = np.array([[0, 1], [1, 0]])
    sc = tiny_scenario(gains, index, 2, p=[[1.0, 2.0], [0.5, 1.5]], sigma2=0.0)
    drop = _drop_from_gains(gains)
    h = draw_channels(drop, 2, rng)
    y = observe_pilots(h, sc.alloc, sc.powers.p, 0.0, rng)
    oracle = _explicit_pilot_observation(h, index, 2, sc.powers.p, 0.0)
    assert np.allclose(y, oracle, atol=1e-12)


def test_projected_noise_has_variance_b_sigma2(rng):
    # explicit path: N with CN(0, sigma2) entries projected on v_b^*
    B, M, n, sigma2 = 2, 2, 20_000, 0.7
    V = np.exp(2j * np.pi * np.outer(np.arange(B), np.arange(B)) / B)
    N = complex_normal(rng, (n, M, B), sigma2)
    proj = np.einsum("nmt,bt->nbm", N, V.conj())
    assert np.mean(np.abs(proj) ** 2) == pytest.approx(B * sigma2, rel=0.03)
    sc = tiny_scenario(np.ones((1, 1, 1)), [[0]], B, sigma2=sigma2)
    h = np.zeros((n, 1, 1, 1, M), dtype=complex)
    y = observe_pilots(h, sc.alloc, sc.powers.p, sigma2, rng)
    assert np.mean(np.abs(y) ** 2) == pytest.approx(B * sigma2, rel=0.03)


def _moment_setup(small_scenario, n=2500, M=4):
    drop, sc = small_scenario
    rng = np.random.default_rng(77)
    h = draw_channels(drop, M, rng, n)
    est = observe_and_estimate(h, drop, sc.alloc, sc.powers, rng)
    return drop, sc, h, est


@pytest.fixture(scope="module")
def moments(small_scenario):
    return _moment_setup(small_scenario)


LINKS = [(0, 0, 0), (0, 5, 1), (3, 3, 2), (7, 12, 0)]


@pytest.mark.parametrize("link", LINKS)
def test_estimate_covariance_and_orthogonality_3sigma(moments, link):
    _, sc, h, est = moments
    j, l, k = link
    hat = est.user_estimates()[:, j, l, k].ravel()
    err = h[:, j, l, k].ravel() - hat
    n = hat.size
    assert n >= 10_000
    v_est, v_err = sc.est_var[j, l, k], sc.err_var[j, l, k]
    assert abs(np.mean(np.abs(hat) ** 2) - v_est) < 3 * v_est / np.sqrt(n)
    assert abs(np.mean(np.abs(err) ** 2) - v_err) < 3 * v_err / np.sqrt(n)
    assert abs(np.mean(hat * err.conj())) < 3 * np.sqrt(v_est * v_err / n) * np.sqrt(2)


def test_direction_covariance_is_alpha_b(moments):
    _, sc, _, est = moments
    j, b = 2, 4
    x = est.h_dir[:, j, b]  # (n, M)
    cov = x.T @ x.conj() / x.shape[0]
    target = sc.alpha[j, b] * sc.B
    n = x.shape[0]
    assert np.allclose(np.diag(cov).real, target, atol=3 * target / np.sqrt(n) * 2)
    off = cov[~np.eye(cov.shape[0], dtype=bool)]
    assert np.max(np.abs(off)) < 4 * target / np.sqrt(n)


def test_same_pilot_estimates_are_collinear(moments):
    _, sc, h, est = moments
    hat = est.user_estimates()
    b = sc.index[0, 0]
    users = sc.alloc.pilot_classes()[b]
    (l1, k1), (l2, k2) = users[0], users[1]
    for j in (0, 9):
        ratio = hat[:, j, l1, k1] / hat[:, j, l2, k2]
        expected = np.sqrt(sc.powers.p[l1, k1]) * sc.gains[j, l1, k1] / (np.sqrt(sc.powers.p[l2, k2]) * sc.gains[j, l2, k2])
        assert np.allclose(ratio, expected, rtol=1e-12)


def test_direct_direction_sampler_matches_law(rng):
    alpha = np.array([[0.2, 0.5]])
    x = sample_directions(alpha, 3, 4, rng, 20_000)
    assert x.shape == (20_000, 1, 2, 4)
    assert np.mean(np.abs(x) ** 2, axis=(0, -1))[0] == pytest.approx(alpha[0] * 3, rel=0.02)


def test_dimension_mismatch(net, rng, small_scenario):
    drop, sc = small_scenario
    h = np.zeros((19, 19, 2, 4), dtype=complex)
    with pytest.raises(ValueError):
        observe_and_estimate(h, drop, sc.alloc, sc.powers, rng)


def test_alpha_from_helper_matches_scenario(small_scenario):
    drop, sc = small_scenario
    assert np.allclose(estimation_coefficients(drop.gains, sc.alloc, sc.powers.p, sc.sigma2), sc.alpha)
