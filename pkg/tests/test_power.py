import numpy as np
import pytest

from mcmimo.geometry import make_drop
from mcmimo.power import calibrate_pmax, channel_inversion, db_to_linear, make_power_profile


def test_db_conversion():
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(-3.0) == pytest.approx(0.501187, rel=1e-6)


def test_channel_inversion_equalizes_received_power(net, rng):
    drop = make_drop(net, 5, rng)
    p, tau = channel_inversion(drop, 2.0)
    assert np.allclose(p * drop.serving_gains(), 2.0)
    assert np.array_equal(p, tau)
    assert p is not tau


def test_edge_snr_calibration():
    p_max = calibrate_pmax(500.0, 3.7, -3.0)
    assert p_max * 500.0**-3.7 == pytest.approx(db_to_linear(-3.0))


def test_power_profile_defaults(net, rng):
    drop = make_drop(net, 5, rng)
    prof = make_power_profile(drop, 500.0)
    assert prof.sigma2 == 1.0 and prof.rho_ul == 1.0
    assert np.all(prof.rho_dl == prof.p_max)
    assert prof.as_dict()["p_max"] == prof.p_max


def test_noise_power_scales_everything(net, rng):
    drop = make_drop(net, 3, rng)
    a = make_power_profile(drop, 500.0, sigma2=1.0)
    b = make_power_profile(drop, 500.0, sigma2=4.0)
    assert np.allclose(b.p, 4 * a.p)
    assert b.p_max == pytest.approx(4 * a.p_max)
