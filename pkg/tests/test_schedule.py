"""Schedule quantities against directly computed references."""

import numpy as np
import pytest

from evodiff.errors import ConfigError
from evodiff.rng import RngStream
from evodiff.schedule import NoiseSchedule, build_schedule, forward_noise


def test_linear_betas_endpoints_and_spacing():
    s = build_schedule(100, 1e-4, 0.02)
    assert s.betas[0] == pytest.approx(1e-4)
    assert s.betas[-1] == pytest.approx(0.02)
    np.testing.assert_allclose(np.diff(s.betas), np.diff(s.betas)[0])


def test_alpha_bar_matches_explicit_product():
    s = build_schedule(50, 1e-3, 0.1)
    prod = 1.0
    for t in range(1, 51):
        prod *= 1.0 - s.betas[t - 1]
        assert s.alpha_bar(t) == pytest.approx(prod, rel=1e-12)
    assert s.alpha_bar(0) == 1.0


def test_alpha_bar_final_value_default_schedule():
    # independent reference: exp(sum log(1 - beta)) over linspace betas
    betas = np.linspace(1e-4, 0.02, 100)
    ref = float(np.exp(np.sum(np.log1p(-betas))))
    s = build_schedule(100)
    assert s.alpha_bar(100) == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(0.36356, abs=1e-4)


def test_posterior_variance_formula():
    s = build_schedule(30, 5e-3, 0.3)
    for t in range(2, 31):
        expected = s.betas[t - 1] * (1 - s.alpha_bar(t - 1)) / (1 - s.alpha_bar(t))
        assert s.posterior_vars[t - 1] == pytest.approx(expected, rel=1e-12)
    assert s.posterior_vars[0] == pytest.approx(s.betas[0])
    # posterior variance never exceeds beta
    assert np.all(s.posterior_vars <= s.betas + 1e-15)


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError):
        build_schedule(0)
    with pytest.raises(ConfigError):
        build_schedule(10, 0.0, 0.02)
    with pytest.raises(ConfigError):
        build_schedule(10, 0.05, 0.02)
    with pytest.raises(ConfigError):
        build_schedule(10, 0.1, 1.0)
    with pytest.raises(ConfigError):
        NoiseSchedule(T=5, betas=np.full(4, 0.1))


def test_alpha_bar_bounds_checked():
    s = build_schedule(10)
    with pytest.raises(ConfigError):
        s.alpha_bar(11)
    with pytest.raises(ConfigError):
        s.alpha_bar(-1)


def test_forward_noise_statistics():
    # marginal of x_t given x0 is N(sqrt(abar) x0, (1 - abar) I)
    s = build_schedule(100, 1e-3, 0.2)
    rng = RngStream(3, "dataset")
    x0 = np.full(4, 2.0)
    t = 60
    draws = np.array([forward_noise(x0, t, s, rng, i=i) for i in range(4000)])
    abar = s.alpha_bar(t)
    assert np.allclose(draws.mean(axis=0), np.sqrt(abar) * 2.0, atol=0.05)
    assert np.allclose(draws.std(axis=0), np.sqrt(1 - abar), atol=0.05)


def test_forward_noise_is_replayable_and_bounded():
    s = build_schedule(10)
    rng = RngStream(0, "dataset")
    a = forward_noise(np.zeros(3), 5, s, rng, i=2)
    b = forward_noise(np.zeros(3), 5, s, rng, i=2)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ConfigError):
        forward_noise(np.zeros(3), 0, s, rng)
    with pytest.raises(ConfigError):
        forward_noise(np.zeros(3), 11, s, rng)


def test_config_dict_round_trip():
    s = build_schedule(12, 2e-3, 0.05)
    doc = s.config_dict()
    s2 = NoiseSchedule(T=doc["T"], betas=np.array(doc["betas"]))
    np.testing.assert_array_equal(s.alpha_bars, s2.alpha_bars)
