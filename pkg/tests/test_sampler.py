"""Reverse-process plumbing: step draws, trajectories, paired-run invariance."""

import json

import numpy as np
import pytest

from evodiff.denoisers import GaussianMixturePrior, GmmDenoiser
from evodiff.errors import ConfigError
from evodiff.fitness import linear_fitness
from evodiff.guidance import GuidanceConfig
from evodiff.rng import RngStream
from evodiff.sampler import (
    DenoisingDistribution,
    Trajectory,
    reverse_step,
    run_denoising,
)
from evodiff.schedule import build_schedule


def _toy_denoiser(dim=2):
    prior = GaussianMixturePrior(np.ones(1), np.zeros((1, dim)), np.ones((1, dim)))
    return GmmDenoiser(prior, build_schedule(20)), build_schedule(20)


def test_distribution_validation():
    d = DenoisingDistribution(mean=np.zeros(3), variance=0.5, step=4)
    assert d.dim == 3
    with pytest.raises(ConfigError):
        DenoisingDistribution(mean=np.zeros(3), variance=-1.0, step=4)


def test_with_mean_preserves_variance_and_step():
    d = DenoisingDistribution(mean=np.zeros(3), variance=0.5, step=4)
    d2 = d.with_mean(np.ones(3))
    assert d2.variance == d.variance and d2.step == d.step
    np.testing.assert_array_equal(d2.mean, np.ones(3))


def test_reverse_step_is_mean_plus_scaled_noise():
    rng = RngStream(1, "trajectory")
    d = DenoisingDistribution(mean=np.array([1.0, -2.0]), variance=0.25, step=7)
    x = reverse_step(d, rng)
    np.testing.assert_allclose(x, d.mean + 0.5 * rng.normal(7, 0, 2))


def test_zero_variance_step_is_deterministic():
    d = DenoisingDistribution(mean=np.array([3.0]), variance=0.0, step=2)
    np.testing.assert_array_equal(reverse_step(d, RngStream(0, "trajectory")), [3.0])


def test_trajectory_orders_states_and_exposes_x0():
    den, sched = _toy_denoiser()
    traj = run_denoising(den, sched, RngStream(5, "trajectory"))
    ts = [t for t, _ in traj.states]
    assert ts == list(range(sched.T, -1, -1))
    np.testing.assert_array_equal(traj.x0, traj.states[-1][1])


def test_record_states_false_keeps_endpoints():
    den, sched = _toy_denoiser()
    full = run_denoising(den, sched, RngStream(5, "trajectory"))
    lean = run_denoising(den, sched, RngStream(5, "trajectory"), record_states=False)
    assert [t for t, _ in lean.states] == [sched.T, 0]
    np.testing.assert_array_equal(lean.x0, full.x0)


def test_unconditional_sampling_matches_prior_moments():
    # broad single-Gaussian prior: samples should recover mean and spread
    dim = 2
    prior = GaussianMixturePrior(np.ones(1), np.full((1, dim), 1.5), np.full((1, dim), 4.0))
    sched = build_schedule(100, 1e-3, 0.2)
    den = GmmDenoiser(prior, sched)
    xs = np.array([run_denoising(den, sched, RngStream(s, "trajectory"),
                                 record_states=False).x0 for s in range(400)])
    assert np.allclose(xs.mean(axis=0), 1.5, atol=0.25)
    assert np.allclose(xs.std(axis=0), 2.0, atol=0.25)


def test_paired_runs_share_trajectory_noise():
    # guided and unguided runs with one seed share x_T and all step draws
    den, sched = _toy_denoiser()
    cfg = GuidanceConfig(alpha=0.5, n_samples=4, window=(10, 1))
    fit = linear_fitness(np.ones(2))
    unguided = run_denoising(den, sched, RngStream(9, "trajectory"))
    guided = run_denoising(den, sched, RngStream(9, "trajectory"),
                           guidance_config=cfg, fitness=fit,
                           population_rng=RngStream(1, "population"))
    np.testing.assert_array_equal(unguided.states[0][1], guided.states[0][1])
    # outside the window the chains are identical step by step
    for (tu, xu), (tg, xg) in zip(unguided.states, guided.states):
        assert tu == tg
        if tu > 10:
            np.testing.assert_array_equal(xu, xg)
    assert not np.array_equal(unguided.x0, guided.x0)


def test_guidance_requires_fitness_and_valid_window():
    den, sched = _toy_denoiser()
    cfg = GuidanceConfig(alpha=1.0, n_samples=4, window=(10, 1))
    with pytest.raises(ConfigError):
        run_denoising(den, sched, RngStream(0, "trajectory"), guidance_config=cfg)
    bad = GuidanceConfig(alpha=1.0, n_samples=4, window=(sched.T + 5, 1))
    with pytest.raises(ConfigError):
        run_denoising(den, sched, RngStream(0, "trajectory"), guidance_config=bad,
                      fitness=linear_fitness(np.ones(2)))


def test_trajectory_json_export():
    den, sched = _toy_denoiser()
    traj = run_denoising(den, sched, RngStream(2, "trajectory"))
    traj.objective_curve = [(5, 1.25), (0, 0.5)]
    doc = json.loads(traj.to_json(seed=2, config_hash="abc", include_states=True))
    assert doc["seed"] == 2 and doc["config_hash"] == "abc"
    np.testing.assert_allclose(doc["x0"], traj.x0)
    assert doc["objective_curve"] == [[5, 1.25], [0, 0.5]]
    assert len(doc["states"]) == len(traj.states)
    lean = json.loads(traj.to_json(seed=2, config_hash="abc"))
    assert "states" not in lean
