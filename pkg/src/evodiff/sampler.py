"""Reverse-process sampling: per-step Gaussians and the outer denoising loop."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .rng import RngStream
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class DenoisingDistribution:
    """Per-step Gaussian N(mean, variance * I) over x_{t-1} given x_t."""

    mean: np.ndarray
    variance: float
    step: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if self.variance < 0:
            raise ConfigError("variance must be >= 0")
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.mean.size

    def with_mean(self, mean: np.ndarray) -> "DenoisingDistribution":
        return DenoisingDistribution(mean=mean, variance=self.variance, step=self.step)


@dataclass
class Trajectory:
    """States of one denoising run, ordered from t=T down to t=0."""

    states: list  # list of (t, np.ndarray)
    objective_curve: Optional[list] = None  # list of (t, float), filled post hoc

    @property
    def x0(self) -> np.ndarray:
        t, x = self.states[-1]
        assert t == 0
        return x

    def to_json(self, seed: int, config_hash: str, include_states: bool = False) -> str:
        doc = {
            "seed": seed,
            "config_hash": config_hash,
            "x0": self.x0.tolist(),
            "objective_curve": [[t, v] for t, v in (self.objective_curve or [])],
        }
        if include_states:
            doc["states"] = [[t, x.tolist()] for t, x in self.states]
        return json.dumps(doc)


def reverse_step(dist: DenoisingDistribution, rng: RngStream) -> np.ndarray:
    """Draw x_{t-1} = mean + sqrt(variance) * eps at trajectory counter (t, 0).

    Counter-addressed noise makes the draw identical across paired guided
    and unguided runs at the same step, whatever happened in between.
    """
    eps = rng.normal(dist.step, 0, dist.dim)
    return dist.mean + np.sqrt(dist.variance) * eps


def run_denoising(
    denoiser: Callable[[np.ndarray, int], DenoisingDistribution],
    schedule: NoiseSchedule,
    rng: RngStream,
    guidance_config=None,
    fitness=None,
    population_rng: Optional[RngStream] = None,
    record_states: bool = True,
) -> Trajectory:
    """Run the full reverse chain from x_T ~ N(0, I) down to x_0.

    When `guidance_config` is given, steps inside its window get their mean
    replaced by the population-estimated update before sampling; the
    trajectory stream itself is addressed per step, so a guided and an
    unguided run with the same seed share x_T and all step noise.
    """
    if guidance_config is not None:
        if fitness is None:
            raise ConfigError("guidance requires a fitness function")
        t_high, t_low = guidance_config.window
        if not (1 <= t_low <= t_high <= schedule.T):
            raise ConfigError(f"guidance window {guidance_config.window} outside [1, {schedule.T}]")
        if population_rng is None:
            population_rng = RngStream(rng.seed, "population")

    from .guidance import guide_step  # local import: guidance depends on this module

    dim = getattr(denoiser, "dim")
    x = rng.normal(schedule.T + 1, 0, dim)
    states = [(schedule.T, x.copy())]
    for t in range(schedule.T, 0, -1):
        dist = denoiser(x, t)
        if guidance_config is not None and guidance_config.window[1] <= t <= guidance_config.window[0]:
            # guide_step raises FitnessEvalError tagged with step and sample index
            dist = guide_step(dist, fitness, guidance_config,
                              denoiser_ctx=(denoiser, schedule), rng=population_rng)
        x = reverse_step(dist, rng)
        if record_states or t == 1:
            states.append((t - 1, x.copy()))
    return Trajectory(states=states)
