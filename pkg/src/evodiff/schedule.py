"""Noise schedules and the forward (noising) process."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .rng import RngStream


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed per-step quantities of a T-step diffusion.

    Arrays are 0-indexed: entry [t-1] belongs to step t in 1..T.
    alpha_bar(0) is defined as 1.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)
    posterior_vars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        if betas.shape != (self.T,):
            raise ConfigError(f"betas must have shape ({self.T},), got {betas.shape}")
        if not np.all((betas > 0) & (betas < 1)):
            raise ConfigError("betas must lie in (0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        # beta_tilde_t = beta_t (1 - abar_{t-1}) / (1 - abar_t), beta_tilde_1 = beta_1
        prev = np.concatenate(([1.0], alpha_bars[:-1]))
        post = betas * (1.0 - prev) / (1.0 - alpha_bars)
        post[0] = betas[0]
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        object.__setattr__(self, "posterior_vars", post)

    def alpha_bar(self, t: int) -> float:
        """alpha_bar at step t, with alpha_bar(0) == 1."""
        if not 0 <= t <= self.T:
            raise ConfigError(f"step {t} outside [0, {self.T}]")
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def config_dict(self) -> dict:
        return {"T": self.T, "betas": self.betas.tolist()}


def build_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02,
                   kind: str = "linear") -> NoiseSchedule:
    """Linear beta schedule from beta_min to beta_max over T steps."""
    if kind != "linear":
        raise ConfigError(f"unknown schedule kind {kind!r}")
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ConfigError("require 0 < beta_min <= beta_max < 1")
    betas = np.linspace(beta_min, beta_max, T)
    return NoiseSchedule(T=T, betas=betas)


def forward_noise(x0: np.ndarray, t: int, schedule: NoiseSchedule,
                  rng: RngStream, i: int = 0) -> np.ndarray:
    """Sample x_t given x0: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    x0 = np.asarray(x0, dtype=float)
    if not 1 <= t <= schedule.T:
        raise ConfigError(f"step {t} outside [1, {schedule.T}]")
    abar = schedule.alpha_bar(t)
    eps = rng.normal(t, i, x0.size).reshape(x0.shape)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
