"""Population-based, derivative-free mean guidance.

Per denoising step: draw a population from the step Gaussian, evaluate the
black-box fitness on each member (or on its predicted clean state), replace
fitness values with zero-sum rank weights, and shift the mean along the
Monte-Carlo natural-gradient estimate. Because the Fisher matrix of a
Gaussian mean is the inverse covariance, the covariance cancels and the
update needs no model of the objective at all.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, FitnessEvalError
from .rng import RngStream
from .sampler import DenoisingDistribution


@dataclass(frozen=True)
class GuidanceConfig:
    alpha: float                       # gradient scaling factor
    n_samples: int                     # population size per step
    window: tuple                      # (t_high, t_low), inclusive
    shaping: str = "rank_zero_sum"     # or "raw"
    eval_mode: str = "direct"          # or "x0_predicted"
    parallel_eval: bool = False
    max_workers: int = 4

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        t_high, t_low = self.window
        if not (t_high >= t_low >= 1):
            raise ConfigError("window must satisfy t_high >= t_low >= 1")
        if self.shaping not in ("rank_zero_sum", "raw"):
            raise ConfigError(f"unknown shaping {self.shaping!r}")
        if self.shaping == "rank_zero_sum" and self.n_samples < 2:
            raise ConfigError("rank shaping needs at least 2 samples")
        if self.eval_mode not in ("direct", "x0_predicted"):
            raise ConfigError(f"unknown eval_mode {self.eval_mode!r}")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "n_samples": self.n_samples,
                "window": list(self.window), "shaping": self.shaping,
                "eval_mode": self.eval_mode, "parallel_eval": self.parallel_eval}


@dataclass
class Population:
    samples: np.ndarray   # (n, dim)
    fitness: np.ndarray   # (n,)
    weights: np.ndarray   # (n,), after shaping


def sample_population(dist: DenoisingDistribution, n: int, rng: RngStream) -> np.ndarray:
    """n draws from the step Gaussian; sample i comes from counter (t, i).

    Each member is addressed individually, so it is bit-identical whether
    drawn alone or as part of the batch.
    """
    if n < 1:
        raise ConfigError("population size must be >= 1")
    sigma = np.sqrt(dist.variance)
    out = np.empty((n, dist.dim))
    for i in range(n):
        out[i] = dist.mean + sigma * rng.normal(dist.step, i, dist.dim)
    return out


def fitness_shape(fitness: Sequence[float]) -> np.ndarray:
    """Zero-sum rank weights: r_i = (rank_i - (n+1)/2) / n.

    Ascending ranks (worst fitness gets rank 1), ties averaged. Weights sum
    to zero and lie in (-1/2, 1/2], which makes a constant-fitness
    population an exact no-op (every weight is 0.0) and bounds the
    influence of any single member.
    """
    f = np.asarray(fitness, dtype=float)
    if f.size < 2:
        raise ConfigError("need at least 2 fitness values to rank")
    bad = np.flatnonzero(~np.isfinite(f))
    if bad.size:
        raise FitnessEvalError(f"non-finite fitness {f[bad[0]]}", sample_index=int(bad[0]))
    ranks = rankdata(f, method="average")
    return (ranks - (f.size + 1) / 2.0) / f.size


def estimate_natural_gradient(samples: np.ndarray, weights: np.ndarray,
                              mean: np.ndarray) -> np.ndarray:
    """(1/n) * sum_i w_i (x_i - mean): the covariance-free search gradient."""
    samples = np.asarray(samples, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if samples.shape[0] != weights.size:
        raise ConfigError("samples and weights length mismatch")
    return (samples - np.asarray(mean)).T @ weights / weights.size


def _evaluate_population(samples, fitness_fn, cfg, dist, denoiser_ctx):
    """Fitness per sample, in index order; all-or-nothing on failure."""
    if cfg.eval_mode == "x0_predicted":
        if denoiser_ctx is None:
            raise ConfigError("eval_mode=x0_predicted requires denoiser_ctx")
        denoiser, _schedule = denoiser_ctx
        points = [denoiser.predict_x0(s, dist.step) for s in samples]
    else:
        points = list(samples)

    def eval_one(i):
        try:
            val = fitness_fn.evaluate(points[i])
        except FitnessEvalError:
            raise
        except Exception as exc:
            raise FitnessEvalError(str(exc), step=dist.step, sample_index=i) from exc
        return float(val)

    n = len(points)
    if cfg.parallel_eval and fitness_fn.concurrent_safe and n > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
            values = list(pool.map(eval_one, range(n)))
    else:
        values = [eval_one(i) for i in range(n)]
    out = np.array(values, dtype=float)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise FitnessEvalError(f"non-finite fitness {out[bad[0]]}",
                               step=dist.step, sample_index=int(bad[0]))
    return out


def guide_step(dist: DenoisingDistribution, fitness_fn, cfg: GuidanceConfig,
               denoiser_ctx=None, rng: Optional[RngStream] = None) -> DenoisingDistribution:
    """One guided mean update: mean + alpha * (1/n) * sum_i w_i (x_i - mean).

    Variance is left untouched; only the mean evolves. Output is identical
    with parallel evaluation on or off (results gathered in sample order).
    """
    if rng is None:
        raise ConfigError("guide_step requires a population RngStream")
    samples = sample_population(dist, cfg.n_samples, rng)
    fitness = _evaluate_population(samples, fitness_fn, cfg, dist, denoiser_ctx)
    if cfg.shaping == "rank_zero_sum":
        weights = fitness_shape(fitness)
    else:
        weights = fitness
    grad = estimate_natural_gradient(samples, weights, dist.mean)
    return dist.with_mean(dist.mean + cfg.alpha * grad)


def gradient_guidance_baseline(dist: DenoisingDistribution, grad_at_mean: np.ndarray,
                               alpha: float) -> DenoisingDistribution:
    """The derivative-based reference update: mean + alpha * variance * grad."""
    grad = np.asarray(grad_at_mean, dtype=float)
    if grad.size != dist.dim:
        raise ConfigError("gradient dim mismatch")
    return dist.with_mean(dist.mean + alpha * dist.variance * grad)


def empirical_fisher(dist: DenoisingDistribution, n: int, rng: RngStream) -> np.ndarray:
    """Monte-Carlo Fisher matrix of the mean: converges to I / variance.

    Diagnostic only; uses the block counter region of the stream.
    """
    eps = rng.normal_block(dist.step, n, dist.dim)
    score = eps / np.sqrt(dist.variance)  # (x - mu)/var = sigma*eps/var
    return score.T @ score / n
