"""Unconditional denoisers.

Two stand-ins for a pre-trained diffusion model:

* an exact analytic denoiser for Gaussian-mixture data priors (closed-form
  E[x0 | x_t] under the forward process), used as the verification oracle
  and for all desk experiments;
* a small MLP epsilon-predictor trained by plain SGD with hand-derived
  backpropagation, to exercise the learned-model path end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TrainingError
from .rng import RngStream
from .sampler import DenoisingDistribution
from .schedule import NoiseSchedule


# ---------------------------------------------------------------------------
# Analytic Gaussian-mixture denoiser
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianMixturePrior:
    """Mixture of diagonal-covariance Gaussians over clean data x0."""

    weights: np.ndarray   # (K,)
    means: np.ndarray     # (K, N)
    variances: np.ndarray  # (K, N), per-coordinate

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.atleast_2d(np.asarray(self.variances, dtype=float))
        if w.ndim != 1 or m.shape[0] != w.size or v.shape != m.shape:
            raise ConfigError("inconsistent mixture shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("weights must be nonnegative and sum to 1")
        if np.any(v <= 0):
            raise ConfigError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_json(self) -> str:
        return json.dumps({"weights": self.weights.tolist(),
                           "means": self.means.tolist(),
                           "variances": self.variances.tolist()})

    @staticmethod
    def from_json(text: str) -> "GaussianMixturePrior":
        doc = json.loads(text)
        return GaussianMixturePrior(np.array(doc["weights"]),
                                    np.array(doc["means"]),
                                    np.array(doc["variances"]))


def _log_responsibilities(prior: GaussianMixturePrior, x_t: np.ndarray,
                          abar: float) -> np.ndarray:
    """log p(component k | x_t) under x_t ~ N(sqrt(abar) m_k, abar S_k + (1-abar) I)."""
    marg_var = abar * prior.variances + (1.0 - abar)          # (K, N)
    diff = x_t[None, :] - np.sqrt(abar) * prior.means          # (K, N)
    log_like = -0.5 * np.sum(diff * diff / marg_var + np.log(marg_var), axis=1)
    log_r = np.log(prior.weights) + log_like
    log_r -= np.max(log_r)  # guards underflow of every responsibility
    log_r -= np.log(np.sum(np.exp(log_r)))
    return log_r


def gmm_posterior_x0_mean(prior: GaussianMixturePrior, x_t: np.ndarray, t: int,
                          schedule: NoiseSchedule) -> np.ndarray:
    """Exact E[x0 | x_t] under the forward noising of a mixture prior."""
    x_t = np.asarray(x_t, dtype=float)
    if x_t.size != prior.dim:
        raise ConfigError("x_t dim does not match prior")
    abar = schedule.alpha_bar(t)
    resp = np.exp(_log_responsibilities(prior, x_t, abar))      # (K,)
    marg_var = abar * prior.variances + (1.0 - abar)            # (K, N)
    # per-component Gaussian conditional mean of x0 given x_t
    gain = np.sqrt(abar) * prior.variances / marg_var           # (K, N)
    cond = prior.means + gain * (x_t[None, :] - np.sqrt(abar) * prior.means)
    return resp @ cond


def posterior_mean(x_t: np.ndarray, x0_hat: np.ndarray, t: int,
                   schedule: NoiseSchedule) -> np.ndarray:
    """DDPM posterior mean mu_tilde(x_t, x0_hat) for step t."""
    beta = schedule.betas[t - 1]
    alpha = schedule.alphas[t - 1]
    abar = schedule.alpha_bars[t - 1]
    abar_prev = schedule.alpha_bar(t - 1)
    coef0 = np.sqrt(abar_prev) * beta / (1.0 - abar)
    coeft = np.sqrt(alpha) * (1.0 - abar_prev) / (1.0 - abar)
    return coef0 * x0_hat + coeft * x_t


def gmm_denoise(prior: GaussianMixturePrior, x_t: np.ndarray, t: int,
                schedule: NoiseSchedule, variance_mode: str = "posterior") -> DenoisingDistribution:
    """One reverse-step Gaussian from the analytic mixture denoiser."""
    if t < 1:
        raise ConfigError("t must be >= 1")
    x_t = np.asarray(x_t, dtype=float)
    x0_hat = gmm_posterior_x0_mean(prior, x_t, t, schedule)
    var = _step_variance(schedule, t, variance_mode)
    return DenoisingDistribution(mean=posterior_mean(x_t, x0_hat, t, schedule),
                                 variance=var, step=t)


def _step_variance(schedule: NoiseSchedule, t: int, mode: str) -> float:
    if mode == "posterior":
        return float(schedule.posterior_vars[t - 1])
    if mode == "beta":
        return float(schedule.betas[t - 1])
    raise ConfigError(f"unknown variance mode {mode!r}")


class GmmDenoiser:
    """Callable denoiser interface over a mixture prior: (x_t, t) -> distribution."""

    def __init__(self, prior: GaussianMixturePrior, schedule: NoiseSchedule,
                 variance_mode: str = "posterior"):
        self.prior = prior
        self.schedule = schedule
        self.variance_mode = variance_mode

    @property
    def dim(self) -> int:
        return self.prior.dim

    def __call__(self, x_t: np.ndarray, t: int) -> DenoisingDistribution:
        return gmm_denoise(self.prior, x_t, t, self.schedule, self.variance_mode)

    def predict_x0(self, x_t: np.ndarray, t: int) -> np.ndarray:
        return gmm_posterior_x0_mean(self.prior, x_t, t, self.schedule)

    def map_x0(self, x_t: np.ndarray, t: int) -> np.ndarray:
        """Conditional mean of the single most responsible component.

        Unlike predict_x0 this is always a concrete prior mode, never a
        blend; useful when scoring intermediate states with an objective
        that is misleading on superpositions.
        """
        x_t = np.asarray(x_t, dtype=float)
        abar = self.schedule.alpha_bar(t)
        log_r = _log_responsibilities(self.prior, x_t, abar)
        k = int(np.argmax(log_r))
        marg_var = abar * self.prior.variances[k] + (1.0 - abar)
        gain = np.sqrt(abar) * self.prior.variances[k] / marg_var
        return self.prior.means[k] + gain * (x_t - np.sqrt(abar) * self.prior.means[k])


# ---------------------------------------------------------------------------
# MLP epsilon-predictor
# ---------------------------------------------------------------------------

TIME_EMBED_WIDTH = 16
TIME_EMBED_BASE = 1.0e4


def time_embedding(t: int, width: int = TIME_EMBED_WIDTH,
                   base: float = TIME_EMBED_BASE) -> np.ndarray:
    """Sinusoidal embedding: interleaved sin/cos at geometric frequencies."""
    half = width // 2
    freqs = base ** (-np.arange(half) / half)
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


class MlpDenoiser:
    """Fully-connected epsilon-predictor with tanh hidden activations.

    Input is [x_t, time_embedding(t)]; output is the predicted noise.
    Weights are plain numpy arrays; training is hand-rolled SGD.
    """

    def __init__(self, dim: int, hidden: tuple = (64, 64),
                 embed_width: int = TIME_EMBED_WIDTH, embed_base: float = TIME_EMBED_BASE):
        self.dim = dim
        self.embed_width = embed_width
        self.embed_base = embed_base
        self.layer_sizes = [dim + embed_width, *hidden, dim]
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(np.zeros((n_out, n_in)))
            self.biases.append(np.zeros(n_out))
        self.schedule_hash = None

    def init_params(self, rng: RngStream):
        """Glorot-style init from the training stream (counter t=0)."""
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            scale = np.sqrt(2.0 / (w.shape[0] + w.shape[1]))
            draw = rng.normal(0, li, w.size)
            self.weights[li] = scale * draw.reshape(w.shape)
            self.biases[li] = np.zeros(b.size)

    def _input(self, x_t: np.ndarray, t: int) -> np.ndarray:
        return np.concatenate([np.asarray(x_t, dtype=float),
                               time_embedding(t, self.embed_width, self.embed_base)])

    def forward(self, x_t: np.ndarray, t: int, keep: bool = False):
        """Forward pass; with keep=True also returns per-layer activations."""
        a = self._input(x_t, t)
        acts = [a]
        last = len(self.weights) - 1
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = w @ a + b
            a = z if li == last else np.tanh(z)
            acts.append(a)
        return (a, acts) if keep else a

    def backward(self, acts: list, grad_out: np.ndarray):
        """Gradients of a scalar loss wrt all parameters, given d(loss)/d(output)."""
        grads_w, grads_b = [], []
        delta = grad_out
        for li in range(len(self.weights) - 1, -1, -1):
            a_in = acts[li]
            grads_w.append(np.outer(delta, a_in))
            grads_b.append(delta)
            if li > 0:
                # tanh'(z) = 1 - tanh(z)^2, and acts[li] stores tanh(z)
                delta = (self.weights[li].T @ delta) * (1.0 - acts[li] ** 2)
        return grads_w[::-1], grads_b[::-1]

    def to_json(self) -> str:
        return json.dumps({
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "time_embedding": {"width": self.embed_width, "base": self.embed_base},
            "schedule_hash": self.schedule_hash,
        })

    @staticmethod
    def from_json(text: str) -> "MlpDenoiser":
        doc = json.loads(text)
        width = doc["time_embedding"]["width"]
        sizes = doc["layer_sizes"]
        model = MlpDenoiser(dim=sizes[-1], hidden=tuple(sizes[1:-1]),
                            embed_width=width, embed_base=doc["time_embedding"]["base"])
        model.weights = [np.array(w, dtype=float) for w in doc["weights"]]
        model.biases = [np.array(b, dtype=float) for b in doc["biases"]]
        model.schedule_hash = doc.get("schedule_hash")
        return model


def mlp_predict_eps(model: MlpDenoiser, x_t: np.ndarray, t: int) -> np.ndarray:
    """Deterministic forward pass: predicted noise for (x_t, t)."""
    return model.forward(x_t, t)


def mlp_denoise(model: MlpDenoiser, x_t: np.ndarray, t: int,
                schedule: NoiseSchedule, variance_mode: str = "posterior") -> DenoisingDistribution:
    """Reverse-step Gaussian from the epsilon parameterization."""
    x_t = np.asarray(x_t, dtype=float)
    eps_hat = mlp_predict_eps(model, x_t, t)
    beta = schedule.betas[t - 1]
    alpha = schedule.alphas[t - 1]
    abar = schedule.alpha_bars[t - 1]
    mean = (x_t - beta / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)
    return DenoisingDistribution(mean=mean, variance=_step_variance(schedule, t, variance_mode),
                                 step=t)


def mlp_predict_x0(model: MlpDenoiser, x_t: np.ndarray, t: int,
                   schedule: NoiseSchedule) -> np.ndarray:
    """x0_hat implied by the predicted noise: (x_t - sqrt(1-abar) eps_hat) / sqrt(abar)."""
    abar = schedule.alpha_bars[t - 1]
    eps_hat = mlp_predict_eps(model, x_t, t)
    return (np.asarray(x_t, dtype=float) - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)


class MlpDenoiserSampler:
    """Adapter giving MlpDenoiser the callable interface run_denoising expects."""

    def __init__(self, model: MlpDenoiser, schedule: NoiseSchedule,
                 variance_mode: str = "posterior"):
        self.model = model
        self.schedule = schedule
        self.variance_mode = variance_mode

    @property
    def dim(self) -> int:
        return self.model.dim

    def __call__(self, x_t: np.ndarray, t: int) -> DenoisingDistribution:
        return mlp_denoise(self.model, x_t, t, self.schedule, self.variance_mode)

    def predict_x0(self, x_t: np.ndarray, t: int) -> np.ndarray:
        return mlp_predict_x0(self.model, x_t, t, self.schedule)


def mlp_train(dataset, schedule: NoiseSchedule, epochs: int = 20, batch: int = 32,
              learning_rate: float = 1e-3, rng: RngStream = None,
              hidden: tuple = (64, 64)):
    """Train an epsilon-predictor by SGD on random (x0, t, eps) triples.

    Returns (model, per-epoch mean losses). All randomness (init, step and
    noise draws, shuffling) comes from the `training` stream, so a seed
    pins the trained weights exactly.
    """
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    if data.size == 0:
        raise ConfigError("dataset must be nonempty")
    n, dim = data.shape
    if rng is None:
        rng = RngStream(0, "training")
    model = MlpDenoiser(dim=dim, hidden=hidden)
    model.init_params(rng)

    losses = []
    counter = 1  # training-stream step counter; 0 was used for init
    for _ in range(epochs):
        epoch_loss = 0.0
        n_batches = max(1, n // batch)
        for _ in range(n_batches):
            idx = rng.integers(counter, 0, batch, n)
            tv = rng.integers(counter, 1, batch, schedule.T) + 1
            eps = rng.normal(counter, 0, batch * dim).reshape(batch, dim)
            counter += 1

            gw = [np.zeros_like(w) for w in model.weights]
            gb = [np.zeros_like(b) for b in model.biases]
            batch_loss = 0.0
            for j in range(batch):
                t = int(tv[j])
                abar = schedule.alpha_bars[t - 1]
                x_t = np.sqrt(abar) * data[idx[j]] + np.sqrt(1.0 - abar) * eps[j]
                out, acts = model.forward(x_t, t, keep=True)
                resid = out - eps[j]
                batch_loss += float(resid @ resid) / dim
                dgw, dgb = model.backward(acts, 2.0 * resid / dim)
                for li in range(len(gw)):
                    gw[li] += dgw[li]
                    gb[li] += dgb[li]
            batch_loss /= batch
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss {batch_loss} at step {counter}")
            for li in range(len(gw)):
                model.weights[li] -= learning_rate * gw[li] / batch
                model.biases[li] -= learning_rate * gb[li] / batch
            epoch_loss += batch_loss
        losses.append(epoch_loss / n_batches)
    return model, losses


def kernel_prior_from_dataset(dataset, bandwidth: float = 0.05,
                              max_components: int = 64) -> GaussianMixturePrior:
    """Kernel-density mixture prior: one component per (subsampled) data point.

    A cheap analytic surrogate for a model trained on the dataset; the
    posterior-mean denoiser then blends data points by responsibility.
    `bandwidth` is the per-coordinate standard deviation of each kernel.
    """
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    if bandwidth <= 0:
        raise ConfigError("bandwidth must be positive")
    if data.shape[0] > max_components:
        stride = int(np.ceil(data.shape[0] / max_components))
        data = data[::stride][:max_components]
    k = data.shape[0]
    weights = np.full(k, 1.0 / k)
    variances = np.full_like(data, bandwidth ** 2)
    return GaussianMixturePrior(weights=weights, means=data, variances=variances)
