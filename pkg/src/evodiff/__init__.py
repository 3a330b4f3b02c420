"""Evolvable guided diffusion: population-based, derivative-free guidance
of a DDPM reverse process, with desk-scale black-box physics objectives."""

from .errors import ConfigError, FitnessEvalError, SolverError, TrainingError
from .rng import RngStream
from .schedule import NoiseSchedule, build_schedule, forward_noise
from .sampler import DenoisingDistribution, Trajectory, reverse_step, run_denoising
from .denoisers import (
    GaussianMixturePrior,
    GmmDenoiser,
    MlpDenoiser,
    gmm_denoise,
    gmm_posterior_x0_mean,
    mlp_denoise,
    mlp_predict_eps,
    mlp_train,
)
from .guidance import (
    GuidanceConfig,
    Population,
    empirical_fisher,
    estimate_natural_gradient,
    fitness_shape,
    gradient_guidance_baseline,
    guide_step,
    sample_population,
)
from .fitness import FitnessFunction, linear_fitness, quadratic_fitness, get_fitness, register_fitness
from .flow import DesignGrid, grid_flow_delta_p, flow_fitness
from .metasurface import (
    LayeredStack,
    TransmissionTarget,
    parabola_target,
    tmm_transmission,
    transmission_mae_fitness,
)

__version__ = "0.1.0"
