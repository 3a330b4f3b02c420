"""Layered-dielectric transmission solver: a 1-D stand-in for full-wave EM.

A design vector is mapped to per-layer permittivities of a lossless stack
between vacuum half-spaces; the characteristic-matrix method gives the
complex transmission at each frequency, and the objective is the mean
absolute error between |t| and a target profile. Like the flow solver,
optionally quantizing the permittivities makes the map non-differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .fitness import FitnessFunction, register_fitness

EPS_MIN = 1.0
EPS_MAX = 4.0


@dataclass(frozen=True)
class LayeredStack:
    """L layers of unit thickness; values map affinely into [EPS_MIN, EPS_MAX].

    With `quantize` set, clamped values snap to that many discrete levels
    before the affine map.
    """

    layer_values: np.ndarray
    quantize: Optional[int] = None

    def __post_init__(self):
        v = np.asarray(self.layer_values, dtype=float).ravel()
        if v.size < 1:
            raise ConfigError("stack needs at least one layer")
        if self.quantize is not None and self.quantize < 2:
            raise ConfigError("quantize must be >= 2 levels")
        object.__setattr__(self, "layer_values", v)

    @property
    def n_layers(self) -> int:
        return self.layer_values.size

    @property
    def permittivities(self) -> np.ndarray:
        v = np.clip(self.layer_values, 0.0, 1.0)
        if self.quantize is not None:
            v = np.round(v * (self.quantize - 1)) / (self.quantize - 1)
        return EPS_MIN + (EPS_MAX - EPS_MIN) * v


@dataclass(frozen=True)
class TransmissionTarget:
    """Target |t| magnitudes at n_freq normalized frequency points."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 2:
            raise ConfigError("target needs at least 2 points")
        if np.any((v < 0) | (v > 1)):
            raise ConfigError("target magnitudes must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def n_freq(self) -> int:
        return self.values.size


def parabola_target(n: int) -> TransmissionTarget:
    """Band-pass-style profile 1 - 2 (x - 1/2)^2 at x_j = j/(n-1)."""
    if n < 2:
        raise ConfigError("need at least 2 frequency points")
    x = np.arange(n) / (n - 1)
    return TransmissionTarget(values=1.0 - 2.0 * (x - 0.5) ** 2)


def default_freqs(n: int, f_min: float = 0.05, f_max: float = 0.5) -> np.ndarray:
    """Normalized frequency grid (unit layer thickness, c = 1)."""
    return np.linspace(f_min, f_max, n)


def tmm_transmission(stack: LayeredStack, freqs: np.ndarray) -> np.ndarray:
    """Complex transmission t(f) of the stack, one value per frequency.

    Characteristic 2x2 matrices at normal incidence, vacuum on both sides,
    c = thickness = 1. The returned phase is referenced to vacuum
    propagation over the same total length, so an all-vacuum stack gives
    exactly 1 + 0j.
    """
    freqs = np.asarray(freqs, dtype=float).ravel()
    if np.any(freqs <= 0):
        raise ConfigError("frequencies must be positive")
    n_idx = np.sqrt(stack.permittivities)  # refractive index per layer
    nf = freqs.size

    m00 = np.ones(nf, dtype=complex)
    m01 = np.zeros(nf, dtype=complex)
    m10 = np.zeros(nf, dtype=complex)
    m11 = np.ones(nf, dtype=complex)
    for n_l in n_idx:
        delta = 2.0 * np.pi * freqs * n_l
        c, s = np.cos(delta), np.sin(delta)
        l00, l01 = c, 1j * s / n_l
        l10, l11 = 1j * n_l * s, c
        m00, m01, m10, m11 = (
            m00 * l00 + m01 * l10,
            m00 * l01 + m01 * l11,
            m10 * l00 + m11 * l10,
            m10 * l01 + m11 * l11,
        )
    t = 2.0 / (m00 + m01 + m10 + m11)
    # remove the vacuum phase accumulated over n_layers unit lengths
    return t * np.exp(1j * 2.0 * np.pi * freqs * stack.n_layers)


def tmm_reflection(stack: LayeredStack, freqs: np.ndarray) -> np.ndarray:
    """Complex reflection r(f); |r|^2 + |t|^2 = 1 for these lossless stacks."""
    freqs = np.asarray(freqs, dtype=float).ravel()
    n_idx = np.sqrt(stack.permittivities)
    nf = freqs.size
    m00 = np.ones(nf, dtype=complex)
    m01 = np.zeros(nf, dtype=complex)
    m10 = np.zeros(nf, dtype=complex)
    m11 = np.ones(nf, dtype=complex)
    for n_l in n_idx:
        delta = 2.0 * np.pi * freqs * n_l
        c, s = np.cos(delta), np.sin(delta)
        l00, l01 = c, 1j * s / n_l
        l10, l11 = 1j * n_l * s, c
        m00, m01, m10, m11 = (
            m00 * l00 + m01 * l10,
            m00 * l01 + m01 * l11,
            m10 * l00 + m11 * l10,
            m10 * l01 + m11 * l11,
        )
    return (m00 + m01 - m10 - m11) / (m00 + m01 + m10 + m11)


def transmission_mae_fitness(stack: LayeredStack, target: TransmissionTarget,
                             freqs: np.ndarray) -> float:
    """-MAE between |t(f_j)| and the target magnitudes (maximization sign)."""
    freqs = np.asarray(freqs, dtype=float).ravel()
    if freqs.size != target.n_freq:
        raise ConfigError("frequency grid and target length mismatch")
    t = tmm_transmission(stack, freqs)
    return -float(np.mean(np.abs(np.abs(t) - target.values)))


def metasurface_fitness_function(n_layers: int = 32, n_freq: int = 64,
                                 quantize: Optional[int] = None) -> FitnessFunction:
    """Fitness over flat layer-value vectors against the parabola target."""
    target = parabola_target(n_freq)
    freqs = default_freqs(n_freq)

    def _eval(x):
        return transmission_mae_fitness(LayeredStack(x, quantize=quantize), target, freqs)

    return FitnessFunction(name="metasurface", dim=n_layers, evaluate=_eval,
                           concurrent_safe=True)


register_fitness("metasurface", metasurface_fitness_function)
