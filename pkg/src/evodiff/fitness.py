"""Black-box fitness contract, analytic test landscapes, and the registry.

Convention everywhere: higher fitness is better. Physics objectives that
are minimized (pressure drop, profile error) are wrapped with a sign flip
or a monotone transform before entering guidance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class FitnessFunction:
    """Pure scalar objective over design vectors.

    `gradient` is an optional analytic oracle used only by tests and the
    gradient-based baseline; the guidance path never touches it.
    `evaluate_batch` (rows -> values) is an optional fast path; semantics
    must match a per-row evaluate loop exactly.
    """

    name: str
    dim: Optional[int]
    evaluate: Callable[[np.ndarray], float]
    concurrent_safe: bool = True
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def evaluate_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.batch is not None:
            return np.asarray(self.batch(xs), dtype=float)
        return np.array([self.evaluate(x) for x in xs], dtype=float)


def linear_fitness(g: np.ndarray) -> FitnessFunction:
    """f(x) = g . x, with exact gradient g."""
    g = np.asarray(g, dtype=float)
    return FitnessFunction(
        name="linear",
        dim=g.size,
        evaluate=lambda x: float(g @ np.asarray(x, dtype=float)),
        gradient=lambda x: g.copy(),
        batch=lambda xs: xs @ g,
    )


def quadratic_fitness(A: np.ndarray, b: np.ndarray) -> FitnessFunction:
    """f(x) = x^T A x + b . x, with exact gradient 2Ax + b. A must be symmetric."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape != (b.size, b.size):
        raise ConfigError("A must be square and match b")
    if not np.allclose(A, A.T):
        raise ConfigError("A must be symmetric")
    return FitnessFunction(
        name="quadratic",
        dim=b.size,
        evaluate=lambda x: float(np.asarray(x) @ A @ np.asarray(x) + b @ np.asarray(x)),
        gradient=lambda x: 2.0 * A @ np.asarray(x, dtype=float) + b,
        batch=lambda xs: np.einsum("ij,jk,ik->i", xs, A, xs) + xs @ b,
    )


def gmm_target_fitness(target: np.ndarray) -> FitnessFunction:
    """Toy task objective: f(x) = -||x - target||^2 (pulls samples to target)."""
    target = np.asarray(target, dtype=float)
    return FitnessFunction(
        name="gmm_toy",
        dim=target.size,
        evaluate=lambda x: -float(np.sum((np.asarray(x, dtype=float) - target) ** 2)),
        gradient=lambda x: -2.0 * (np.asarray(x, dtype=float) - target),
        batch=lambda xs: -np.sum((xs - target) ** 2, axis=1),
    )


# --- registry -------------------------------------------------------------

_REGISTRY: dict = {}


def register_fitness(name: str, factory: Callable[..., FitnessFunction]):
    _REGISTRY[name] = factory


def get_fitness(name: str, **kwargs) -> FitnessFunction:
    """Build a registered fitness by name; raises ConfigError if unknown."""
    if name not in _REGISTRY:
        raise ConfigError(f"unknown fitness {name!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[name](**kwargs)


def registered_names():
    return sorted(_REGISTRY)


def save_design(path: str, kind: str, shape, values: np.ndarray):
    """Design file: JSON {kind: grid|stack|vector, shape, values}."""
    import json

    with open(path, "w") as fh:
        json.dump({"kind": kind, "shape": list(shape),
                   "values": np.asarray(values, dtype=float).ravel().tolist()}, fh)


def load_design(path: str) -> dict:
    import json

    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"kind", "shape", "values"}
    if unknown:
        raise ConfigError(f"unknown design keys {sorted(unknown)} in {path}")
    doc["values"] = np.asarray(doc["values"], dtype=float)
    return doc


def _gmm_toy_factory(target=(1.5, -1.5)):
    return gmm_target_fitness(np.asarray(target, dtype=float))


register_fitness("gmm_toy", _gmm_toy_factory)
