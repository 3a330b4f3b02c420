"""Grid pressure-drop solver: a resistor-network stand-in for CFD.

A design vector is thresholded into a fluid/solid mask; cells become nodes
of a conductance network (fluid cells conduct well, solid cells barely),
unit total flow is pushed from the left edge to the right edge, and the
objective is the mean inlet-outlet pressure difference. Deterministic,
cheap, and non-differentiable through the threshold: a genuine black box
from the optimizer's point of view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import LinearOperator, cg, splu

from .errors import ConfigError, SolverError
from .fitness import FitnessFunction, register_fitness

DEFAULT_FLOOR = 1e-6


@dataclass(frozen=True)
class DesignGrid:
    """W x H grid of unconstrained values; fluid where clamp(v, 0, 1) > 0.5."""

    width: int
    height: int
    values: np.ndarray  # flat, length W*H, row-major (rows = height)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.width * self.height:
            raise ConfigError(f"expected {self.width * self.height} values, got {v.size}")
        object.__setattr__(self, "values", v)

    @property
    def mask(self) -> np.ndarray:
        """(H, W) boolean fluid mask."""
        clamped = np.clip(self.values, 0.0, 1.0)
        return (clamped > 0.5).reshape(self.height, self.width)


class _GridStructure:
    """Fixed sparsity/indexing of a W x H grid graph; cached per shape."""

    def __init__(self, width, height):
        idx = np.arange(width * height).reshape(height, width)
        left = idx[:, :-1].ravel()
        right = idx[:, 1:].ravel()
        up = idx[:-1, :].ravel()
        down = idx[1:, :].ravel()
        self.edge_a = np.concatenate([left, up])
        self.edge_b = np.concatenate([right, down])
        n = width * height
        rows = np.concatenate([self.edge_a, self.edge_b, self.edge_a, self.edge_b])
        cols = np.concatenate([self.edge_b, self.edge_a, self.edge_a, self.edge_b])
        self.rows = rows
        self.cols = cols
        self.n = n
        self.inlet = idx[:, 0]
        self.outlet = idx[:, -1]
        self.ground = int(self.outlet[0])


_STRUCTURES: dict = {}


def _structure(width, height) -> _GridStructure:
    key = (width, height)
    if key not in _STRUCTURES:
        _STRUCTURES[key] = _GridStructure(width, height)
    return _STRUCTURES[key]


def grid_flow_delta_p(design: DesignGrid, solid_conductance_floor: float = DEFAULT_FLOOR,
                      flow_rate: float = 1.0, rtol: float = 1e-10,
                      max_iter_factor: int = 40) -> float:
    """Mean inlet pressure minus mean outlet pressure at unit total flow.

    Edge conductance is the harmonic mean of the two adjacent cell
    conductances (1 for fluid, the floor for solid); the grounded linear
    system is solved by preconditioned conjugate gradients to relative
    residual `rtol`.
    """
    if design.width < 2 or design.height < 2:
        raise ConfigError("grid must be at least 2x2")
    st = _structure(design.width, design.height)
    cell = np.where(design.mask.ravel(), 1.0, solid_conductance_floor)
    ga, gb = cell[st.edge_a], cell[st.edge_b]
    gedge = 2.0 * ga * gb / (ga + gb)

    data = np.concatenate([-gedge, -gedge, gedge, gedge])
    # Laplacian plus a unit tie to ground at one outlet cell; injections sum
    # to zero so no current crosses the tie and the pin is exact.
    lap = csc_matrix((data, (st.rows, st.cols)), shape=(st.n, st.n))
    lap = lap + csc_matrix((np.ones(1), ([st.ground], [st.ground])), shape=(st.n, st.n))

    b = np.zeros(st.n)
    b[st.inlet] += flow_rate / st.inlet.size
    b[st.outlet] -= flow_rate / st.outlet.size

    # conductance jumps of ~1e6 make the system severely ill-conditioned;
    # a complete sparse LU preconditioner keeps CG iteration counts tiny
    lu = splu(lap)
    precond = LinearOperator(lap.shape, lu.solve)
    maxiter = max_iter_factor * st.n
    norm_b = np.linalg.norm(b)
    anorm = np.max(np.abs(lap).sum(axis=1))
    p = np.zeros(st.n)
    # restarted CG with an explicit normwise backward-error check:
    # ||b - Ap|| <= rtol (||b|| + ||A|| ||p||). A pure ||b||-relative test is
    # unattainable in double precision once blocked designs push the
    # condition number past ~1e9.
    for _ in range(8):
        r = b - lap @ p
        if np.linalg.norm(r) <= rtol * (norm_b + anorm * np.linalg.norm(p)):
            break
        dp_vec, info = cg(lap, r, rtol=rtol, atol=0.0, maxiter=maxiter, M=precond)
        if info < 0:
            raise SolverError(f"conjugate gradient breakdown (info={info})")
        p = p + dp_vec
    else:
        raise SolverError("conjugate gradient failed to reach residual "
                          f"{rtol} within restart cap")

    dp = float(p[st.inlet].mean() - p[st.outlet].mean())
    return dp


def flow_fitness(design: DesignGrid, **solver_kwargs) -> float:
    """-ln(delta_p)/5: maximization-convention, log-normalized pressure drop."""
    dp = grid_flow_delta_p(design, **solver_kwargs)
    if dp <= 0:
        raise SolverError(f"nonpositive pressure drop {dp}")
    return -np.log(dp) / 5.0


def flow_fitness_function(width: int = 16, height: int = 16, **solver_kwargs) -> FitnessFunction:
    """Fitness over flat design vectors for a fixed grid shape."""
    def _eval(x):
        return flow_fitness(DesignGrid(width, height, x), **solver_kwargs)
    return FitnessFunction(name="flow", dim=width * height, evaluate=_eval,
                           concurrent_safe=True)


register_fitness("flow", flow_fitness_function)
