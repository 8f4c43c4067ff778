"""Geometry of flock configurations in (R^3)^k.

An agent vector is stored as a ``(k, 3)`` float array: row ``i`` is the
position (or velocity, or noise) of agent ``i``.  Every norm is the
Euclidean norm of the flattened ``3k`` vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError

DIM = 3


def as_agent_vector(w, name: str = "w", min_agents: int = 1) -> np.ndarray:
    """Validate and convert ``w`` to a finite ``(k, 3)`` float64 array."""
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != DIM:
        raise InvalidInputError(f"{name} must have shape (k, 3), got {arr.shape}")
    if arr.shape[0] < min_agents:
        raise InvalidInputError(f"{name} needs at least {min_agents} agent(s), got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def mean(w) -> np.ndarray:
    """Componentwise mean of the agents, a vector in R^3."""
    return as_agent_vector(w).mean(axis=0)


def project_diag(w) -> np.ndarray:
    """Component of ``w`` along the diagonal ``{(u, ..., u)}``."""
    w = as_agent_vector(w)
    return np.broadcast_to(w.mean(axis=0), w.shape).copy()


def project_perp(w) -> np.ndarray:
    """Component of ``w`` orthogonal to the diagonal: ``w_i - mean(w)``."""
    w = as_agent_vector(w)
    return w - w.mean(axis=0)


def dissimilarity(w) -> float:
    """Norm of the orthogonal projection ``||w_perp||``."""
    return float(np.linalg.norm(project_perp(w)))


def diameter(x) -> float:
    """Largest pairwise distance ``max_{i != j} ||x_i - x_j||``."""
    x = as_agent_vector(x, "x", min_agents=2)
    diff = x[:, None, :] - x[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=-1)).max())


def is_nearly_aligned(v, nu: float) -> bool:
    """True when the velocity dissimilarity is at most ``nu`` (inclusive)."""
    if not nu > 0:
        raise InvalidInputError(f"nu must be positive, got {nu}")
    return dissimilarity(v) <= nu


@dataclass(frozen=True)
class FlockState:
    """Positions and velocities of ``k`` agents at one instant."""

    time: float
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        x = as_agent_vector(self.positions, "positions", min_agents=2).copy()
        v = as_agent_vector(self.velocities, "velocities", min_agents=2).copy()
        if x.shape != v.shape:
            raise InvalidInputError(
                f"positions {x.shape} and velocities {v.shape} differ in size"
            )
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "time", float(self.time))

    @property
    def k(self) -> int:
        return self.positions.shape[0]

    @property
    def mean_velocity(self) -> np.ndarray:
        return self.velocities.mean(axis=0)

    @property
    def x_dissimilarity(self) -> float:
        return dissimilarity(self.positions)

    @property
    def v_dissimilarity(self) -> float:
        return dissimilarity(self.velocities)
