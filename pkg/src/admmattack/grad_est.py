"""Random gradient estimation over a scalar loss callable.

Forward differences over Q random directions sharing one base evaluation,
so each call costs exactly Q + 1 loss evaluations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import RngStream, as_vector


class DirectionDist(enum.Enum):
    UNIT_SPHERE = "sphere"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class RgeConfig:
    q: int = 20
    nu: float = 0.5
    direction_dist: DirectionDist = DirectionDist.UNIT_SPHERE

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("need at least one random direction")
        if self.nu <= 0:
            raise ValueError("smoothing radius nu must be positive")


def rge(loss, delta: np.ndarray, cfg: RgeConfig, rng: RngStream) -> np.ndarray:
    """(d/(nu*Q)) * sum_j [loss(delta + nu*u_j) - loss(delta)] * u_j.

    Directions u_j are i.i.d. uniform on the unit sphere (or standard
    Gaussian). The base value loss(delta) is computed once and shared.
    """
    g, _ = rge_with_base(loss, delta, cfg, rng)
    return g


def rge_with_base(loss, delta: np.ndarray, cfg: RgeConfig, rng: RngStream):
    """Like :func:`rge` but also returns the shared base loss value."""
    delta = as_vector(delta)
    d = delta.shape[0]
    base = float(loss(delta))
    if not math.isfinite(base):
        raise ValueError("non-finite loss value at the base point")
    acc = np.zeros(d)
    for _ in range(cfg.q):
        if cfg.direction_dist is DirectionDist.UNIT_SPHERE:
            u = rng.unit_sphere(d)
        else:
            u = rng.standard_normal(d)
        fv = float(loss(delta + cfg.nu * u))
        if not math.isfinite(fv):
            raise ValueError("non-finite loss value at a perturbed point")
        acc += (fv - base) * u
    return (d / (cfg.nu * cfg.q)) * acc, base
