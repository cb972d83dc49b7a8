"""Shared domain types, box/l-inf feasibility logic and deterministic RNG streams.

All vectors are dense float64 numpy arrays. Inputs live in [0,1]^d,
perturbations are signed deltas of the same length.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

# Reporting threshold for the l0 count; avoids counting float dust.
L0_THRESHOLD = 1e-8


class Distortion(enum.Enum):
    L0 = "l0"
    L1 = "l1"
    L2 = "l2"
    ELASTIC = "elastic"


class AttackMode(enum.Enum):
    TARGETED = "targeted"
    UNTARGETED = "untargeted"


def as_vector(v) -> np.ndarray:
    """Coerce to a contiguous 1-D float64 array."""
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def _check_same_length(x0: np.ndarray, v: np.ndarray) -> None:
    if x0.shape != v.shape:
        raise ValueError(
            f"dimension mismatch: input has length {x0.shape[0]}, "
            f"perturbation has length {v.shape[0]}"
        )


@dataclass(frozen=True)
class ProblemSpec:
    """Frozen attack instance.

    In untargeted mode ``target`` holds the original label t0; success then
    means the predicted label differs from t0.
    """

    x0: np.ndarray
    target: int
    num_classes: int
    epsilon: float
    gamma: float = 1.0
    kappa: float = 0.0
    distortion: Distortion = Distortion.L2
    beta: float = 0.0
    attack_mode: AttackMode = AttackMode.TARGETED

    def __post_init__(self):
        object.__setattr__(self, "x0", as_vector(self.x0))
        if np.any(self.x0 < 0.0) or np.any(self.x0 > 1.0):
            raise ValueError("x0 must lie in [0,1]^d")
        if not (0 <= self.target < self.num_classes):
            raise ValueError("target class out of range")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.distortion is Distortion.ELASTIC and self.beta < 0:
            raise ValueError("elastic-net beta must be nonnegative")

    @property
    def dim(self) -> int:
        return self.x0.shape[0]


class RngStream:
    """Deterministic random stream with reproducible child derivation.

    Identical seed plus identical call sequence gives bitwise identical
    outputs. A stream is single-owner; concurrent use goes through
    independent children obtained via :meth:`child`.
    """

    def __init__(self, seed: int, _spawn_key: tuple = ()):
        self.seed = int(seed)
        self._spawn_key = tuple(int(k) for k in _spawn_key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._spawn_key)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: int) -> "RngStream":
        """Independent stream derived from this one's seed and the keys."""
        return RngStream(self.seed, self._spawn_key + tuple(keys))

    # thin passthroughs, kept so call sites never touch .gen directly
    def standard_normal(self, size=None) -> np.ndarray:
        return self.gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def unit_sphere(self, d: int) -> np.ndarray:
        """Uniform draw on the unit sphere (normalized Gaussian)."""
        g = self.gen.standard_normal(d)
        n = np.linalg.norm(g)
        while n == 0.0:  # pragma: no cover - probability zero
            g = self.gen.standard_normal(d)
            n = np.linalg.norm(g)
        return g / n

    def unit_ball(self, d: int) -> np.ndarray:
        """Uniform draw inside the unit Euclidean ball."""
        direction = self.unit_sphere(d)
        radius = self.gen.uniform() ** (1.0 / d)
        return direction * radius


def feasible_bounds(x0: np.ndarray, epsilon: float):
    """Per-coordinate feasible interval [lo, hi] for a perturbation."""
    lo = np.maximum(-x0, -epsilon)
    hi = np.minimum(1.0 - x0, epsilon)
    return lo, hi


def box_feasible(x0: np.ndarray, v: np.ndarray, epsilon: float) -> bool:
    """True iff x0 + v stays in [0,1]^d and ||v||_inf <= epsilon."""
    x0 = as_vector(x0)
    v = as_vector(v)
    _check_same_length(x0, v)
    s = x0 + v
    return bool(
        np.all(s >= 0.0)
        and np.all(s <= 1.0)
        and np.all(np.abs(v) <= epsilon)
    )


def project_box_linf(x0: np.ndarray, v: np.ndarray, epsilon: float) -> np.ndarray:
    """Euclidean projection of v onto {w : x0 + w in [0,1]^d, ||w||_inf <= eps}.

    Coordinatewise clamp; idempotent, and the output always passes
    :func:`box_feasible` when x0 is itself in the box.
    """
    x0 = as_vector(x0)
    v = as_vector(v)
    _check_same_length(x0, v)
    lo, hi = feasible_bounds(x0, epsilon)
    return np.clip(v, lo, hi)


def lp_norms(v: np.ndarray):
    """(l0, l1, l2, linf) of a perturbation; l0 uses the reporting threshold."""
    v = as_vector(v)
    l0 = int(np.count_nonzero(np.abs(v) > L0_THRESHOLD))
    l1 = float(np.sum(np.abs(v)))
    l2 = float(np.sqrt(np.sum(v * v)))
    linf = float(np.max(np.abs(v))) if v.size else 0.0
    return l0, l1, l2, linf


def distortion_value(v: np.ndarray, distortion: Distortion, beta: float = 0.0) -> float:
    """Value of the configured distortion function D at v."""
    v = as_vector(v)
    if distortion is Distortion.L0:
        return float(np.count_nonzero(np.abs(v) > L0_THRESHOLD))
    if distortion is Distortion.L1:
        return float(np.sum(np.abs(v)))
    if distortion is Distortion.L2:
        return float(np.sum(v * v))
    if distortion is Distortion.ELASTIC:
        return float(np.sum(np.abs(v)) + 0.5 * beta * np.sum(v * v))
    raise ValueError(f"unknown distortion {distortion}")
