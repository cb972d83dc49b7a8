"""Bayesian-optimization delta-step: GP surrogate + expected improvement.

The step models l(delta) = f(x0 + delta) + (rho/2) ||delta - b||_2^2 with a
Gaussian process and picks the next query point by maximizing EI with
projected gradient ascent. Raw f-values are stored so observations carry
over between ADMM steps: the quadratic term is recomputed analytically
under the new b instead of re-querying the oracle.

EI is oriented for minimization: improvement means l(delta) below the best
observed value l_plus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .core import RngStream, as_vector, feasible_bounds, project_box_linf
from .gp import GpModel


@dataclass(frozen=True)
class BoConfig:
    init_samples: int = 5
    ei_restarts: int = 5
    ei_steps: int = 50
    ei_learning_rate: float = 0.1
    max_bo_iters: int = 10
    max_observations: int = 100  # GP size cap; oldest observations dropped
    fit_steps: int = 20
    fit_learning_rate: float = 0.1

    def __post_init__(self):
        if min(self.init_samples, self.ei_restarts, self.ei_steps, self.max_observations) < 1:
            raise ValueError("BO counts must be positive")
        if self.ei_learning_rate <= 0:
            raise ValueError("ei learning rate must be positive")
        if self.max_bo_iters < 0:
            raise ValueError("max_bo_iters must be nonnegative")


def _norm_pdf(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _norm_cdf(z):
    return 0.5 * erfc(-z / math.sqrt(2.0))


def expected_improvement(mu: float, sigma: float, l_plus: float) -> float:
    """Closed-form EI for minimization; max(l_plus - mu, 0) when sigma = 0."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0.0:
        return max(l_plus - mu, 0.0)
    z = (l_plus - mu) / sigma
    return float((l_plus - mu) * _norm_cdf(z) + sigma * _norm_pdf(z))


def ei_gradient(model: GpModel, x: np.ndarray, l_plus: float):
    """Analytic EI gradient at x; returns (gradient, degenerate flag).

    grad EI = -Phi(z) grad mu + phi(z) grad sigma with z = (l_plus - mu)/sigma.
    Degenerate (sigma = 0) points get a zero gradient and flag True.
    """
    x = as_vector(x)
    mu, var, dmu, dvar = model.posterior_with_grad(x)
    if var <= 0.0:
        return np.zeros_like(x), True
    sigma = math.sqrt(var)
    dsigma = dvar / (2.0 * sigma)
    z = (l_plus - mu) / sigma
    grad = -_norm_cdf(z) * dmu + _norm_pdf(z) * dsigma
    return grad, False


def _sample_feasible(x0: np.ndarray, epsilon: float, rng: RngStream) -> np.ndarray:
    lo, hi = feasible_bounds(x0, epsilon)
    return rng.uniform(lo, hi)


class BoDeltaSolver:
    """Stateful BO delta-step with warm-started observations.

    Stores (delta, raw f-value) pairs across calls; each call re-derives
    the surrogate targets l = f + (rho/2)||delta - b||^2 under the new b.
    """

    def __init__(self, x0: np.ndarray, epsilon: float, cfg: BoConfig):
        self.x0 = as_vector(x0)
        self.epsilon = float(epsilon)
        self.cfg = cfg
        self._points: list[np.ndarray] = []
        self._f_values: list[float] = []
        self._steps_done = 0

    @property
    def best_f(self) -> float:
        return min(self._f_values) if self._f_values else float("nan")

    def _record(self, delta: np.ndarray, f_val: float) -> None:
        self._points.append(np.array(delta))
        self._f_values.append(float(f_val))
        if len(self._points) > self.cfg.max_observations:
            self._points.pop(0)
            self._f_values.pop(0)

    def _targets(self, b: np.ndarray, rho: float) -> np.ndarray:
        pts = np.array(self._points)
        quad = 0.5 * rho * np.sum((pts - b[None, :]) ** 2, axis=1)
        return np.array(self._f_values) + quad

    def _maximize_ei(self, model: GpModel, l_plus: float, rng: RngStream):
        """Projected gradient ascent on EI from several feasible starts."""
        cfg = self.cfg
        best_x, best_ei = None, -1.0
        starts = [np.array(self._points[int(np.argmin(model.targets))])]
        while len(starts) < cfg.ei_restarts:
            starts.append(_sample_feasible(self.x0, self.epsilon, rng))
        for x in starts:
            x = project_box_linf(self.x0, x, self.epsilon)
            for _ in range(cfg.ei_steps):
                g, degenerate = ei_gradient(model, x, l_plus)
                if degenerate:
                    break
                x = project_box_linf(self.x0, x + cfg.ei_learning_rate * g, self.epsilon)
            mu, var = model.posterior(x)
            ei = expected_improvement(mu, math.sqrt(var), l_plus)
            if ei > best_ei:
                best_ei, best_x = ei, x
        return best_x, best_ei

    def step(self, b: np.ndarray, rho: float, f_loss, rng: RngStream) -> np.ndarray:
        """One BO delta-step; returns the best-observed feasible delta.

        f_loss evaluates the attack loss f at a perturbation (and is what
        consumes oracle queries). Every point queried is feasible.
        """
        b = as_vector(b)
        cfg = self.cfg
        for _ in range(cfg.init_samples):
            delta = _sample_feasible(self.x0, self.epsilon, rng)
            self._record(delta, f_loss(delta))

        model = GpModel(dim=self.x0.shape[0])
        y = self._targets(b, rho)
        model.set_data(np.array(self._points), y)

        for _ in range(cfg.max_bo_iters):
            # Refit every step while small, then periodically: big repeated
            # NLML fits dominate runtime once the observation set saturates.
            if model.n <= 200 or self._steps_done % 5 == 0:
                try:
                    model.fit_hypers(cfg.fit_steps, cfg.fit_learning_rate)
                except Exception:
                    pass
            l_plus = float(np.min(model.targets))
            cand, ei = self._maximize_ei(model, l_plus, rng)
            if cand is None or ei <= 0.0:
                cand = _sample_feasible(self.x0, self.epsilon, rng)
            f_val = f_loss(cand)
            self._record(cand, f_val)
            y = self._targets(b, rho)
            model.set_data(np.array(self._points), y)
            self._steps_done += 1

        y = self._targets(b, rho)
        best = int(np.argmin(y))
        return np.array(self._points[best])
