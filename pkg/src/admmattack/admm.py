"""Outer ADMM loop with linearized zeroth-order or BO delta-steps.

Each iteration performs, in order: the proximal z-step (a = delta - u/rho),
the delta-step (RGE closed form or one BO round), the dual update
u += rho (z - delta), and a one-query success probe on the feasible
perturbation candidate.

The success probe and best-iterate bookkeeping use z, which is feasible by
construction and carries the configured distortion structure (e.g. the
sparsity induced by the l0 z-step); delta itself is the unconstrained
splitting variable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import prox
from .bo import BoConfig, BoDeltaSolver
from .core import (
    ProblemSpec,
    RngStream,
    box_feasible,
    distortion_value,
    lp_norms,
    project_box_linf,
)
from .grad_est import RgeConfig, rge_with_base
from .losses import (
    FeedbackMode,
    LossConfig,
    QueryOracle,
    is_success,
    score_loss,
    smoothed_decision_loss,
)


class DeltaBackend(enum.Enum):
    ZO = "zo"
    BO = "bo"


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 10.0
    alpha: float = 1.0  # step-size schedule eta_k = alpha * sqrt(k)
    max_iters: int = 100000
    max_queries: int = 20000
    success_then_refine: bool = True
    delta_backend: DeltaBackend = DeltaBackend.ZO

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.max_iters < 0 or self.max_queries < 0:
            raise ValueError("budgets must be nonnegative")


@dataclass
class BestIterate:
    perturbation: np.ndarray | None = None
    dist_value: float = math.inf
    success: bool = False
    queries_at_success: int | None = None


@dataclass
class AttackState:
    delta: np.ndarray
    z: np.ndarray
    u: np.ndarray
    k: int = 0
    best: BestIterate = field(default_factory=BestIterate)


@dataclass
class IterationRecord:
    k: int
    loss: float
    dist_value: float
    l0: int
    l1: float
    l2: float
    linf: float
    cumulative_queries: int
    success: bool


@dataclass
class RunReport:
    """Per-run trace plus first-success statistics."""

    config: dict
    records: list[IterationRecord] = field(default_factory=list)
    success: bool = False
    queries_first_success: int | None = None
    final_perturbation: np.ndarray | None = None
    final_norms: tuple = (0, 0.0, 0.0, 0.0)
    total_queries: int = 0


class InfeasibleInitializer(ValueError):
    """Decision-mode initializer is not classified as the target class."""


def delta_zo_step(
    state: AttackState,
    cfg: AdmmConfig,
    rge_cfg: RgeConfig,
    loss,
    rng: RngStream,
) -> np.ndarray:
    """Linearized closed-form delta update; consumes Q+1 loss evaluations.

    With b = z + u/rho and eta_k = alpha*sqrt(k):
        delta' = (eta_k * delta + rho * b - g_hat) / (eta_k + rho)
    Returns (delta', loss(delta)) reusing the RGE base evaluation.
    """
    if state.k < 1:
        raise ValueError("iteration index must start at 1")
    b = state.z + state.u / cfg.rho
    eta = cfg.alpha * math.sqrt(state.k)
    g_hat, base = rge_with_base(loss, state.delta, rge_cfg, rng)
    if not np.all(np.isfinite(g_hat)):
        raise ValueError("non-finite gradient estimate")
    return (eta * state.delta + cfg.rho * b - g_hat) / (eta + cfg.rho), base


def make_loss(
    spec: ProblemSpec,
    loss_cfg: LossConfig,
    oracle: QueryOracle,
    rng: RngStream,
):
    """Scalar loss over perturbations, clamping query points to [0,1]^d."""
    x0 = spec.x0
    if loss_cfg.mode is FeedbackMode.SCORE:
        def loss(delta):
            x = np.clip(x0 + delta, 0.0, 1.0)
            return score_loss(oracle, x, spec, loss_cfg)
    else:
        def loss(delta):
            x = np.clip(x0 + delta, 0.0, 1.0)
            return smoothed_decision_loss(oracle, x, spec, loss_cfg, rng)
    return loss


def admm_iterate(
    state: AttackState,
    spec: ProblemSpec,
    cfg: AdmmConfig,
    oracle: QueryOracle,
    rng: RngStream,
    loss,
    rge_cfg: RgeConfig | None = None,
    bo_solver: BoDeltaSolver | None = None,
):
    """One full ADMM iteration; returns (new state, iteration record)."""
    k = state.k + 1
    a = state.delta - state.u / cfg.rho
    z = prox.zstep(
        prox.ZStepInput(
            a=a,
            x0=spec.x0,
            epsilon=spec.epsilon,
            gamma=spec.gamma,
            rho=cfg.rho,
            distortion=spec.distortion,
            beta=spec.beta,
        )
    )

    stepped = AttackState(delta=state.delta, z=z, u=state.u, k=k, best=state.best)
    if cfg.delta_backend is DeltaBackend.ZO:
        if rge_cfg is None:
            raise ValueError("ZO backend needs an RGE configuration")
        delta, loss_val = delta_zo_step(stepped, cfg, rge_cfg, loss, rng)
    else:
        if bo_solver is None:
            raise ValueError("BO backend needs a BO solver")
        b = z + state.u / cfg.rho
        delta = bo_solver.step(b, cfg.rho, loss, rng)
        loss_val = bo_solver.best_f

    u = state.u + cfg.rho * (z - delta)

    probe = z  # feasible by construction of the z-step
    success = is_success(oracle, np.clip(spec.x0 + probe, 0.0, 1.0), spec)
    best = state.best
    if success:
        dval = distortion_value(probe, spec.distortion, spec.beta)
        if best.queries_at_success is None:
            best = BestIterate(
                perturbation=np.array(probe),
                dist_value=dval,
                success=True,
                queries_at_success=oracle.queries_used,
            )
        elif dval < best.dist_value:
            best = BestIterate(
                perturbation=np.array(probe),
                dist_value=dval,
                success=True,
                queries_at_success=best.queries_at_success,
            )

    new_state = AttackState(delta=delta, z=z, u=u, k=k, best=best)
    norms = lp_norms(best.perturbation) if best.perturbation is not None else lp_norms(probe)
    record = IterationRecord(
        k=k,
        loss=loss_val,
        dist_value=distortion_value(z, spec.distortion, spec.beta),
        l0=norms[0],
        l1=norms[1],
        l2=norms[2],
        linf=norms[3],
        cumulative_queries=oracle.queries_used,
        success=success,
    )
    return new_state, record


def run_attack(
    spec: ProblemSpec,
    cfg: AdmmConfig,
    loss_cfg: LossConfig,
    oracle: QueryOracle,
    rng: RngStream,
    rge_cfg: RgeConfig | None = None,
    bo_cfg: BoConfig | None = None,
    init_delta: np.ndarray | None = None,
) -> RunReport:
    """Drive a full attack run and return its report.

    Score mode starts from delta = z = u = 0. Decision mode requires an
    initializer perturbation reaching the target class (typically
    x_target - x0); it is projected and verified with one label query.
    """
    d = spec.dim
    if loss_cfg.mode is FeedbackMode.DECISION:
        if init_delta is None:
            raise ValueError("decision mode requires an initial perturbation")
        delta0 = project_box_linf(spec.x0, init_delta, spec.epsilon)
        if not is_success(oracle, np.clip(spec.x0 + delta0, 0.0, 1.0), spec):
            raise InfeasibleInitializer(
                "initial perturbed input is not classified as the target class"
            )
        state = AttackState(delta=delta0, z=np.array(delta0), u=np.zeros(d))
        state.best = BestIterate(
            perturbation=np.array(delta0),
            dist_value=distortion_value(delta0, spec.distortion, spec.beta),
            success=True,
            queries_at_success=oracle.queries_used,
        )
    else:
        state = AttackState(delta=np.zeros(d), z=np.zeros(d), u=np.zeros(d))

    if cfg.delta_backend is DeltaBackend.ZO and rge_cfg is None:
        rge_cfg = RgeConfig()
    bo_solver = None
    if cfg.delta_backend is DeltaBackend.BO:
        bo_solver = BoDeltaSolver(spec.x0, spec.epsilon, bo_cfg or BoConfig())

    loss = make_loss(spec, loss_cfg, oracle, rng.child(1))
    iter_rng = rng.child(2)

    report = RunReport(config={
        "rho": cfg.rho,
        "alpha": cfg.alpha,
        "max_iters": cfg.max_iters,
        "max_queries": cfg.max_queries,
        "backend": cfg.delta_backend.value,
        "feedback": loss_cfg.mode.value,
        "distortion": spec.distortion.value,
        "epsilon": spec.epsilon,
        "gamma": spec.gamma,
        "kappa": spec.kappa,
        "beta": spec.beta,
        "target": spec.target,
        "attack_mode": spec.attack_mode.value,
    })

    # Per-iteration query cost is known up front, so the budget is a hard
    # cap: an iteration that could not finish within it never starts.
    per_eval = (
        loss_cfg.smoothing_samples if loss_cfg.mode is FeedbackMode.DECISION else 1
    )
    if cfg.delta_backend is DeltaBackend.ZO:
        iter_cost = (rge_cfg.q + 1) * per_eval + 1
    else:
        n_evals = bo_solver.cfg.init_samples + bo_solver.cfg.max_bo_iters
        iter_cost = n_evals * per_eval + 1

    start_queries = oracle.queries_used
    while state.k < cfg.max_iters:
        if oracle.queries_used - start_queries + iter_cost > cfg.max_queries:
            break
        if state.best.success and not cfg.success_then_refine:
            break
        state, record = admm_iterate(
            state, spec, cfg, oracle, iter_rng, loss,
            rge_cfg=rge_cfg, bo_solver=bo_solver,
        )
        report.records.append(record)

    best = state.best
    report.success = best.success
    report.queries_first_success = (
        best.queries_at_success - start_queries
        if best.queries_at_success is not None
        else None
    )
    report.final_perturbation = best.perturbation
    if best.perturbation is not None:
        report.final_norms = lp_norms(best.perturbation)
    report.total_queries = oracle.queries_used - start_queries
    return report
