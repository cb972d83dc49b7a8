"""Black-box oracle abstraction, attack losses, and exact query accounting.

Oracles expose ``query_label`` (always) and optionally ``query_scores``;
every call increments a monotone query ledger by exactly one. The losses
here never query more than their documented count.
"""

from __future__ import annotations

import enum
import subprocess
from dataclasses import dataclass

import numpy as np

from .core import AttackMode, ProblemSpec, RngStream, as_vector

# Probabilities are clipped here before taking logs so hard one-hot
# victims cannot produce infinite losses.
PROB_FLOOR = 1e-12


class FeedbackMode(enum.Enum):
    SCORE = "score"
    DECISION = "decision"


class BallDist(enum.Enum):
    UNIFORM_BALL = "ball"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class LossConfig:
    mode: FeedbackMode = FeedbackMode.SCORE
    smoothing_mu: float = 1.0
    smoothing_samples: int = 10
    prob_floor: float = PROB_FLOOR
    smoothing_dist: BallDist = BallDist.UNIFORM_BALL

    def __post_init__(self):
        if self.mode is FeedbackMode.DECISION:
            if self.smoothing_mu <= 0:
                raise ValueError("smoothing mu must be positive")
            if self.smoothing_samples < 1:
                raise ValueError("need at least one smoothing sample")


class OracleCapabilityError(RuntimeError):
    """Raised when a score query hits a label-only oracle."""


class QueryOracle:
    """Base query oracle with a ledger. Subclasses implement _scores/_label.

    ``query_scores`` is an optional capability; label queries are always
    available. The ledger counts every call, including success probes.
    """

    def __init__(self):
        self.queries_used = 0

    @property
    def has_scores(self) -> bool:
        return True

    def query_scores(self, x: np.ndarray) -> np.ndarray:
        self.queries_used += 1
        return self._scores(as_vector(x))

    def query_label(self, x: np.ndarray) -> int:
        self.queries_used += 1
        return self._label(as_vector(x))

    def _scores(self, x: np.ndarray) -> np.ndarray:
        raise OracleCapabilityError("oracle does not expose class scores")

    def _label(self, x: np.ndarray) -> int:
        raise NotImplementedError


class ModelOracle(QueryOracle):
    """Wraps an in-process victim model (anything with predict_scores)."""

    def __init__(self, model, scores_available: bool = True):
        super().__init__()
        self.model = model
        self._scores_available = scores_available

    @property
    def has_scores(self) -> bool:
        return self._scores_available

    def _scores(self, x):
        if not self._scores_available:
            raise OracleCapabilityError("oracle configured as label-only")
        return self.model.predict_scores(x)

    def _label(self, x):
        return hard_label(self.model.predict_scores(x))


class FunctionOracle(QueryOracle):
    """Adapts a plain scores function; handy for synthetic victims."""

    def __init__(self, scores_fn):
        super().__init__()
        self.scores_fn = scores_fn

    def _scores(self, x):
        return np.asarray(self.scores_fn(x), dtype=np.float64)

    def _label(self, x):
        return hard_label(np.asarray(self.scores_fn(x), dtype=np.float64))


class ProcessOracle(QueryOracle):
    """Line-delimited oracle over a subprocess's standard streams.

    Request: d comma-separated decimals on one line. Response: K
    comma-separated decimals (scores mode) or one integer (label mode).
    """

    def __init__(self, argv, mode: str = "scores"):
        super().__init__()
        if mode not in ("scores", "label"):
            raise ValueError("mode must be 'scores' or 'label'")
        self.mode = mode
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    @property
    def has_scores(self) -> bool:
        return self.mode == "scores"

    def _roundtrip(self, x: np.ndarray) -> str:
        line = ",".join(repr(float(v)) for v in x)
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        reply = self.proc.stdout.readline()
        if not reply:
            raise RuntimeError("oracle process closed its output stream")
        return reply.strip()

    def _scores(self, x):
        if self.mode != "scores":
            raise OracleCapabilityError("process oracle is running in label mode")
        return np.array([float(t) for t in self._roundtrip(x).split(",")])

    def _label(self, x):
        reply = self._roundtrip(x)
        if self.mode == "scores":
            return hard_label(np.array([float(t) for t in reply.split(",")]))
        return int(reply)

    def close(self):
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=10)


def serve_oracle(model, mode: str = "scores", stdin=None, stdout=None):
    """Serve a victim model over the line-delimited protocol until EOF."""
    import sys

    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        x = np.array([float(t) for t in line.split(",")])
        scores = model.predict_scores(x)
        if mode == "scores":
            stdout.write(",".join(repr(float(s)) for s in scores) + "\n")
        else:
            stdout.write(f"{hard_label(scores)}\n")
        stdout.flush()


def hard_label(scores: np.ndarray) -> int:
    """Argmax with lowest class index winning exact ties."""
    return int(np.argmax(scores))


def score_loss(
    oracle: QueryOracle,
    x: np.ndarray,
    spec: ProblemSpec,
    cfg: LossConfig = LossConfig(),
) -> float:
    """C&W-style log-score loss; exactly one score query.

    Targeted: max(max_{j != t} log P_j - log P_t, -kappa). Untargeted swaps
    roles with t0 = spec.target holding the original label.
    """
    p = np.clip(oracle.query_scores(x), cfg.prob_floor, None)
    logp = np.log(p)
    t = spec.target
    others = np.delete(logp, t)
    if spec.attack_mode is AttackMode.TARGETED:
        val = float(np.max(others) - logp[t])
    else:
        val = float(logp[t] - np.max(others))
    return max(val, -spec.kappa)


def decision_loss(oracle: QueryOracle, x: np.ndarray, spec: ProblemSpec) -> float:
    """Hard-label loss in {-1, +1}; -1 means the attack currently succeeds."""
    label = oracle.query_label(x)
    if spec.attack_mode is AttackMode.TARGETED:
        return -1.0 if label == spec.target else 1.0
    return 1.0 if label == spec.target else -1.0


def _smoothing_direction(cfg: LossConfig, rng: RngStream, d: int) -> np.ndarray:
    if cfg.smoothing_dist is BallDist.UNIFORM_BALL:
        return rng.unit_ball(d)
    return rng.standard_normal(d)


def smoothed_decision_loss(
    oracle: QueryOracle,
    x: np.ndarray,
    spec: ProblemSpec,
    cfg: LossConfig,
    rng: RngStream,
) -> float:
    """Monte Carlo smoothing of the decision loss; exactly N label queries.

    Perturbed query points are clamped to [0,1]^d before querying so real
    oracles never see out-of-range pixels.
    """
    if cfg.smoothing_samples < 1:
        raise ValueError("need at least one smoothing sample")
    if cfg.smoothing_mu <= 0:
        raise ValueError("smoothing mu must be positive")
    x = as_vector(x)
    total = 0.0
    for _ in range(cfg.smoothing_samples):
        u = _smoothing_direction(cfg, rng, x.shape[0])
        xq = np.clip(x + cfg.smoothing_mu * u, 0.0, 1.0)
        total += decision_loss(oracle, xq, spec)
    return total / cfg.smoothing_samples


def is_success(oracle: QueryOracle, x: np.ndarray, spec: ProblemSpec) -> bool:
    """One label query; true iff the attack goal is met at x."""
    label = oracle.query_label(x)
    if spec.attack_mode is AttackMode.TARGETED:
        return label == spec.target
    return label != spec.target
