"""Command-line harness: train victims, run attack batches, report results.

Config precedence is flags > config file (``key = value`` lines) > built-in
preset. A single ``--seed`` deterministically derives every module seed, so
identical invocations produce byte-identical aggregate CSVs (timestamps are
isolated in one JSON field).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .admm import AdmmConfig, DeltaBackend, InfeasibleInitializer, RunReport, run_attack
from .bo import BoConfig
from .core import AttackMode, Distortion, ProblemSpec, RngStream
from .grad_est import RgeConfig
from .losses import BallDist, FeedbackMode, LossConfig, ModelOracle, serve_oracle
from .victim import (
    Dataset,
    MlpModel,
    SoftmaxModel,
    WeightFormatError,
    accuracy,
    digits8x8,
    load_weights,
    save_weights,
    train,
)

EXIT_OK = 0
EXIT_NO_SUCCESS = 1
EXIT_USAGE = 2

PRESETS = {
    "mnist-like": {
        "norm": "l2",
        "eps": 1.0,
        "gamma": 1.0,
        "rho": 10.0,
        "alpha": 1.0,
        "q": 20,
        "nu": 0.5,
        "mu": 1.0,
        "n_smooth": 10,
        "kappa": 0.0,
        "beta": 1.0,
        "budget": 20000,
        "pairs": 50,
    },
    "synthetic-1d": {
        "norm": "l2",
        "eps": 1.0,
        "gamma": 0.1,
        "rho": 1.0,
        "alpha": 1.0,
        "q": 5,
        "nu": 0.5,
        "mu": 0.1,
        "n_smooth": 10,
        "kappa": 0.0,
        "beta": 1.0,
        "budget": 180,
        "pairs": 1,
    },
}

NORMS = {
    "l0": Distortion.L0,
    "l1": Distortion.L1,
    "l2": Distortion.L2,
    "elastic": Distortion.ELASTIC,
}

CSV_HEADER = [
    "pair",
    "target",
    "success",
    "queries_first_success",
    "l0",
    "l1",
    "l2",
    "linf",
    "total_queries",
]


class UsageError(Exception):
    pass


def _parse_config_file(path: str) -> dict:
    """Simple ``key = value`` text config; '#' starts a comment."""
    values = {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    for raw in p.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line (expected key = value): {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _coerce(value, like):
    if isinstance(like, bool):
        return str(value).lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _resolve_settings(args) -> dict:
    """Merge preset < config file < explicit flags into one settings dict."""
    preset_name = args.preset or "mnist-like"
    if preset_name not in PRESETS:
        raise UsageError(f"unknown preset {preset_name!r}; choices: {sorted(PRESETS)}")
    settings = dict(PRESETS[preset_name])
    settings["preset"] = preset_name
    if args.config:
        for key, val in _parse_config_file(args.config).items():
            if key in settings:
                settings[key] = _coerce(val, settings[key])
            else:
                settings[key] = val
    for key in (
        "norm", "eps", "gamma", "rho", "alpha", "q", "nu",
        "mu", "n_smooth", "kappa", "beta", "budget", "pairs",
    ):
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _load_dataset(name: str) -> Dataset:
    if name == "digits8x8":
        return digits8x8()
    path = Path(name)
    if not path.exists():
        raise UsageError(f"data file not found: {name}")
    return Dataset.from_csv(path)


# -- train ---------------------------------------------------------------


def cmd_train(args) -> int:
    data = _load_dataset(args.data)
    rng = RngStream(args.seed)
    k = int(np.max(data.labels)) + 1
    if args.model == "softmax":
        model = SoftmaxModel.init(data.dim, k, rng.child(0))
    else:
        model = MlpModel.init(data.dim, k, args.hidden, rng.child(0))
    model = train(model, data, epochs=args.epochs, lr=args.lr, rng=rng.child(1))
    save_weights(model, args.out)
    print(f"saved {args.model} weights to {args.out} "
          f"(train accuracy {accuracy(model, data):.3f})")
    return EXIT_OK


# -- attack ---------------------------------------------------------------


def _select_pairs(model, data: Dataset, n_pairs: int, untargeted: bool):
    """Deterministic (image index, target) pairs over correctly classified
    inputs; targeted mode cycles each image through the other classes."""
    k = model.num_classes
    pairs = []
    for idx in range(data.n):
        label = int(data.labels[idx])
        if model.predict_label(data.inputs[idx]) != label:
            continue
        if untargeted:
            pairs.append((idx, label))
            if len(pairs) >= n_pairs:
                return pairs
        else:
            for t in range(k):
                if t == label:
                    continue
                pairs.append((idx, t))
                if len(pairs) >= n_pairs:
                    return pairs
    return pairs


def _find_exemplar(model, data: Dataset, target: int):
    """First training example the victim classifies as the target class."""
    for idx in range(data.n):
        if model.predict_label(data.inputs[idx]) == target:
            return data.inputs[idx]
    return None


def _report_to_dict(report: RunReport, pair: int, target: int, timestamp: str) -> dict:
    return {
        "pair": pair,
        "target": target,
        "timestamp": timestamp,
        "config": report.config,
        "records": [asdict(r) for r in report.records],
        "summary": {
            "success": report.success,
            "queries_first_success": report.queries_first_success,
            "l0": report.final_norms[0],
            "l1": report.final_norms[1],
            "l2": report.final_norms[2],
            "linf": report.final_norms[3],
            "total_queries": report.total_queries,
        },
    }


def _csv_row(summary: dict, pair: int, target: int) -> list:
    qfs = summary["queries_first_success"]
    return [
        str(pair),
        str(target),
        "1" if summary["success"] else "0",
        "" if qfs is None else str(qfs),
        str(summary["l0"]),
        repr(float(summary["l1"])),
        repr(float(summary["l2"])),
        repr(float(summary["linf"])),
        str(summary["total_queries"]),
    ]


def cmd_attack(args) -> int:
    settings = _resolve_settings(args)
    if settings["budget"] <= 0:
        raise UsageError("--budget must be positive")
    if settings["norm"] not in NORMS:
        raise UsageError(f"unknown norm {settings['norm']!r}; choices: {sorted(NORMS)}")

    weights_path = Path(args.weights)
    if not weights_path.exists():
        raise UsageError(f"weight file not found: {args.weights}")
    model = load_weights(weights_path)

    data = _load_dataset(args.data)
    init_data = _load_dataset(args.init_from) if args.init_from else data

    feedback = FeedbackMode(args.feedback)
    backend = DeltaBackend(args.backend)
    mode = AttackMode.UNTARGETED if args.untargeted else AttackMode.TARGETED
    pairs = _select_pairs(model, data, int(settings["pairs"]), args.untargeted)
    if not pairs:
        raise UsageError("no correctly classified inputs available for pairing")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    root_rng = RngStream(args.seed)
    timestamp = time.strftime("%Y-%m-%dT%H:%M:%S")

    rows = []
    n_success = 0
    for pair_idx, (img_idx, target) in enumerate(pairs):
        x0 = data.inputs[img_idx]
        spec = ProblemSpec(
            x0=x0,
            target=target,
            num_classes=model.num_classes,
            epsilon=float(settings["eps"]),
            gamma=float(settings["gamma"]),
            kappa=float(settings["kappa"]),
            distortion=NORMS[settings["norm"]],
            beta=float(settings["beta"]),
            attack_mode=mode,
        )
        cfg = AdmmConfig(
            rho=float(settings["rho"]),
            alpha=float(settings["alpha"]),
            max_queries=int(settings["budget"]),
            success_then_refine=not args.no_refine,
            delta_backend=backend,
        )
        loss_cfg = LossConfig(
            mode=feedback,
            smoothing_mu=float(settings["mu"]),
            smoothing_samples=int(settings["n_smooth"]),
            smoothing_dist=BallDist.GAUSSIAN if args.gaussian_smoothing
            else BallDist.UNIFORM_BALL,
        )
        rge_cfg = RgeConfig(q=int(settings["q"]), nu=float(settings["nu"]))
        oracle = ModelOracle(model, scores_available=feedback is FeedbackMode.SCORE)
        init_delta = None
        if feedback is FeedbackMode.DECISION:
            exemplar = _find_exemplar(model, init_data, target)
            if exemplar is None:
                raise UsageError(
                    f"no exemplar of target class {target} found for "
                    "decision-mode initialization (see --init-from)"
                )
            init_delta = exemplar - x0
        try:
            report = run_attack(
                spec, cfg, loss_cfg, oracle, root_rng.child(pair_idx),
                rge_cfg=rge_cfg, bo_cfg=BoConfig(), init_delta=init_delta,
            )
        except InfeasibleInitializer as exc:
            raise UsageError(str(exc))

        doc = _report_to_dict(report, pair_idx, target, timestamp)
        (out_dir / f"pair_{pair_idx:04d}.json").write_text(
            json.dumps(doc, indent=1) + "\n"
        )
        rows.append(_csv_row(doc["summary"], pair_idx, target))
        if report.success:
            n_success += 1

    with open(out_dir / "aggregate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)

    asr = n_success / len(pairs)
    print(f"{len(pairs)} pairs, ASR {asr:.1%}, reports in {out_dir}")
    return EXIT_OK if n_success > 0 else EXIT_NO_SUCCESS


# -- report ----------------------------------------------------------------


def summarize_reports(docs: list[dict]) -> dict:
    """Batch summary; failures are excluded from the distortion means."""
    n = len(docs)
    successes = [d["summary"] for d in docs if d["summary"]["success"]]
    out = {
        "runs": n,
        "asr": len(successes) / n if n else 0.0,
        "mean_queries_first_success": None,
        "mean_l0": None,
        "mean_l1": None,
        "mean_l2": None,
        "mean_linf": None,
        "mean_total_queries": float(np.mean([d["summary"]["total_queries"] for d in docs]))
        if n else 0.0,
    }
    if successes:
        out["mean_queries_first_success"] = float(
            np.mean([s["queries_first_success"] for s in successes])
        )
        for key in ("l0", "l1", "l2", "linf"):
            out[f"mean_{key}"] = float(np.mean([s[key] for s in successes]))
    return out


def cmd_report(args) -> int:
    in_dir = Path(args.dir)
    paths = sorted(in_dir.glob("pair_*.json"))
    if not paths:
        raise UsageError(f"no report files found in {args.dir}")
    docs = []
    for path in paths:
        try:
            docs.append(json.loads(path.read_text()))
        except (json.JSONDecodeError, KeyError) as exc:
            raise UsageError(f"malformed report {path}: {exc}")
    summary = summarize_reports(docs)

    def fmt(v):
        return "-" if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v))

    print("# distortion means computed over successful runs only")
    cols = [
        ("runs", summary["runs"]),
        ("asr", summary["asr"]),
        ("mean_queries_first_success", summary["mean_queries_first_success"]),
        ("mean_l0", summary["mean_l0"]),
        ("mean_l1", summary["mean_l1"]),
        ("mean_l2", summary["mean_l2"]),
        ("mean_linf", summary["mean_linf"]),
        ("mean_total_queries", summary["mean_total_queries"]),
    ]
    print("\t".join(name for name, _ in cols))
    print("\t".join(fmt(val) for _, val in cols))
    return EXIT_OK


# -- serve ------------------------------------------------------------------


def cmd_serve(args) -> int:
    weights_path = Path(args.weights)
    if not weights_path.exists():
        raise UsageError(f"weight file not found: {args.weights}")
    model = load_weights(weights_path)
    serve_oracle(model, mode=args.mode)
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="admmattack",
        description="Gradient-free ADMM black-box adversarial attacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a bundled victim classifier")
    p_train.add_argument("--model", choices=("softmax", "mlp"), default="softmax")
    p_train.add_argument("--data", default="digits8x8",
                         help="'digits8x8' or a CSV dataset path")
    p_train.add_argument("--epochs", type=int, default=100)
    p_train.add_argument("--lr", type=float, default=0.5)
    p_train.add_argument("--hidden", type=int, default=32)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", default="victim.weights")
    p_train.set_defaults(func=cmd_train)

    p_attack = sub.add_parser("attack", help="run an attack batch")
    p_attack.add_argument("--weights", required=True)
    p_attack.add_argument("--data", default="digits8x8")
    p_attack.add_argument("--backend", choices=("zo", "bo"), default="zo")
    p_attack.add_argument("--feedback", choices=("score", "decision"), default="score")
    p_attack.add_argument("--norm", choices=tuple(NORMS))
    p_attack.add_argument("--beta", type=float)
    p_attack.add_argument("--eps", type=float)
    p_attack.add_argument("--gamma", type=float)
    p_attack.add_argument("--rho", type=float)
    p_attack.add_argument("--alpha", type=float)
    p_attack.add_argument("--q", type=int)
    p_attack.add_argument("--nu", type=float)
    p_attack.add_argument("--mu", type=float)
    p_attack.add_argument("--n-smooth", dest="n_smooth", type=int)
    p_attack.add_argument("--kappa", type=float)
    p_attack.add_argument("--budget", type=int)
    p_attack.add_argument("--pairs", type=int)
    p_attack.add_argument("--seed", type=int, default=0)
    p_attack.add_argument("--out", default="reports")
    p_attack.add_argument("--untargeted", action="store_true")
    p_attack.add_argument("--no-refine", action="store_true",
                          help="stop at first success instead of refining")
    p_attack.add_argument("--gaussian-smoothing", action="store_true",
                          help="Gaussian instead of uniform-ball smoothing noise")
    p_attack.add_argument("--init-from",
                          help="dataset supplying decision-mode target exemplars")
    p_attack.add_argument("--config", help="key = value config file")
    p_attack.add_argument("--preset", choices=tuple(PRESETS))
    p_attack.set_defaults(func=cmd_attack)

    p_report = sub.add_parser("report", help="summarize attack reports")
    p_report.add_argument("dir", help="directory of pair_*.json reports")
    p_report.set_defaults(func=cmd_report)

    p_serve = sub.add_parser(
        "serve", help="serve a victim over the line-delimited oracle protocol"
    )
    p_serve.add_argument("--weights", required=True)
    p_serve.add_argument("--mode", choices=("scores", "label"), default="scores")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (UsageError, WeightFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
