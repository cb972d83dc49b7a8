import csv
import hashlib
import json

import numpy as np
import pytest

from admmattack.cli import (
    CSV_HEADER,
    EXIT_NO_SUCCESS,
    EXIT_OK,
    EXIT_USAGE,
    main,
    summarize_reports,
)
from admmattack.victim import load_weights


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def trained_weights(tmp_path_factory):
    out = tmp_path_factory.mktemp("weights") / "victim.weights"
    code = main([
        "train", "--model", "softmax", "--data", "digits8x8",
        "--epochs", "60", "--lr", "0.5", "--seed", "0", "--out", str(out),
    ])
    assert code == EXIT_OK
    return out


def run_attack(out_dir, weights, *extra):
    args = [
        "attack", "--weights", str(weights), "--out", str(out_dir),
        "--pairs", "3", "--budget", "3000", "--seed", "7", *extra,
    ]
    return main(args)


class TestTrain:
    def test_weights_stable_across_reruns(self, tmp_path):
        paths = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.weights"
            code = main(["train", "--epochs", "5", "--seed", "3", "--out", str(out)])
            assert code == EXIT_OK
            paths.append(out)
        assert sha256(paths[0]) == sha256(paths[1])

    def test_seed_changes_weights(self, tmp_path):
        hashes = []
        for seed in ("3", "4"):
            out = tmp_path / f"s{seed}.weights"
            main(["train", "--epochs", "5", "--seed", seed, "--out", str(out)])
            hashes.append(sha256(out))
        assert hashes[0] != hashes[1]

    def test_loadable_mlp(self, tmp_path):
        out = tmp_path / "mlp.weights"
        code = main(["train", "--model", "mlp", "--hidden", "8",
                     "--epochs", "3", "--out", str(out)])
        assert code == EXIT_OK
        model = load_weights(out)
        assert model.kind == "mlp"
        assert model.hidden == 8

    def test_missing_data_file_is_usage_error(self, tmp_path):
        code = main(["train", "--data", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "w")])
        assert code == EXIT_USAGE


class TestAttack:
    def test_smoke_writes_reports_and_csv(self, tmp_path, trained_weights):
        out = tmp_path / "reports"
        code = run_attack(out, trained_weights)
        assert code == EXIT_OK
        jsons = sorted(out.glob("pair_*.json"))
        assert len(jsons) == 3
        with open(out / "aggregate.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == CSV_HEADER
        assert len(rows) == 4
        doc = json.loads(jsons[0].read_text())
        assert set(doc) == {"pair", "target", "timestamp", "config", "records", "summary"}
        assert doc["summary"]["total_queries"] <= 3000

    def test_same_seed_byte_identical_csv(self, tmp_path, trained_weights):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert run_attack(out, trained_weights) == EXIT_OK
            outs.append(out / "aggregate.csv")
        assert sha256(outs[0]) == sha256(outs[1])

    def test_different_seed_changes_csv(self, tmp_path, trained_weights):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        run_attack(out1, trained_weights)
        main(["attack", "--weights", str(trained_weights), "--out", str(out2),
              "--pairs", "3", "--budget", "3000", "--seed", "8"])
        assert sha256(out1 / "aggregate.csv") != sha256(out2 / "aggregate.csv")

    def test_config_file_and_flag_precedence(self, tmp_path, trained_weights):
        cfg = tmp_path / "attack.cfg"
        cfg.write_text("budget = 1234  # tight\ngamma = 0.5\n")
        out = tmp_path / "reports"
        code = main([
            "attack", "--weights", str(trained_weights), "--out", str(out),
            "--pairs", "1", "--seed", "7", "--config", str(cfg),
            "--gamma", "2.0",
        ])
        assert code in (EXIT_OK, EXIT_NO_SUCCESS)
        doc = json.loads(next(out.glob("pair_*.json")).read_text())
        # flag beats config file, config file beats preset
        assert doc["config"]["gamma"] == 2.0
        assert doc["config"]["max_queries"] == 1234
        assert doc["summary"]["total_queries"] <= 1234

    def test_bad_config_line_is_usage_error(self, tmp_path, trained_weights):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this is not a key value line\n")
        code = main(["attack", "--weights", str(trained_weights),
                     "--out", str(tmp_path / "r"), "--config", str(cfg)])
        assert code == EXIT_USAGE

    def test_missing_weights_is_usage_error(self, tmp_path):
        code = main(["attack", "--weights", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "r")])
        assert code == EXIT_USAGE

    def test_nonpositive_budget_is_usage_error(self, tmp_path, trained_weights):
        code = main(["attack", "--weights", str(trained_weights),
                     "--out", str(tmp_path / "r"), "--budget", "0"])
        assert code == EXIT_USAGE

    def test_decision_mode_smoke(self, tmp_path, trained_weights):
        out = tmp_path / "reports"
        code = run_attack(out, trained_weights, "--feedback", "decision",
                          "--budget", "6000", "--mu", "1.0")
        assert code in (EXIT_OK, EXIT_NO_SUCCESS)
        assert (out / "aggregate.csv").exists()


class TestReport:
    def make_reports(self, tmp_path, summaries):
        for i, s in enumerate(summaries):
            doc = {"pair": i, "target": 1, "timestamp": "t", "config": {},
                   "records": [], "summary": s}
            (tmp_path / f"pair_{i:04d}.json").write_text(json.dumps(doc))

    def summary(self, success, qfs, l2, total):
        return {"success": success, "queries_first_success": qfs,
                "l0": 3, "l1": 1.0, "l2": l2, "linf": 0.5, "total_queries": total}

    def test_asr_and_means(self, tmp_path, capsys):
        self.make_reports(tmp_path, [
            self.summary(True, 100, 2.0, 150),
            self.summary(True, 300, 4.0, 350),
            self.summary(False, None, 9.0, 500),
        ])
        assert main(["report", str(tmp_path)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("#")
        header = lines[1].split("\t")
        values = dict(zip(header, lines[2].split("\t")))
        assert float(values["asr"]) == pytest.approx(2 / 3)
        # failure's l2=9.0 excluded from the mean
        assert float(values["mean_l2"]) == pytest.approx(3.0)
        assert float(values["mean_queries_first_success"]) == pytest.approx(200.0)
        assert float(values["mean_total_queries"]) == pytest.approx(1000 / 3)

    def test_all_failures_prints_dashes(self, tmp_path, capsys):
        self.make_reports(tmp_path, [self.summary(False, None, 9.0, 500)])
        assert main(["report", str(tmp_path)]) == EXIT_OK
        last = capsys.readouterr().out.strip().splitlines()[-1].split("\t")
        assert "-" in last

    def test_empty_dir_is_usage_error(self, tmp_path):
        assert main(["report", str(tmp_path)]) == EXIT_USAGE

    def test_malformed_json_is_usage_error(self, tmp_path):
        (tmp_path / "pair_0000.json").write_text("{not json")
        assert main(["report", str(tmp_path)]) == EXIT_USAGE

    def test_summarize_empty(self):
        out = summarize_reports([])
        assert out["runs"] == 0
        assert out["asr"] == 0.0


class TestUsage:
    def test_no_command_is_usage_error(self):
        assert main([]) == EXIT_USAGE

    def test_unknown_flag_is_usage_error(self):
        assert main(["train", "--frobnicate"]) == EXIT_USAGE

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0
