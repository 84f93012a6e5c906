"""Command-line contract: formats, exit codes, manifests, replay."""

import json
import subprocess
import sys

import numpy as np
import pytest

CLI = [sys.executable, "-m", "detchoice.cli"]


def run_cli(*args, env=None):
    return subprocess.run(
        CLI + [str(a) for a in args], capture_output=True, text=True, env=env
    )


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    r = run_cli("simulate", "--dgp", "spatial", "--radius", "0.5", "--n-obs", "10",
                "--seed", "7", "--out", out)
    assert r.returncode == 0, r.stderr
    return out


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    r = run_cli("fit", "--data", sim_dir / "dataset.jsonl", "--method", "map",
                "--seed", "3", "--out", out)
    assert r.returncode == 0, r.stderr
    return out


class TestSimulate:
    def test_line_count_and_determinism(self, sim_dir, tmp_path):
        text = (sim_dir / "dataset.jsonl").read_text()
        assert len(text.strip().split("\n")) == 11  # header + 10 observations
        r = run_cli("simulate", "--dgp", "spatial", "--radius", "0.5", "--n-obs", "10",
                    "--seed", "7", "--out", tmp_path / "again")
        assert r.returncode == 0
        assert (tmp_path / "again" / "dataset.jsonl").read_bytes() == (sim_dir / "dataset.jsonl").read_bytes()

    def test_zero_observations_yields_header_only(self, tmp_path):
        r = run_cli("simulate", "--dgp", "spatial", "--n-obs", "0", "--out", tmp_path / "empty")
        assert r.returncode == 0
        lines = (tmp_path / "empty" / "dataset.jsonl").read_text().strip().split("\n")
        assert len(lines) == 1
        assert "feature_names" in json.loads(lines[0])
        assert (tmp_path / "empty" / "manifest.json").exists()

    def test_lora_delays_bounded(self, tmp_path):
        r = run_cli("simulate", "--dgp", "lora", "--k", "9", "--dmax", "600",
                    "--n-obs", "5", "--seed", "1", "--out", tmp_path / "lora")
        assert r.returncode == 0
        lines = (tmp_path / "lora" / "dataset.jsonl").read_text().strip().split("\n")
        header = json.loads(lines[0])
        delay_col = header["feature_names"].index("delay")
        for line in lines[1:]:
            rec = json.loads(line)
            assert all(it["x"][delay_col] <= 600 for it in rec["items"])

    def test_usage_error_exits_two(self, tmp_path):
        r = run_cli("simulate", "--dgp", "nope", "--n-obs", "1", "--out", tmp_path / "x")
        assert r.returncode == 2

    def test_seed_env_variable_is_default(self, tmp_path):
        import os

        env = dict(os.environ, DETCHOICE_SEED="7")
        r = run_cli("simulate", "--dgp", "spatial", "--radius", "0.5", "--n-obs", "3",
                    "--out", tmp_path / "env", env=env)
        assert r.returncode == 0
        manifest = json.loads((tmp_path / "env" / "manifest.json").read_text())
        assert manifest["seed"] == 7


class TestFit:
    def test_map_artifacts(self, fit_dir):
        artifact = json.loads((fit_dir / "fit.json").read_text())
        assert artifact["model"] == "determinantal"
        assert artifact["map"]["converged"] in (True, False)
        assert len(artifact["standardization"]["mean"]) == 4
        assert (fit_dir / "summary.txt").exists()
        assert (fit_dir / "manifest.json").exists()

    def test_missing_data_exits_one(self, tmp_path):
        r = run_cli("fit", "--data", tmp_path / "missing.jsonl", "--method", "map",
                    "--out", tmp_path / "f")
        assert r.returncode == 1

    def test_mcmc_chain_shape(self, sim_dir, tmp_path):
        out = tmp_path / "mcmc"
        r = run_cli("fit", "--data", sim_dir / "dataset.jsonl", "--method", "mcmc",
                    "--chains", "2", "--warmup", "150", "--steps", "200",
                    "--seed", "5", "--out", out)
        assert r.returncode == 0, r.stderr
        payload = np.load(out / "chains.npz")
        assert payload["draws"].shape == (2, 200, 6)  # 4 beta + 2 lengthscales
        diag = json.loads((out / "diagnostics.json").read_text())
        assert len(diag["rhat"]) == 6
        assert (out / "chains.png").exists()


class TestPredictEvaluate:
    def test_predict_writes_item_ids(self, sim_dir, fit_dir, tmp_path):
        out = tmp_path / "pred"
        r = run_cli("predict", "--fit", fit_dir / "fit.json", "--data", sim_dir / "dataset.jsonl",
                    "--n-draws", "2", "--seed", "11", "--out", out)
        assert r.returncode == 0, r.stderr
        lines = (out / "predictions.jsonl").read_text().strip().split("\n")
        assert len(lines) == 1 + 10 * 2
        rec = json.loads(lines[1])
        assert set(rec) == {"id", "draw", "chosen_ids"}

    def test_evaluate_scores_in_range(self, sim_dir, fit_dir, tmp_path):
        out = tmp_path / "eval"
        r = run_cli("evaluate", "--fit", fit_dir / "fit.json", "--data", sim_dir / "dataset.jsonl",
                    "--n-draws", "5", "--seed", "11", "--out", out)
        assert r.returncode == 0, r.stderr
        scores = json.loads((out / "scores.json").read_text())
        assert -1.0 <= scores["mcc_mean"] <= 1.0

    def test_schema_mismatch_names_columns(self, fit_dir, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(
            json.dumps({"schema": 1, "feature_names": ["only"], "similarity_mask": []})
            + "\n"
            + json.dumps({"id": "o", "items": [{"id": "i", "x": [1.0], "chosen": True}]})
            + "\n"
        )
        r = run_cli("predict", "--fit", fit_dir / "fit.json", "--data", bad,
                    "--out", tmp_path / "p")
        assert r.returncode == 1
        assert "schema mismatch" in r.stderr

    def test_fixed_seed_outputs_stable(self, sim_dir, fit_dir, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            r = run_cli("predict", "--fit", fit_dir / "fit.json", "--data", sim_dir / "dataset.jsonl",
                        "--n-draws", "3", "--seed", "21", "--out", out)
            assert r.returncode == 0
            outs.append((out / "predictions.jsonl").read_bytes())
        assert outs[0] == outs[1]


class TestVerifyCommand:
    def test_smoke_mode_passes(self, tmp_path):
        r = run_cli("verify", "--trials", "1", "--seed", "4", "--out", tmp_path / "v")
        assert r.returncode == 0, r.stderr
        report = json.loads((tmp_path / "v" / "verify.json").read_text())
        assert report["all_passed"] is True
        assert {c["name"] for c in report["checks"]} == {
            "normalizer",
            "gumbel_rum",
            "decomposition",
            "identity_logistic",
            "all_ones_mnl",
            "spectral_sampler",
        }
        for check in report["checks"]:
            assert check["max_deviation"] <= check["tolerance"]

    def test_injected_fault_exits_three(self):
        r = run_cli("verify", "--trials", "1", "--inject-fault")
        assert r.returncode == 3
        report = json.loads(r.stdout)
        failing = [c for c in report["checks"] if not c["passed"]]
        assert failing and failing[0]["failing_case"] is not None


class TestReplay:
    def test_replay_reproduces_simulate(self, sim_dir, tmp_path):
        r = run_cli("replay", "--manifest", sim_dir / "manifest.json", "--out", tmp_path / "rs")
        assert r.returncode == 0, r.stderr
        assert "byte-identically" in r.stdout

    def test_replay_reproduces_fit(self, fit_dir, tmp_path):
        r = run_cli("replay", "--manifest", fit_dir / "manifest.json", "--out", tmp_path / "rf")
        assert r.returncode == 0, r.stderr

    def test_replay_detects_tamper(self, sim_dir, tmp_path):
        manifest = json.loads((sim_dir / "manifest.json").read_text())
        manifest["config"]["seed"] = manifest["seed"] = 9999
        tampered = tmp_path / "tampered.json"
        tampered.write_text(json.dumps(manifest))
        r = run_cli("replay", "--manifest", tampered, "--out", tmp_path / "rt")
        assert r.returncode == 1
        assert "DIFF" in r.stdout
