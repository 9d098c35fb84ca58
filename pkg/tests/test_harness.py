"""Config validation, manifest replay determinism, worker-count
independence, CLI subcommands, and verification suite wiring."""

import json
import subprocess
import sys

import numpy as np
import pytest

from purisim.harness import ConfigError, ExperimentConfig, run, verify


def make_cfg(tmp_path, **kw):
    base = dict(kind="manybody", n=8, steps=20, walkers=3, seed=5, workers=1,
                out_dir=str(tmp_path))
    base.update(kw)
    return ExperimentConfig.from_dict(base)


class TestConfig:
    def test_validates(self, tmp_path):
        make_cfg(tmp_path).validate()

    def test_bad_kind(self, tmp_path):
        with pytest.raises(ConfigError, match="kind"):
            make_cfg(tmp_path, kind="nope").validate()

    def test_odd_dim(self, tmp_path):
        with pytest.raises(ConfigError, match="n:"):
            make_cfg(tmp_path, n=7).validate()

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="bogus"):
            ExperimentConfig.from_dict({"kind": "manybody", "bogus": 1})

    def test_missing_out(self):
        cfg = ExperimentConfig.from_dict({"kind": "manybody", "n": 8, "steps": 5})
        with pytest.raises(ConfigError, match="out_dir"):
            cfg.validate()

    def test_json_round_trip(self, tmp_path):
        cfg = make_cfg(tmp_path)
        clone = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
        assert clone == cfg


class TestRunManifest:
    def test_manybody_outputs(self, tmp_path):
        cfg = make_cfg(tmp_path)
        manifest = run(cfg)
        names = sorted(manifest.digests())
        assert names == [
            "summary.json",
            "trajectory_w0000.csv",
            "trajectory_w0001.csv",
            "trajectory_w0002.csv",
        ]
        first = (tmp_path / "trajectory_w0000.csv").read_text().splitlines()
        assert first[0] == "step,purity,entropy_nats,branch,prob"
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["mode"] == "measurement"
        assert len(summary["trajectories"]) == 3

    def test_replay_identical_digests(self, tmp_path):
        a = run(make_cfg(tmp_path / "a"))
        b = run(make_cfg(tmp_path / "b"))
        assert a.digests() == b.digests()

    def test_worker_count_independence(self, tmp_path):
        a = run(make_cfg(tmp_path / "w1", workers=1))
        b = run(make_cfg(tmp_path / "w3", workers=3))
        assert a.digests() == b.digests()

    def test_rank2_starts_at_half(self, tmp_path):
        cfg = make_cfg(tmp_path, kind="rank2", n=100, steps=5, walkers=1)
        run(cfg)
        rows = (tmp_path / "trajectory_w0000.csv").read_text().splitlines()
        assert abs(float(rows[1].split(",")[1]) - 0.5) < 1e-12

    def test_dyson_outputs(self, tmp_path):
        cfg = ExperimentConfig.from_dict(
            dict(kind="dyson", n=500, d=2, steps=10, walkers=4, seed=3,
                 out_dir=str(tmp_path))
        )
        manifest = run(cfg)
        assert set(manifest.digests()) == {"spectra.csv", "summary.json"}
        lines = (tmp_path / "spectra.csv").read_text().splitlines()
        assert lines[0] == "step,walker,lambda_1,lambda_2"
        assert len(lines) == 1 + 11 * 4
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert len(summary["mean_purity"]) == 11

    def test_fermion_outputs(self, tmp_path):
        cfg = ExperimentConfig.from_dict(
            dict(kind="fermion", n=6, steps=12, walkers=5, seed=4,
                 variant="conserving", out_dir=str(tmp_path))
        )
        run(cfg)
        lines = (tmp_path / "entropy.csv").read_text().splitlines()
        assert lines[0] == "step,walker,s_proxy_nats,renyi2_nats"
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert "half_entropy_time" in summary
        assert "order1_purity_time" in summary

    def test_stabilizer_outputs(self, tmp_path):
        cfg = ExperimentConfig.from_dict(
            dict(kind="stabilizer", n=5, steps=2000, walkers=4, seed=6,
                 out_dir=str(tmp_path))
        )
        run(cfg)
        lines = (tmp_path / "trajectory_w0000.csv").read_text().splitlines()
        assert lines[0] == "step,entropy_bits,case"
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert len(summary["steps_to_pure"]) == 4

    def test_manifest_written(self, tmp_path):
        run(make_cfg(tmp_path))
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["artifact_version"]
        assert manifest["worker_seeds"]


class TestVerifySuites:
    def test_dyson_identity(self):
        rep = verify("dyson-identity", scale=0.2)
        assert rep["pass"], rep

    def test_inequalities(self):
        rep = verify("inequalities", scale=0.03)
        assert rep["pass"], rep

    def test_fermion_oracle(self):
        rep = verify("fermion-oracle", scale=0.15)
        assert rep["pass"], rep
        assert rep["max_update_deviation"] < 1e-10

    def test_stabilizer_stats_smoke(self):
        rep = verify("stabilizer-stats", scale=0.02)
        assert rep["monotone_entropy"]

    def test_moments_smoke(self):
        rep = verify("moments", scale=0.01)
        assert rep["pass"], rep

    def test_unknown_suite(self):
        with pytest.raises(ConfigError):
            verify("nope")


class TestCli:
    def _run(self, *argv):
        return subprocess.run(
            [sys.executable, "-m", "purisim.cli", *argv],
            capture_output=True,
            text=True,
            timeout=600,
        )

    def test_manybody_subcommand(self, tmp_path):
        res = self._run(
            "manybody", "--dim", "8", "--steps", "10", "--walkers", "2",
            "--seed", "1", "--out", str(tmp_path),
        )
        assert res.returncode == 0, res.stderr
        manifest = json.loads(res.stdout)
        assert any(f["name"] == "summary.json" for f in manifest["files"])

    def test_config_file_with_flag_override(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"n": 8, "steps": 5, "walkers": 1, "seed": 9}))
        res = self._run(
            "manybody", "--config", str(cfg_file), "--steps", "7",
            "--out", str(tmp_path / "out"),
        )
        assert res.returncode == 0, res.stderr
        manifest = json.loads(res.stdout)
        assert manifest["config"]["steps"] == 7
        assert manifest["config"]["seed"] == 9

    def test_env_default_outdir(self, tmp_path, monkeypatch):
        import purisim.cli as cli

        monkeypatch.setenv("PURISIM_OUT", str(tmp_path / "envout"))
        rc = cli.main(["stabilizer", "--qubits", "4", "--steps", "200", "--seed", "2"])
        assert rc == 0
        assert (tmp_path / "envout" / "summary.json").exists()

    def test_config_error_exit_code(self, tmp_path):
        res = self._run("manybody", "--dim", "7", "--steps", "5", "--out", str(tmp_path))
        assert res.returncode == 2
        assert "configuration error" in res.stderr

    def test_verify_exit_codes(self):
        res = self._run("verify", "dyson-identity", "--scale", "0.05")
        assert res.returncode == 0
        report = json.loads(res.stdout)
        assert report["pass"]

    def test_verify_moments_subcommand(self):
        res = self._run("verify-moments", "--scale", "0.01")
        assert res.returncode == 0, res.stderr
        report = json.loads(res.stdout)
        assert report["suite"] == "moments"
