"""CLI harness: config schema, subcommands, determinism, provenance."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from quasiwave import cli
from quasiwave.config import ConfigError, parse_config_text


class TestConfig:
    def test_roundtrip_values(self):
        cfg = parse_config_text("""
        # comment
        data.preset = gaussian_narrow
        sim.epsilon = 0.25
        detect.refine_h = false
        scaling.epsilons = 0.4, 0.2
        """)
        assert cfg.get("data.preset") == "gaussian_narrow"
        assert cfg.get("sim.epsilon") == 0.25
        assert cfg.get("detect.refine_h") is False
        assert cfg.get("scaling.epsilons") == [0.4, 0.2]

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("sim.flux_capacitor = 1.21")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad float"):
            parse_config_text("sim.epsilon = tiny")

    def test_defaults_and_hash_stability(self):
        a = parse_config_text("sim.epsilon = 0.1")
        b = parse_config_text("# different text\nsim.epsilon = 0.1")
        assert a.get("detect.growth_factor") == 8.0
        assert a.sha256() == b.sha256()
        c = parse_config_text("sim.epsilon = 0.2")
        assert a.sha256() != c.sha256()


def run_cli(args):
    return cli.main(args)


class TestCommands:
    def test_unknown_config_key_exit_2(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("profile.bogus = 1\n")
        code = run_cli(["predict", "--config", str(cfg),
                        "--out", str(tmp_path / "out"), "--quiet"])
        assert code == cli.EXIT_CONFIG

    def test_profile_zero_preset(self, tmp_path):
        cfg = tmp_path / "zero.cfg"
        cfg.write_text("data.preset = zero\n"
                       "profile.sigma_min = -55\n"
                       "profile.sigma_step = 0.2\n"
                       "profile.n_theta = 4\n")
        out = tmp_path / "out"
        code = run_cli(["profile", "--config", str(cfg), "--out", str(out),
                        "--quiet"])
        assert code == cli.EXIT_OK
        report = json.loads((out / "decay_report.json").read_text())
        assert "empty profile" in report["status"]
        assert report["_meta"]["config_sha256"]

    def test_predict_modulated_preset(self, tmp_path):
        cfg = tmp_path / "pred.cfg"
        cfg.write_text("profile.preset = sigma_gaussian_modulated\n")
        out = tmp_path / "out"
        code = run_cli(["predict", "--config", str(cfg), "--out", str(out),
                        "--quiet"])
        assert code == cli.EXIT_OK
        pred = json.loads((out / "prediction.json").read_text())
        assert pred["tau0"] == pytest.approx(0.9715183255761216, abs=1e-5)
        assert pred["degenerate"] is False

    def test_predict_degenerate_preset(self, tmp_path):
        cfg = tmp_path / "pred.cfg"
        cfg.write_text("profile.preset = sigma_gaussian\n")
        out = tmp_path / "out"
        assert run_cli(["predict", "--config", str(cfg), "--out", str(out),
                        "--quiet"]) == cli.EXIT_OK
        pred = json.loads((out / "prediction.json").read_text())
        assert pred["degenerate"] is True

    def test_simulate_undersized_geometry(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("data.preset = gaussian\n"
                       "sim.geometry = cartesian\n"
                       "sim.extent = 5\n"
                       "sim.h = 0.2\n"
                       "sim.epsilon = 0.2\n"
                       "sim.horizon = 10\n")
        code = run_cli(["simulate", "--config", str(cfg),
                        "--out", str(tmp_path / "out"), "--quiet"])
        assert code == cli.EXIT_CONFIG

    def test_simulate_linear_no_blowup(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("data.preset = gaussian\n"
                       "data.c1 = 0\n"
                       "data.c2 = 0\n"
                       "sim.geometry = radial\n"
                       "sim.r_max = 40\n"
                       "sim.h = 0.05\n"
                       "sim.epsilon = 0.1\n"
                       "sim.horizon = 25\n")
        out = tmp_path / "out"
        # c1 = c2 = 0 is rejected by the quadratic-model invariant: exit 2
        code = run_cli(["simulate", "--config", str(cfg), "--out", str(out),
                        "--quiet"])
        assert code == cli.EXIT_CONFIG

    def test_geometry_subcommand(self, tmp_path):
        cfg = tmp_path / "geo.cfg"
        cfg.write_text("profile.preset = sigma_gaussian_modulated\n")
        out = tmp_path / "out"
        code = run_cli(["geometry", "--config", str(cfg), "--out", str(out),
                        "--quiet"])
        assert code == cli.EXIT_OK
        rep = json.loads((out / "h_report.json").read_text())
        assert rep["all_pass"] is True
        assert (out / "chart_dphi.csv").exists()

    def test_geometry_degenerate_flagged(self, tmp_path):
        cfg = tmp_path / "geo.cfg"
        cfg.write_text("profile.preset = sigma_gaussian\n")
        out = tmp_path / "out"
        code = run_cli(["geometry", "--config", str(cfg), "--out", str(out),
                        "--quiet"])
        assert code == cli.EXIT_CONFIG
        rep = json.loads((out / "h_report.json").read_text())
        assert "not checkable" in rep["status"]


SCALING_CFG = """
data.preset = gaussian
scaling.epsilons = 0.4
scaling.geometry = radial
scaling.horizon_factor = 1.7
profile.sigma_step = 0.1
profile.n_theta = 8
"""


class TestDeterminism:
    def test_scaling_twice_bit_identical(self, tmp_path):
        cfg = tmp_path / "scaling.cfg"
        cfg.write_text(SCALING_CFG)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = run_cli(["scaling", "--config", str(cfg), "--out",
                            str(out), "--quiet"])
            assert code == cli.EXIT_OK
            outs.append(out)
        for fname in ("study.json", "study.csv"):
            a = (outs[0] / fname).read_bytes()
            b = (outs[1] / fname).read_bytes()
            assert a == b, f"{fname} differs between identical runs"
