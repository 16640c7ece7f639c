import json
import os
import subprocess
import sys

import numpy as np
import pytest

from epidiff import cli


def base_config(**over):
    cfg = {
        "version": 1,
        "name": "t",
        "model": "sir",
        "params": {"R0": 1.5, "d": 3.0},
        "N": 400,
        "x0": [0.98, 0.02],
        "grid": {"T": 25, "n": 10},
        "replicates": 3,
        "scheme": "exact",
        "seed": 11,
        "estimator": {"starts": 1, "mle": True},
    }
    cfg.update(over)
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.json"):
    fn = tmp_path / name
    fn.write_text(json.dumps(cfg))
    return str(fn)


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "epidiff.cli", *args],
                          capture_output=True, text=True)


class TestConfigValidation:
    def test_unknown_top_key_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config(base_config(bogus=1))

    def test_unknown_estimator_key_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config(base_config(estimator={"turbo": True}))

    def test_unknown_model_and_params(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config(base_config(model="seir"))
        with pytest.raises(cli.ConfigError):
            cli.parse_config(base_config(params={"R0": 1.5, "zeta": 1.0}))

    def test_version_required(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config(base_config(version=99))

    def test_grid_must_increase(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config(base_config(grid={"times": [0.0, 2.0, 1.0]}))

    def test_exit_code_two_on_config_error(self, tmp_path):
        fn = write_cfg(tmp_path, base_config(bogus=1))
        r = run_cli("simulate", "--config", fn, "--out", str(tmp_path / "o"))
        assert r.returncode == 2
        assert "config error" in r.stderr


class TestSimulate:
    def test_zero_replicates_empty_manifest(self, tmp_path):
        sc = cli.parse_config(base_config(replicates=0))
        man = cli.cmd_simulate(sc, str(tmp_path / "d"))
        assert man["counts"]["replicates"] == 0
        assert man["paths"] == []

    def test_manifest_counts_add_up(self, tmp_path):
        sc = cli.parse_config(base_config(replicates=8))
        man = cli.cmd_simulate(sc, str(tmp_path / "d"))
        c = man["counts"]
        assert (c["analyzed"] + c["excluded_extinct"]
                + c["excluded_not_covered"]) == c["replicates"] == 8
        assert len(man["paths"]) == 8


class TestPipelineDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        cfg = base_config(replicates=4)
        fn = write_cfg(tmp_path, cfg)
        outs = []
        for tag in ("a", "b"):
            data = str(tmp_path / f"data_{tag}")
            est = str(tmp_path / f"est_{tag}")
            assert run_cli("simulate", "--config", fn, "--out", data,
                           "--jobs", "2").returncode == 0
            assert run_cli("estimate", "--config", fn, "--data", data,
                           "--out", est, "--jobs",
                           "1" if tag == "a" else "2").returncode == 0
            outs.append((
                open(os.path.join(est, "aggregate.csv"), "rb").read(),
                open(os.path.join(est, "estimates.csv"), "rb").read(),
            ))
        assert outs[0] == outs[1]

    def test_estimate_outputs(self, tmp_path):
        cfg = base_config(replicates=4)
        fn = write_cfg(tmp_path, cfg)
        data = str(tmp_path / "data")
        est = str(tmp_path / "est")
        run_cli("simulate", "--config", fn, "--out", data)
        assert run_cli("estimate", "--config", fn, "--data", data,
                       "--out", est).returncode == 0
        agg = open(os.path.join(est, "aggregate.csv")).read().splitlines()
        assert agg[0] == cli.AGGREGATE_HEADER
        assert any(line.split(",")[1] == "ce" for line in agg[1:])
        assert any(line.split(",")[1] == "mle" for line in agg[1:])
        summary = json.loads(open(os.path.join(est, "summary.json")).read())
        assert summary["failed"] == 0

    def test_zero_noise_ode_recovery(self, tmp_path):
        cfg = base_config(
            replicates=1, scheme="ode", N=100000,
            estimator={"starts": 1, "mle": False, "bias_correction": False},
        )
        fn = write_cfg(tmp_path, cfg)
        data = str(tmp_path / "data")
        est = str(tmp_path / "est")
        assert run_cli("simulate", "--config", fn, "--out", data).returncode == 0
        assert run_cli("estimate", "--config", fn, "--data", data,
                       "--out", est).returncode == 0
        rows = open(os.path.join(est, "estimates.csv")).read().splitlines()
        vals = rows[1].split(",")
        r0, d = float(vals[2]), float(vals[3])
        assert r0 == pytest.approx(1.5, rel=1e-4)
        assert d == pytest.approx(3.0, rel=1e-4)


class TestFailureRate:
    def test_exit_three_when_estimation_cannot_run(self, tmp_path):
        cfg = base_config(replicates=3)
        fn = write_cfg(tmp_path, cfg)
        data = str(tmp_path / "data")
        run_cli("simulate", "--config", fn, "--out", data)
        # estimation grid reaches beyond the simulated horizon: every
        # replicate fails, tripping the failure-rate threshold
        cfg_bad = base_config(replicates=3, grid={"T": 60, "n": 12})
        fn_bad = write_cfg(tmp_path, cfg_bad, "bad.json")
        r = run_cli("estimate", "--config", fn_bad, "--data", data,
                    "--out", str(tmp_path / "est"))
        assert r.returncode == 3


class TestEllipseCommand:
    def test_polyline_output(self, tmp_path):
        cfg = base_config(replicates=2)
        fn = write_cfg(tmp_path, cfg)
        data = str(tmp_path / "data")
        est = str(tmp_path / "est")
        run_cli("simulate", "--config", fn, "--out", data)
        run_cli("estimate", "--config", fn, "--data", data, "--out", est)
        reports = sorted(os.listdir(os.path.join(est, "reports")))
        rep = [p for p in reports if p.startswith("ce_")][0]
        out = str(tmp_path / "ell.csv")
        r = run_cli("ellipse", "--report", os.path.join(est, "reports", rep),
                    "--pairs", "R0,d", "--out", out,
                    "--center-config", fn)
        assert r.returncode == 0
        lines = open(out).read().splitlines()
        assert lines[0] == "set,label_x,label_y,level,x,y"
        assert len(lines) == 1 + 100
        xs = np.array([float(l.split(",")[4]) for l in lines[1:]])
        ys = np.array([float(l.split(",")[5]) for l in lines[1:]])
        # centered at the configured truth (drop the closing duplicate point)
        assert xs[:-1].mean() == pytest.approx(1.5, abs=1e-9)
        assert ys[:-1].mean() == pytest.approx(3.0, abs=1e-9)

    def test_identity_covariance_circle(self):
        from epidiff.contrast import ellipse_polyline, ellipsoid
        from scipy.stats import chi2
        c = 0.04
        ell = ellipsoid(c * np.eye(2), (0, 1), 0.95)
        r_expect = np.sqrt(c * chi2.ppf(0.95, 2))
        assert ell["semi_axes"] == pytest.approx([r_expect, r_expect])
        poly = ellipse_polyline(ell, center=[0.0, 0.0])
        assert np.hypot(poly[:, 0], poly[:, 1]) == pytest.approx(
            np.full(len(poly), r_expect))


class TestReproducePreset:
    def test_small_preset_runs(self, tmp_path):
        # fig3's theoretical-only member is heavy; use fig4 at tiny scale
        rc = cli.cmd_reproduce("fig4", str(tmp_path), seed=5, replicates=2,
                               jobs=1)
        assert rc == 0
        for N in (400, 1000, 10000):
            d = tmp_path / f"fig4_N{N}"
            assert (d / "data" / "manifest.json").exists()
            assert (d / "truth.json").exists()
            assert (d / "ellipses.csv").exists()
