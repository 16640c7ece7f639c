import json
import os
import subprocess
import sys

import numpy as np
import pytest

from epidiff_figures import MissingInput, render
from epidiff_figures.io import read_ellipses_csv, read_path_csv


# ---------------------------------------------------------------------------
# synthetic fixtures exercising the file contracts without the simulator
# ---------------------------------------------------------------------------

def fake_ellipse_rows(set_name, pairs, center=(1.5, 3.0), r=0.1):
    rows = []
    phi = np.linspace(0, 2 * np.pi, 100)
    for a, b in pairs:
        for p in phi:
            rows.append(f"{set_name},{a},{b},0.95,"
                        f"{center[0] + r * np.cos(p)},"
                        f"{center[1] + r * np.sin(p)}")
    return rows


def fake_scenario(root, name, pairs=(("R0", "d"),), free=("R0", "d"),
                  truth=None, sets=("ci_n40", "mle"), n_paths=2, T=10.0):
    truth = truth or {"R0": 1.5, "d": 3.0}
    d = root / name
    (d / "data").mkdir(parents=True)
    (d / "estimates").mkdir()
    (d / "truth.json").write_text(json.dumps(
        {"params": truth, "free": list(free)}))
    (d / "config.json").write_text(json.dumps({"version": 1, "name": name}))
    rows = ["set,label_x,label_y,level,x,y"]
    for s in sets:
        rows += fake_ellipse_rows(s, pairs,
                                  center=(truth[pairs[0][0]],
                                          truth[pairs[0][1]]))
    (d / "ellipses.csv").write_text("\n".join(rows) + "\n")
    recs = []
    for r in range(n_paths):
        fn = f"path_{r:04d}.csv"
        lines = [f"# epidiff-path v1 N=1000 t_end={T!r} fadeout=0",
                 "time,S,I,scheme,seed"]
        for k in range(6):
            t = T * k / 5
            lines.append(f"{t!r},{990 - 30 * k},{10 + 5 * k},exact,1:{r}")
        (d / "data" / fn).write_text("\n".join(lines) + "\n")
        recs.append({"replicate": r, "file": fn, "non_extinct": True,
                     "covered": True, "fadeout": False})
    (d / "data" / "manifest.json").write_text(json.dumps(
        {"version": 1, "counts": {"replicates": n_paths}, "paths": recs}))
    est = ["estimator,replicate," + ",".join(
        [f"theta_{p}" for p in free] + [f"sd_{p}" for p in free])
        + ",u_min,converged,grad_norm,n_fev,n_fail"]
    for r in range(n_paths):
        vals = ",".join(str(truth[p] * (1 + 0.01 * r)) for p in free)
        sds = ",".join("0.05" for _ in free)
        est.append(f"ce,{r},{vals},{sds},0.1,1,1e-06,100,0")
    (d / "estimates" / "estimates.csv").write_text("\n".join(est) + "\n")
    return d


class TestReaders:
    def test_path_reader_contract(self, tmp_path):
        d = fake_scenario(tmp_path, "one")
        p = read_path_csv(str(d / "data" / "path_0000.csv"))
        assert p.N == 1000
        assert p.compartments == ("S", "I")
        assert p.proportions().max() <= 1.0

    def test_missing_columns_reported(self, tmp_path):
        bad = tmp_path / "e.csv"
        bad.write_text("set,label_x,y\nfoo,R0,1\n")
        with pytest.raises(MissingInput) as err:
            read_ellipses_csv(str(bad))
        assert "label_y" in str(err.value)

    def test_empty_ellipse_file_reported(self, tmp_path):
        bad = tmp_path / "e.csv"
        bad.write_text("set,label_x,label_y,level,x,y\n")
        with pytest.raises(MissingInput):
            read_ellipses_csv(str(bad))


class TestSyntheticRender:
    def test_fig3_from_synthetic_inputs(self, tmp_path):
        for name, sets in (("fig3_n10", ("ci_n10",)),
                           ("fig3_n40", ("ci_n40", "mle")),
                           ("fig3_n2000", ("ci_n2000",))):
            fake_scenario(tmp_path, name, sets=sets)
        meta = render("fig3", str(tmp_path), str(tmp_path / "out"))
        for fn in meta["outputs"]:
            assert os.path.exists(fn)
        assert {os.path.splitext(f)[1] for f in meta["outputs"]} == \
            {".png", ".svg"}
        # crosshairs at the configured truth
        assert all(c["x"] == 1.5 and c["y"] == 3.0
                   for c in meta["crosshairs"])

    def test_missing_scenario_is_loud(self, tmp_path):
        with pytest.raises(MissingInput):
            render("fig3", str(tmp_path), str(tmp_path / "out"))

    def test_unknown_preset(self, tmp_path):
        with pytest.raises(ValueError):
            render("fig99", str(tmp_path), str(tmp_path / "out"))

    def test_rendering_never_mutates_inputs(self, tmp_path):
        for name, sets in (("fig3_n10", ("ci_n10",)),
                           ("fig3_n40", ("ci_n40", "mle")),
                           ("fig3_n2000", ("ci_n2000",))):
            fake_scenario(tmp_path, name, sets=sets)

        def snapshot():
            out = {}
            for root, _, files in os.walk(tmp_path):
                for f in files:
                    fn = os.path.join(root, f)
                    if (tmp_path / "out") in [*map(str, [])] or "out" in fn:
                        continue
                    out[fn] = open(fn, "rb").read()
            return out

        before = snapshot()
        render("fig3", str(tmp_path), str(tmp_path / "out"))
        render("fig3", str(tmp_path), str(tmp_path / "out"))
        assert snapshot() == before


# ---------------------------------------------------------------------------
# end to end against the real runner (its external interface)
# ---------------------------------------------------------------------------

def run_reproduce(preset, out, replicates):
    cmd = [sys.executable, "-m", "epidiff.cli", "reproduce",
           "--preset", preset, "--out", str(out), "--seed", "20260809",
           "--jobs", "2"]
    if replicates:
        cmd += ["--replicates", str(replicates)]
    return subprocess.run(cmd, capture_output=True, text=True)


@pytest.mark.parametrize("preset,replicates", [
    ("fig2", 2),
    ("fig5", 1),
    ("fig6", 2),
])
def test_presets_render_from_runner_outputs(tmp_path, preset, replicates):
    data = tmp_path / "data"
    r = run_reproduce(preset, data, replicates)
    assert r.returncode == 0, r.stderr[-2000:]
    meta = render(preset, str(data), str(tmp_path / "fig"))
    assert meta["outputs"]
    for fn in meta["outputs"]:
        assert os.path.getsize(fn) > 0
    truth_positions = {(c["pair"][0], c["pair"][1]): (c["x"], c["y"])
                       for c in meta.get("crosshairs", [])}
    if preset == "fig2":
        assert truth_positions[("R0", "d")] in {(1.5, 3.0), (1.5, 7.0),
                                                (5.0, 3.0), (5.0, 7.0)}
    if preset == "fig6":
        assert truth_positions[("R0", "d")] == (1.5, 3.0)
        assert truth_positions[("R0", "lam1x10")] == (1.5, 1.5)
    print(f"{preset}: rendered {meta['outputs']}")
