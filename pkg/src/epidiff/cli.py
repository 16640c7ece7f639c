"""Reproducible scenario runner.

Subcommands:

* ``simulate``  — replicate ensemble of one scenario: per-replicate path CSVs
                  plus a manifest with seeds and exclusion counts.
* ``estimate``  — fit every usable replicate, write per-replicate rows and an
                  aggregate summary (means, percentile intervals, coverage).
* ``ellipse``   — turn a report's covariance into figure-ready ellipse
                  polylines.
* ``reproduce`` — named end-to-end presets (fig2..fig6, s1, s2) at desk scale.

Exit codes: 0 success, 2 configuration error, 3 estimation failure rate above
the configured threshold. Given the same config and seed the full pipeline is
deterministic, including with --jobs > 1.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sp_stats

from . import simulate as sim
from .contrast import (ContrastContext, EstimationReport, ellipse_polyline,
                       ellipsoid, information_matrix, minimize)
from .mle_reference import sir_mle
from .models import get_model, model_registry

CONFIG_VERSION = 1

_TOP_KEYS = {
    "version", "name", "model", "params", "free", "N", "x0", "grid",
    "replicates", "scheme", "seed", "estimator", "estimate",
    "non_extinction_threshold", "fail_threshold",
}
_GRID_KEYS = {"T", "n", "times"}
_EST_KEYS = {
    "starts", "max_fev", "x0_policy", "analysis_N", "bias_correction",
    "xatol", "fatol", "mle", "extra_grids", "level",
}
_SCHEMES = ("exact", "tau-leap", "diffusion", "ode")


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    """Validated scenario configuration."""

    name: str
    model_id: str
    params: dict[str, float]
    free: Optional[list[str]]
    N: int
    x0: np.ndarray
    times: np.ndarray
    replicates: int
    scheme: str
    seed: int
    estimate: bool
    estimator: dict
    non_extinction_threshold: float
    fail_threshold: float
    raw: dict = field(default_factory=dict)

    def table(self):
        table = get_model(self.model_id)
        theta = table.params.with_updates(self.params)
        if self.free is not None:
            theta = theta.with_free(self.free)
        return table, theta


def _reject_unknown(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def parse_config(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}")
    model_id = raw.get("model")
    if model_id not in model_registry():
        raise ConfigError(f"unknown model {model_id!r}")
    table = get_model(model_id)

    params = dict(raw.get("params", {}))
    bad = set(params) - set(table.params.names)
    if bad:
        raise ConfigError(f"unknown parameters for {model_id}: {sorted(bad)}")
    free = raw.get("free")
    if free is not None:
        bad = set(free) - set(table.params.names)
        if bad:
            raise ConfigError(f"unknown free parameters: {sorted(bad)}")

    try:
        N = int(raw["N"])
        x0 = np.asarray(raw["x0"], dtype=float)
        grid = raw["grid"]
    except KeyError as e:
        raise ConfigError(f"missing required key: {e.args[0]}")
    if N <= 0:
        raise ConfigError("N must be positive")
    if x0.shape != (table.p,) or x0.min() < 0 or x0.max() > 1:
        raise ConfigError("x0 must be proportions of length p")

    _reject_unknown(grid, _GRID_KEYS, "grid")
    if "times" in grid:
        times = np.asarray(grid["times"], dtype=float)
    else:
        try:
            T = float(grid["T"])
            n = int(grid["n"])
        except KeyError as e:
            raise ConfigError(f"grid needs T and n (or explicit times): {e}")
        times = np.linspace(0.0, T, n + 1)
    if len(times) < 2 or np.any(np.diff(times) <= 0):
        raise ConfigError("grid must be strictly increasing with >= 2 points")

    scheme = raw.get("scheme", "exact")
    if scheme not in _SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}")

    est = dict(raw.get("estimator", {}))
    _reject_unknown(est, _EST_KEYS, "estimator")
    est.setdefault("starts", 1)
    est.setdefault("max_fev", 2000)
    est.setdefault("x0_policy", "known")
    est.setdefault("analysis_N", None)
    est.setdefault("bias_correction", True)
    est.setdefault("xatol", 1e-8)
    est.setdefault("fatol", 1e-8)
    est.setdefault("mle", scheme == "exact" and model_id == "sir")
    est.setdefault("extra_grids", [])
    est.setdefault("level", 0.95)

    replicates = int(raw.get("replicates", 200))
    if replicates < 0:
        raise ConfigError("replicates must be >= 0")

    return Scenario(
        name=str(raw.get("name", model_id)),
        model_id=model_id,
        params=params,
        free=list(free) if free is not None else None,
        N=N,
        x0=x0,
        times=times,
        replicates=replicates,
        scheme=scheme,
        seed=int(raw.get("seed", 0)),
        estimate=bool(raw.get("estimate", True)),
        estimator=est,
        non_extinction_threshold=float(raw.get("non_extinction_threshold", 0.05)),
        fail_threshold=float(raw.get("fail_threshold", 0.2)),
        raw=raw,
    )


def load_config(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return parse_config(raw)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_one(args):
    cfg_raw, r = args
    sc = parse_config(cfg_raw)
    table, theta = sc.table()
    T = float(sc.times[-1])
    if sc.scheme == "exact":
        z0 = np.round(sc.x0 * sc.N).astype(int)
        path = sim.gillespie(table, theta, sc.N, z0, T, seed=sc.seed, stream=r)
    elif sc.scheme == "tau-leap":
        z0 = np.round(sc.x0 * sc.N).astype(int)
        path = sim.tau_leap(table, theta, sc.N, z0, T, seed=sc.seed, stream=r)
    elif sc.scheme == "diffusion":
        path = sim.euler_maruyama(table, theta, sc.N, sc.x0, T,
                                  seed=sc.seed, stream=r)
    else:  # ode
        path = sim.ode_path(table, theta, sc.x0, T, N=sc.N)
    covered = path.t_end >= T - 1e-9
    ok = covered and sim.non_extinct(path, sc.non_extinction_threshold)
    return r, path, ok, covered


def cmd_simulate(sc: Scenario, out_dir: str, jobs: int = 1) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    work = [(sc.raw, r) for r in range(sc.replicates)]
    records = []
    n_ok = n_fade = n_ext = 0
    for r, path, ok, covered in _pool_map(_simulate_one, work, jobs):
        fname = f"path_{r:04d}.csv"
        sim.write_path_csv(path, os.path.join(out_dir, fname))
        if ok:
            n_ok += 1
        elif not covered:
            n_fade += 1
        else:
            n_ext += 1
        records.append({
            "replicate": r,
            "file": fname,
            "non_extinct": bool(ok),
            "covered": bool(covered),
            "fadeout": bool(path.fadeout),
        })
    manifest = {
        "version": CONFIG_VERSION,
        "config": sc.raw,
        "scheme": sc.scheme,
        "seed": sc.seed,
        "counts": {
            "replicates": sc.replicates,
            "analyzed": n_ok,
            "excluded_extinct": n_ext,
            "excluded_not_covered": n_fade,
        },
        "paths": records,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _estimate_one(args):
    cfg_raw, data_dir, rec = args
    sc = parse_config(cfg_raw)
    table, theta = sc.table()
    path = sim.read_path_csv(os.path.join(data_dir, rec["file"]))
    est = sc.estimator
    analysis_N = est["analysis_N"] or sc.N
    out = {"replicate": rec["replicate"]}
    try:
        obs = sim.sample_at(path, sc.times)
        x0 = sc.x0 * sc.N / analysis_N
        X = obs.X * obs.N / analysis_N
        obs_a = sim.ObservationSet(times=obs.times, X=X, N=analysis_N)
        ctx = ContrastContext(
            table=table, obs=obs_a, N=analysis_N, theta=theta,
            x0_policy=est["x0_policy"],
            x0=x0 if est["x0_policy"] == "known" else None,
            bias_correction=est["bias_correction"],
        )
        rep = minimize(ctx, theta_init=theta.free_values, starts=est["starts"],
                       max_fev=est["max_fev"], seed=sc.seed,
                       xatol=est["xatol"], fatol=est["fatol"],
                       level=est["level"])
        out["ce"] = rep
    except Exception as e:  # noqa: BLE001 - per-replicate failures are data
        out["ce_error"] = f"{type(e).__name__}: {e}"
    if est["mle"] and path.scheme == "exact":
        try:
            out["mle"] = sir_mle(sim.reconstruct_events(path, table))
        except Exception as e:  # noqa: BLE001
            out["mle_error"] = f"{type(e).__name__}: {e}"
    return out


def _wald_covers(rep: EstimationReport, truth: np.ndarray, level: float) -> bool:
    delta = rep.theta_hat.free_values - truth
    try:
        q = float(delta @ np.linalg.solve(rep.cov, delta))
    except np.linalg.LinAlgError:
        return False
    return q <= sp_stats.chi2.ppf(level, df=len(delta))


def _aggregate(name: str, estimator: str, rows: list[EstimationReport],
               truth: np.ndarray, free_names, level: float) -> list[str]:
    lines = []
    if not rows:
        return lines
    est = np.array([r.theta_hat.free_values for r in rows])
    sds = np.array([np.sqrt(np.clip(np.diag(r.cov), 0, None)) for r in rows])
    cover = np.array([_wald_covers(r, truth, level) for r in rows])
    z = sp_stats.norm.ppf(0.5 + level / 2.0)
    for j, pname in enumerate(free_names):
        v = est[:, j]
        lines.append(",".join([
            name, estimator, pname, str(len(rows)),
            repr(float(truth[j])),
            repr(float(np.mean(v))),
            repr(float(np.std(v, ddof=1))) if len(v) > 1 else "nan",
            repr(float(np.percentile(v, 2.5))),
            repr(float(np.percentile(v, 97.5))),
            repr(float(np.mean(2 * z * sds[:, j]))),
            repr(float(np.mean(cover))),
        ]))
    return lines


AGGREGATE_HEADER = ("scenario,estimator,param,n_used,truth,mean,sd,"
                    "ci_emp_lo,ci_emp_hi,ci_th_width_mean,coverage")


def cmd_estimate(sc: Scenario, data_dir: str, out_dir: str, jobs: int = 1) -> int:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(data_dir, "manifest.json"), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    usable = [rec for rec in manifest["paths"] if rec["non_extinct"]]
    work = [(sc.raw, data_dir, rec) for rec in usable]
    results = list(_pool_map(_estimate_one, work, jobs))
    results.sort(key=lambda d: d["replicate"])

    table, theta = sc.table()
    free_names = theta.free_names
    truth = theta.free_values
    level = sc.estimator["level"]

    ce_rows, mle_rows, failures = [], [], []
    rep_dir = os.path.join(out_dir, "reports")
    os.makedirs(rep_dir, exist_ok=True)
    with open(os.path.join(out_dir, "estimates.csv"), "w", encoding="utf-8") as f:
        f.write("estimator," + EstimationReport.csv_header(free_names) + "\n")
        for res in results:
            r = res["replicate"]
            if "ce" in res:
                rep = res["ce"]
                ce_rows.append(rep)
                f.write("ce," + rep.csv_row(r) + "\n")
                with open(os.path.join(rep_dir, f"ce_{r:04d}.json"), "w",
                          encoding="utf-8") as g:
                    g.write(rep.to_json())
            else:
                failures.append((r, res.get("ce_error", "unknown")))
            if "mle" in res and res["mle"].diagnostics["defined"]:
                mle = res["mle"]
                mle_rows.append(mle)
                f.write("mle," + mle.csv_row(r) + "\n")
                with open(os.path.join(rep_dir, f"mle_{r:04d}.json"), "w",
                          encoding="utf-8") as g:
                    g.write(mle.to_json())

    lines = [AGGREGATE_HEADER]
    lines += _aggregate(sc.name, "ce", ce_rows, truth, free_names, level)
    if mle_rows:
        lines += _aggregate(sc.name, "mle", mle_rows, truth,
                            ("R0", "d"), level)
    with open(os.path.join(out_dir, "aggregate.csv"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

    summary = {
        "version": CONFIG_VERSION,
        "scenario": sc.name,
        "counts": manifest["counts"],
        "estimated": len(ce_rows),
        "failed": len(failures),
        "failures": [{"replicate": r, "error": e} for r, e in failures],
    }
    analysis_N = sc.estimator["analysis_N"]
    if analysis_N and analysis_N != sc.N:
        r0s = [rep.theta_hat["R0"] for rep in ce_rows if "R0" in rep.theta_hat.names]
        summary["misspecified_N"] = {
            "N_true": sc.N,
            "N_assumed": analysis_N,
            "r0_scale_expected": analysis_N / sc.N,
            "r0_mean": float(np.mean(r0s)) if r0s else None,
        }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)

    denom = max(len(usable), 1)
    if len(failures) / denom > sc.fail_threshold:
        print(f"estimation failure rate {len(failures)}/{denom} exceeds "
              f"threshold {sc.fail_threshold}", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# ellipse
# ---------------------------------------------------------------------------

def cmd_ellipse(report_path: str, pairs: list[tuple[str, str]], level: float,
                out_path: str, center: Optional[dict[str, float]] = None,
                n_points: int = 100, set_name: str = "report") -> None:
    with open(report_path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    free = payload["free"]
    cov = np.asarray(payload["cov"], dtype=float)
    theta = payload["theta_hat"]
    lines = ["set,label_x,label_y,level,x,y"]
    for a, b in pairs:
        if a not in free or b not in free:
            raise ConfigError(f"pair ({a},{b}) not among free parameters {free}")
        ell = ellipsoid(cov, (free.index(a), free.index(b)), level)
        if center is not None:
            ctr = [center[a], center[b]]
        else:
            ctr = [theta[a], theta[b]]
        poly = ellipse_polyline(ell, n_points=n_points, center=ctr)
        for x, y in poly:
            lines.append(
                f"{set_name},{a},{b},{level},{repr(float(x))},{repr(float(y))}"
            )
    with open(out_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# reproduce presets
# ---------------------------------------------------------------------------

def _sir_config(name, r0, d, T, n, N, replicates, seed, scheme="exact", **est):
    cfg = {
        "version": 1, "name": name, "model": "sir",
        "params": {"R0": r0, "d": d}, "N": N,
        "x0": [0.99, 0.01],
        "grid": {"T": T, "n": n},
        "replicates": replicates, "scheme": scheme, "seed": seed,
    }
    if est:
        cfg["estimator"] = est
    return cfg


def _sirs_config(name, lam1x10, T_days, n, N, replicates, seed, free=None, **est):
    cfg = {
        "version": 1, "name": name, "model": "sirs-seasonal",
        "params": {"R0": 1.5, "d": 3.0, "lam1x10": lam1x10, "waning": 2.0},
        "N": N,
        "x0": [0.7, 1e-4],
        "grid": {"T": T_days, "n": n},
        "replicates": replicates, "scheme": "tau-leap", "seed": seed,
        "estimator": {"mle": False, **est},
    }
    if free is not None:
        cfg["free"] = free
    return cfg


def preset_configs(preset: str, replicates: Optional[int], seed: int) -> list[dict]:
    """Desk-scale scenario lists for the named figure presets."""
    R = replicates
    if preset == "fig2":
        r = R or 200
        out = []
        for (r0, d, T) in [(1.5, 3, 40), (1.5, 7, 100), (5, 3, 20), (5, 7, 45)]:
            name = f"fig2_r0_{r0}_d_{d}"
            out.append(_sir_config(name, r0, d, T, int(T), 1000, r, seed))
            out.append(_sir_config(name + "_n10", r0, d, T, 10, 1000, r,
                                   seed))
        return out
    if preset == "fig3":
        r = R or 200
        return [
            _sir_config("fig3_n40", 1.5, 3, 40, 40, 1000, r, seed),
            _sir_config("fig3_n10", 1.5, 3, 40, 10, 1000, r, seed),
            _sir_config("fig3_n2000", 1.5, 3, 40, 2000, 1000, 0, seed),
        ]
    if preset == "fig4":
        r = R or 200
        return [
            _sir_config(f"fig4_N{N}", 1.5, 3, 40, 40, N, r, seed)
            for N in (400, 1000, 10000)
        ]
    if preset == "fig5":
        r = R or 1
        out = []
        for v in (0.05, 0.15):
            jump = _sirs_config(f"fig5_lam1_{v}", 10 * v, int(20 * 364),
                                int(20 * 52), 10**7, r, seed)
            jump["estimate"] = False
            ode = _sirs_config(f"fig5_lam1_{v}_ode", 10 * v, int(20 * 364),
                               int(20 * 52), 10**7, 1, seed)
            ode["scheme"] = "ode"
            ode["estimate"] = False
            out += [jump, ode]
        return out
    if preset == "fig6":
        r = R or 25
        return [_sirs_config("fig6", 1.5, int(5 * 364), int(5 * 52), 10**6, r,
                             seed)]
    if preset == "s1":
        r = R or 25
        return [_sirs_config("s1", 0.5, int(5 * 364), int(5 * 52), 10**6, r,
                             seed)]
    if preset == "s2":
        r = R or 25
        return [_sirs_config("s2", 1e-3, int(5 * 364), int(5 * 52), 10**6, r,
                             seed, free=["R0", "d", "waning"])]
    raise ConfigError(f"unknown preset {preset!r}")


def _theory_ellipse_rows(sc: Scenario, level: float) -> list[str]:
    """Figure-ready polylines of the truth-centered theoretical ellipses:
    the discrete-observation one for the scenario grid, the complete-
    observation baseline (single-outbreak model), and the continuous-
    observation limit."""
    from .contrast import information_limit

    table, theta = sc.table()
    names = theta.free_names
    truth = theta.as_dict()
    n = len(sc.times) - 1
    obs = sim.ObservationSet(times=sc.times,
                             X=np.tile(sc.x0, (n + 1, 1)), N=sc.N)
    ctx = ContrastContext(table=table, obs=obs, N=sc.N, theta=theta,
                          x0=sc.x0)
    covs = {f"ci_n{n}": np.linalg.inv(information_matrix(ctx, theta.values))
            / sc.N}
    T = float(sc.times[-1])
    covs["ci_limit"] = np.linalg.inv(
        information_limit(table, theta.values, sc.x0, T)) / sc.N
    if sc.model_id == "sir":
        lam, gam = theta["R0"] / theta["d"], 1.0 / theta["d"]
        from .models import sir_r0d_jacobian
        from .odeflow import FlowCache
        grid = np.linspace(0.0, T, int(T / 0.02) + 1)
        x = FlowCache.build(table, theta.values, sc.x0, grid).x_obs
        int_si = np.trapezoid(x[:, 0] * x[:, 1], grid)
        int_i = np.trapezoid(x[:, 1], grid)
        if int_si > 0 and int_i > 0:
            cov_rates = np.diag([lam / (sc.N * int_si),
                                 gam / (sc.N * int_i)])
            J = sir_r0d_jacobian(lam, gam)
            covs["mle"] = J @ cov_rates @ J.T
    rows = []
    for set_name, cov in covs.items():
        for a, b in _default_pairs(names):
            ell = ellipsoid(cov, (names.index(a), names.index(b)), level)
            poly = ellipse_polyline(ell, center=[truth[a], truth[b]])
            for x_, y_ in poly:
                rows.append(f"{set_name},{a},{b},{level},"
                            f"{repr(float(x_))},{repr(float(y_))}")
    return rows


def cmd_reproduce(preset: str, out_dir: str, seed: int,
                  replicates: Optional[int], jobs: int) -> int:
    configs = preset_configs(preset, replicates, seed)
    worst = 0
    for cfg in configs:
        sc = parse_config(cfg)
        scen_dir = os.path.join(out_dir, sc.name)
        data_dir = os.path.join(scen_dir, "data")
        est_dir = os.path.join(scen_dir, "estimates")
        os.makedirs(scen_dir, exist_ok=True)
        with open(os.path.join(scen_dir, "config.json"), "w",
                  encoding="utf-8") as f:
            json.dump(cfg, f, indent=2, sort_keys=True)
        table, theta = sc.table()
        with open(os.path.join(scen_dir, "truth.json"), "w",
                  encoding="utf-8") as f:
            json.dump({"params": theta.as_dict(),
                       "free": list(theta.free_names)}, f, indent=2,
                      sort_keys=True)
        cmd_simulate(sc, data_dir, jobs=jobs)
        if sc.replicates > 0 and sc.scheme != "ode" and sc.estimate:
            code = cmd_estimate(sc, data_dir, est_dir, jobs=jobs)
            worst = max(worst, code)
        level = sc.estimator["level"]
        rows = ["set,label_x,label_y,level,x,y"]
        rows += _theory_ellipse_rows(sc, level)
        with open(os.path.join(scen_dir, "ellipses.csv"), "w",
                  encoding="utf-8") as f:
            f.write("\n".join(rows) + "\n")
    return worst


def _default_pairs(names):
    return [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _pool_map(fn, work, jobs):
    if jobs <= 1 or len(work) <= 1:
        return [fn(w) for w in work]
    with multiprocessing.Pool(processes=jobs) as pool:
        return pool.map(fn, work, chunksize=1)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="epidiff",
                                 description="epidemic scenario runner")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a replicate ensemble")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--replicates", type=int)
    p_sim.add_argument("--jobs", type=int, default=1)

    p_est = sub.add_parser("estimate", help="estimate from simulated data")
    p_est.add_argument("--config", required=True)
    p_est.add_argument("--data", required=True)
    p_est.add_argument("--out", required=True)
    p_est.add_argument("--jobs", type=int, default=1)

    p_ell = sub.add_parser("ellipse", help="ellipse polylines from a report")
    p_ell.add_argument("--report", required=True)
    p_ell.add_argument("--pairs", required=True,
                       help="semicolon-separated name pairs, e.g. R0,d;R0,lam1x10")
    p_ell.add_argument("--level", type=float, default=0.95)
    p_ell.add_argument("--out", required=True)
    p_ell.add_argument("--center-config",
                       help="center ellipses at this config's true parameters")

    p_rep = sub.add_parser("reproduce", help="run a named figure preset")
    p_rep.add_argument("--preset", required=True,
                       choices=["fig2", "fig3", "fig4", "fig5", "fig6",
                                "s1", "s2"])
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--seed", type=int, default=20260809)
    p_rep.add_argument("--replicates", type=int)
    p_rep.add_argument("--jobs", type=int, default=1)

    args = ap.parse_args(argv)
    try:
        if args.cmd == "simulate":
            sc = load_config(args.config)
            if args.seed is not None:
                sc.raw["seed"] = args.seed
                sc = parse_config(sc.raw)
            if args.replicates is not None:
                sc.raw["replicates"] = args.replicates
                sc = parse_config(sc.raw)
            cmd_simulate(sc, args.out, jobs=args.jobs)
            return 0
        if args.cmd == "estimate":
            sc = load_config(args.config)
            return cmd_estimate(sc, args.data, args.out, jobs=args.jobs)
        if args.cmd == "ellipse":
            pairs = []
            for chunk in args.pairs.split(";"):
                a, b = chunk.split(",")
                pairs.append((a.strip(), b.strip()))
            center = None
            if args.center_config:
                sc = load_config(args.center_config)
                _, theta = sc.table()
                center = theta.as_dict()
            cmd_ellipse(args.report, pairs, args.level, args.out,
                        center=center)
            return 0
        if args.cmd == "reproduce":
            return cmd_reproduce(args.preset, args.out, args.seed,
                                 args.replicates, args.jobs)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
