"""Figure presets over the scenario runner's outputs.

Each preset turns one `epidiff reproduce --preset <name>` output directory
into a figure: trajectory panels (fig5, fig4 top) or estimate-plus-ellipse
panels (fig2, fig3, fig4 bottom, fig6, s1, s2). True parameter values are
drawn as dotted crosshairs; ellipses are plotted exactly as the polylines in
the runner's CSVs (centered on the truth by construction there). Rendering
never modifies its inputs; every figure is written as both PNG and SVG.
"""

from __future__ import annotations

import argparse
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import MissingInput, Scenario, load_scenario, read_path_csv  # noqa: E402

ELL_STYLE = {
    "mle": dict(color="tab:red", label="complete obs"),
    "ci_limit": dict(color="tab:red", ls="--", label="continuous-obs limit"),
}
ELL_CYCLE = ("tab:blue", "black", "tab:purple", "tab:green", "tab:orange")

PRESETS = {}


def preset(name):
    def deco(fn):
        PRESETS[name] = fn
        return fn
    return deco


def _scen(data_dir, name) -> Scenario:
    root = os.path.join(data_dir, name)
    if not os.path.isdir(root):
        raise MissingInput(f"scenario directory not found: {root}")
    return load_scenario(root)


def _crosshair(ax, x, y):
    ax.axvline(x, color="0.4", ls=":", lw=0.8)
    ax.axhline(y, color="0.4", ls=":", lw=0.8)


def _draw_ellipses(ax, sc: Scenario, pair, sets=None, meta=None):
    sets = sets if sets is not None else sorted(sc.ellipses)
    ci = 0
    for set_name in sets:
        polys = sc.ellipses.get(set_name)
        if not polys or pair not in polys:
            continue
        style = ELL_STYLE.get(set_name)
        if style is None:
            style = dict(color=ELL_CYCLE[ci % len(ELL_CYCLE)],
                         label=set_name.replace("ci_", ""))
            ci += 1
        poly = polys[pair]
        ax.plot(poly[:, 0], poly[:, 1], lw=1.2, **style)
    tx, ty = sc.truth[pair[0]], sc.truth[pair[1]]
    _crosshair(ax, tx, ty)
    if meta is not None:
        meta.setdefault("crosshairs", []).append(
            {"pair": list(pair), "x": tx, "y": ty})


def _draw_mean_points(ax, sc: Scenario, pair):
    if not sc.has_estimates():
        return
    est = sc.estimates()
    for name, marker, color in (("ce", "+", "tab:blue"),
                                ("mle", "+", "tab:red")):
        cols = est.get(name)
        if not cols:
            continue
        cx, cy = f"theta_{pair[0]}", f"theta_{pair[1]}"
        if cx in cols and cy in cols:
            ax.plot(np.mean(cols[cx]), np.mean(cols[cy]), marker,
                    color=color, ms=10, mew=2)


def _save(fig, out_dir, name, meta):
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for ext in ("png", "svg"):
        fn = os.path.join(out_dir, f"{name}.{ext}")
        fig.savefig(fn, dpi=150, bbox_inches="tight")
        files.append(fn)
    plt.close(fig)
    meta["outputs"] = meta.get("outputs", []) + files
    return files


def _infected_series(fn, stride=1):
    p = read_path_csv(fn)
    x = p.proportions()
    return p.times[::stride], x[::stride, 1]


@preset("fig2")
def render_fig2(data_dir, out_dir):
    """2x2 scenario grid: daily and coarse-grid ellipses vs the baseline."""
    meta = {"preset": "fig2", "panels": []}
    combos = [("1.5", "3"), ("1.5", "7"), ("5", "3"), ("5", "7")]
    fig, axes = plt.subplots(2, 2, figsize=(9, 8))
    for ax, (r0, d) in zip(axes.ravel(), combos):
        base = _scen(data_dir, f"fig2_r0_{r0}_d_{d}")
        coarse = _scen(data_dir, f"fig2_r0_{r0}_d_{d}_n10")
        daily = [s for s in base.ellipses if s.startswith("ci_n")]
        _draw_ellipses(ax, base, ("R0", "d"), sets=daily + ["mle"], meta=meta)
        _draw_ellipses(ax, coarse, ("R0", "d"),
                       sets=[s for s in coarse.ellipses
                             if s.startswith("ci_n")], meta=meta)
        _draw_mean_points(ax, base, ("R0", "d"))
        ax.set_xlabel("R0")
        ax.set_ylabel("d (days)")
        ax.set_title(f"R0={r0}, d={d}")
        meta["panels"].append(f"R0={r0},d={d}")
    axes[0, 0].legend(fontsize=7)
    fig.suptitle("single-outbreak estimates and 95% ellipses")
    _save(fig, out_dir, "fig2", meta)
    return meta


@preset("fig3")
def render_fig3(data_dir, out_dir):
    """One panel, nested observation grids around the same truth."""
    meta = {"preset": "fig3", "panels": ["R0=1.5,d=3"]}
    fig, ax = plt.subplots(figsize=(6, 5))
    for name in ("fig3_n10", "fig3_n40", "fig3_n2000"):
        sc = _scen(data_dir, name)
        sets = [s for s in sc.ellipses if s.startswith("ci_n")]
        if name == "fig3_n40":
            sets += ["mle"]
            _draw_mean_points(ax, sc, ("R0", "d"))
        _draw_ellipses(ax, sc, ("R0", "d"), sets=sets, meta=meta)
    ax.set_xlabel("R0")
    ax.set_ylabel("d (days)")
    ax.legend(fontsize=8)
    ax.set_title("information gain with sampling frequency")
    _save(fig, out_dir, "fig3", meta)
    return meta


@preset("fig4")
def render_fig4(data_dir, out_dir):
    """Population-size sweep: sample paths on top, ellipses below."""
    meta = {"preset": "fig4", "panels": []}
    sizes = (400, 1000, 10000)
    fig, axes = plt.subplots(2, 3, figsize=(12, 7))
    for j, N in enumerate(sizes):
        sc = _scen(data_dir, f"fig4_N{N}")
        ax = axes[0, j]
        for fn in sc.path_files()[:6]:
            t, i = _infected_series(fn, stride=max(1, N // 400))
            ax.plot(t, i, lw=0.7)
        ax.set_title(f"N = {N}")
        ax.set_xlabel("time (days)")
        ax.set_ylabel("infected proportion")
        ax2 = axes[1, j]
        _draw_ellipses(ax2, sc, ("R0", "d"), meta=meta)
        _draw_mean_points(ax2, sc, ("R0", "d"))
        ax2.set_xlabel("R0")
        ax2.set_ylabel("d (days)")
        meta["panels"].append(f"N={N}")
    axes[1, 0].legend(fontsize=7)
    fig.suptitle("trajectories and 95% ellipses across population sizes")
    _save(fig, out_dir, "fig4", meta)
    return meta


@preset("fig5")
def render_fig5(data_dir, out_dir):
    """Annual vs biennial recurrent epidemics: jump path over the flow."""
    meta = {"preset": "fig5", "panels": []}
    fig, axes = plt.subplots(2, 1, figsize=(10, 7), sharex=True)
    for ax, lam1 in zip(axes, ("0.05", "0.15")):
        jump = _scen(data_dir, f"fig5_lam1_{lam1}")
        flow = _scen(data_dir, f"fig5_lam1_{lam1}_ode")
        jf = jump.path_files()
        ff = flow.path_files()
        if not jf or not ff:
            raise MissingInput(f"fig5 needs jump and flow paths for {lam1}")
        t, i = _infected_series(jf[0], stride=4)
        ax.plot(t / 364.0, i, color="tab:blue", lw=0.8, label="jump process")
        t, i = _infected_series(ff[0])
        ax.plot(t / 364.0, i, color="black", lw=1.2, label="deterministic")
        ax.set_ylabel("infected proportion")
        ax.set_title(f"seasonal amplitude {lam1}")
        meta["panels"].append(f"lam1={lam1}")
    axes[1].set_xlabel("time (years)")
    axes[0].legend(fontsize=8)
    _save(fig, out_dir, "fig5", meta)
    return meta


def _pairwise_grid(data_dir, out_dir, scen_name, fig_name):
    meta = {"preset": fig_name, "panels": []}
    sc = _scen(data_dir, scen_name)
    free = sc.free
    pairs = [(a, b) for i, a in enumerate(free) for b in free[i + 1:]]
    ncol = 3 if len(pairs) >= 3 else len(pairs)
    nrow = int(np.ceil(len(pairs) / ncol))
    fig, axes = plt.subplots(nrow, ncol, figsize=(4 * ncol, 3.4 * nrow))
    axes = np.atleast_1d(axes).ravel()
    for ax, pair in zip(axes, pairs):
        _draw_ellipses(ax, sc, pair, meta=meta)
        _draw_mean_points(ax, sc, pair)
        ax.set_xlabel(pair[0])
        ax.set_ylabel(pair[1])
        meta["panels"].append(f"{pair[0]}:{pair[1]}")
    for ax in axes[len(pairs):]:
        ax.axis("off")
    axes[0].legend(fontsize=7)
    fig.suptitle(f"{scen_name}: pairwise 95% ellipses")
    _save(fig, out_dir, fig_name, meta)
    return meta


@preset("fig6")
def render_fig6(data_dir, out_dir):
    """Pairwise projections of the seasonal model's 4-parameter ellipsoid."""
    return _pairwise_grid(data_dir, out_dir, "fig6", "fig6")


@preset("s1")
def render_s1(data_dir, out_dir):
    return _pairwise_grid(data_dir, out_dir, "s1", "s1")


@preset("s2")
def render_s2(data_dir, out_dir):
    return _pairwise_grid(data_dir, out_dir, "s2", "s2")


def render(preset_name: str, data_dir: str, out_dir: str) -> dict:
    if preset_name not in PRESETS:
        raise ValueError(f"unknown preset {preset_name!r}; "
                         f"known: {sorted(PRESETS)}")
    return PRESETS[preset_name](data_dir, out_dir)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="epidiff-figures",
        description="render figures from scenario-runner outputs")
    ap.add_argument("--preset", required=True, choices=sorted(PRESETS))
    ap.add_argument("--data", required=True,
                    help="directory written by `epidiff reproduce`")
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    try:
        meta = render(args.preset, args.data, args.out)
    except MissingInput as e:
        print(f"missing input: {e}", file=sys.stderr)
        return 2
    for fn in meta["outputs"]:
        print(fn)
    return 0


if __name__ == "__main__":
    sys.exit(main())
