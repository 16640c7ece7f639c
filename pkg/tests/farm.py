"""Shared replicate-farm helpers for statistical tests.

Workers are top-level functions so multiprocessing can pickle them; each
replicate draws from its own counter-based stream, so results do not depend
on the worker count.
"""

from __future__ import annotations

import multiprocessing
import os

import numpy as np

from epidiff import contrast, models, simulate
from epidiff.mle_reference import sir_mle

JOBS = max(1, min(2, os.cpu_count() or 1))


def pool_map(fn, work):
    if JOBS <= 1 or len(work) <= 1:
        return [fn(w) for w in work]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=JOBS) as pool:
        return pool.map(fn, work, chunksize=1)


def _sir_worker(args):
    (r, r0, d, N, T, n, seed, scheme, analysis_N, bias_correction,
     want_mle) = args
    sir = models.sir_table()
    th0 = np.array([r0, d])
    x0 = np.array([0.99, 0.01])
    times = np.linspace(0.0, T, n + 1)
    if scheme == "exact":
        path = simulate.gillespie(sir, th0, N, np.round(x0 * N).astype(int),
                                  T, seed=seed, stream=r)
    elif scheme == "tau-leap":
        path = simulate.tau_leap(sir, th0, N, np.round(x0 * N).astype(int),
                                 T, seed=seed, stream=r)
    else:
        path = simulate.euler_maruyama(sir, th0, N, x0, T, dt=0.01,
                                       seed=seed, stream=r)
    if path.t_end < T - 1e-9 or not simulate.non_extinct(path):
        return None
    obs = simulate.sample_at(path, times)
    NA = analysis_N or N
    ctx = contrast.ContrastContext(
        table=sir, obs=simulate.ObservationSet(obs.times, obs.X * N / NA, NA),
        N=NA, theta=sir.params, x0=x0 * N / NA,
        bias_correction=bias_correction,
    )
    rep = contrast.minimize(ctx, starts=1, xatol=1e-7, fatol=1e-7)
    out = {
        "replicate": r,
        "theta": rep.theta_hat.free_values,
        "cov": rep.cov,
        "converged": rep.diagnostics["converged"],
        "grad_norm": rep.diagnostics["grad_norm"],
        "u_min": rep.u_min,
    }
    if want_mle and path.scheme == "exact":
        m = sir_mle(path)
        if m.diagnostics["defined"]:
            out["mle_theta"] = m.theta_hat.free_values
            out["mle_cov"] = m.cov
    return out


def sir_farm(n_keep, r0=1.5, d=3.0, N=1000, T=40.0, n=40, seed=2026,
             scheme="exact", analysis_N=None, bias_correction=True,
             want_mle=False, max_tries=None):
    """First ``n_keep`` usable (non-extinct, covered) replicate fits."""
    max_tries = max_tries or 4 * n_keep
    results = []
    start = 0
    while len(results) < n_keep and start < max_tries:
        batch = min(2 * (n_keep - len(results)) + 4, max_tries - start)
        work = [(r, r0, d, N, T, n, seed, scheme, analysis_N,
                 bias_correction, want_mle)
                for r in range(start, start + batch)]
        for res in pool_map(_sir_worker, work):
            if res is not None and len(results) < n_keep:
                results.append(res)
        start += batch
    if len(results) < n_keep:
        raise RuntimeError(f"only {len(results)}/{n_keep} usable replicates")
    return results


def _sirs_worker(args):
    r, N, T, n, seed, eps, starts = args
    sirs = models.sirs_table()
    th0 = sirs.params.values.copy()
    x0 = np.array([0.7, 1e-4])
    times = np.linspace(0.0, T, n + 1)
    path = simulate.tau_leap(sirs, th0, N, np.round(x0 * N).astype(int), T,
                             seed=seed, stream=r, eps=eps)
    if not simulate.non_extinct(path):
        return None
    obs = simulate.sample_at(path, times)
    ctx = contrast.ContrastContext(table=sirs, obs=obs, N=N,
                                   theta=sirs.params, x0=x0)
    rep = contrast.minimize(ctx, starts=starts, xatol=1e-6, fatol=1e-6)
    return {
        "replicate": r,
        "theta": rep.theta_hat.free_values,
        "cov": rep.cov,
        "converged": rep.diagnostics["converged"],
    }


def sirs_farm(n_keep, N=10**6, T=1820.0, n=260, seed=606, eps=0.005,
              starts=1):
    results = []
    start = 0
    while len(results) < n_keep and start < 3 * n_keep:
        batch = min(n_keep - len(results) + 2, 3 * n_keep - start)
        work = [(r, N, T, n, seed, eps, starts)
                for r in range(start, start + batch)]
        for res in pool_map(_sirs_worker, work):
            if res is not None and len(results) < n_keep:
                results.append(res)
        start += batch
    if len(results) < n_keep:
        raise RuntimeError(f"only {len(results)}/{n_keep} usable replicates")
    return results
