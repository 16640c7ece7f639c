"""Trajectory generation: exact jump paths, tau-leaping, and the diffusion.

All simulators draw from counter-based Philox streams, one independent
stream per replicate index, so replicate farms are reproducible and
embarrassingly parallel. Integer-state paths never leave {0..N}^p; diffusion
paths are projected onto the unit box and stop with a flag when the infected
coordinate hits zero (the approximation is not trusted at the boundary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import model_core
from .model_core import TransitionTable
from .numutil import make_rng
from .odeflow import FlowCache
from .params import ParamVector

__all__ = [
    "Path",
    "ObservationSet",
    "gillespie",
    "tau_leap",
    "euler_maruyama",
    "ode_path",
    "sample_at",
    "non_extinct",
    "write_path_csv",
    "read_path_csv",
    "write_path_npz",
    "read_path_npz",
]

# Window length (days) for the piecewise-constant rate majorants used by the
# thinning simulator of time-dependent tables.
MAJORANT_WINDOW = 0.1

# Tau-leap defaults: Cao-style relative-change bound, and how many exact
# events to interleave when the leap step underflows.
TAU_EPS = 0.03
TAU_FLOOR_FACTOR = 2.0
TAU_EXACT_BURST = 20
TAU_MAX_HALVINGS = 25

COUNT_SCHEMES = ("exact", "tau-leap")


@dataclass(frozen=True)
class Path:
    """One simulated trajectory plus its provenance.

    ``states`` holds integer counts for the jump schemes and proportions for
    the diffusion/ode schemes. ``t_end`` is the horizon the path covers: an
    absorbed jump path is constant after its last event up to ``t_end``;
    a diffusion path that faded out stops early with ``fadeout=True``.
    ``events`` (exact scheme) is the transition index per event; ``fires``
    counts events per transition; ``incidence`` totals the events that
    increment the infected coordinate.
    """

    scheme: str
    N: int
    times: np.ndarray
    states: np.ndarray
    seed: int
    stream: int
    t_end: float
    compartments: tuple[str, ...] = ("S", "I")
    fadeout: bool = False
    events: Optional[np.ndarray] = None
    fires: Optional[np.ndarray] = None
    incidence: Optional[int] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.states.shape[0] != len(t):
            raise ValueError("times and states disagree")
        object.__setattr__(self, "times", t)

    @property
    def counts(self) -> bool:
        return self.scheme in COUNT_SCHEMES

    def proportions(self) -> np.ndarray:
        """States normalized to [0,1]^p regardless of scheme."""
        x = self.states.astype(float)
        return x / self.N if self.counts else x


@dataclass(frozen=True)
class ObservationSet:
    """Discrete observations: times t_0 < ... < t_n and proportion vectors."""

    times: np.ndarray
    X: np.ndarray
    N: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing, length >= 2")
        if X.shape != (len(t), X.shape[1]):
            raise ValueError("X must be (n+1, p)")
        if X.min() < -1e-9 or X.max() > 1.0 + 1e-9:
            raise ValueError("observations must be proportions in [0,1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return len(self.times) - 1


def _theta_values(table: TransitionTable, theta) -> np.ndarray:
    if isinstance(theta, ParamVector):
        return theta.values
    return np.asarray(theta, dtype=float)


def _scalar_rate_fns(table: TransitionTable, th: np.ndarray, N: int):
    """Per-transition integer-state rate closures with boundary clamping."""
    fns = []
    for tr in table.transitions:
        jump = tuple(int(v) for v in tr.jump)
        rate = tr.rate
        jsum = int(tr.jump.sum()) if table.simplex else 0

        def alpha(t, z, _rate=rate, _jump=jump, _th=th, _N=N, _jsum=jsum):
            tot = 0
            for zi, li in zip(z, _jump):
                zt = zi + li
                if zt < 0 or zt > _N:
                    return 0.0
                tot += zi
            if _jsum > 0 and tot + _jsum > _N:
                return 0.0
            y = tuple(zi / _N for zi in z)
            r = _N * _rate(t, y, _th)
            if not (r >= 0.0) or r == math.inf:   # catches NaN too
                raise model_core.RateDomainError(f"bad rate at t={t}, z={z}")
            return r

        fns.append(alpha)
    return fns


def _sup_rate_fns(table: TransitionTable, th: np.ndarray, N: int):
    """Windowed rate majorants (thinning); requires rate_sup on each transition."""
    fns = []
    for tr in table.transitions:
        if tr.rate_sup is None:
            raise ValueError(
                f"time-dependent table {table.name!r} needs rate_sup on "
                f"transition {tr.name!r} for exact simulation"
            )
        fns.append(tr.rate_sup)
    return fns


def _ssa(table, th, N, z, t, t_stop, rng, times, states, events, fires,
         max_events=None):
    """Exact event loop (direct method / thinning), appending in place.

    Returns the stop time: t_stop on normal exhaustion or absorption, earlier
    only when max_events fires first.
    """
    alphas = _scalar_rate_fns(table, th, N)
    n_tr = len(alphas)
    count = 0
    if not table.time_dependent:
        while t < t_stop:
            rates = [a(t, z) for a in alphas]
            total = 0.0
            for r in rates:
                total += r
            if total <= 0.0:
                break  # absorbed
            t_next = t + rng.exponential(1.0 / total)
            if t_next > t_stop:
                t = t_stop
                break
            t = t_next
            u = rng.random() * total
            acc = 0.0
            j = 0
            for j in range(n_tr):
                acc += rates[j]
                if u <= acc:
                    break
            jump = table.transitions[j].jump
            z = tuple(int(zi + li) for zi, li in zip(z, jump))
            times.append(t)
            states.append(z)
            events.append(j)
            fires[j] += 1
            count += 1
            if max_events is not None and count >= max_events:
                return t, z
        return t_stop, z

    sups = _sup_rate_fns(table, th, N)
    y_of = lambda zz: tuple(v / N for v in zz)
    window_end = t + MAJORANT_WINDOW
    bound = None
    while t < t_stop:
        if bound is None:
            window_end = min(t + MAJORANT_WINDOW, t_stop)
            y = y_of(z)
            bound = 0.0
            for s_fn, tr in zip(sups, table.transitions):
                tgt_ok = all(0 <= zi + li <= N for zi, li in zip(z, tr.jump))
                if tgt_ok and table.simplex:
                    tgt_ok = sum(z) + int(tr.jump.sum()) <= N
                if tgt_ok:
                    bound += N * max(s_fn(t, window_end, y, th), 0.0)
        if bound <= 0.0:
            if window_end >= t_stop:
                break
            t = window_end
            bound = None
            continue
        t_next = t + rng.exponential(1.0 / bound)
        if t_next > window_end:
            t = window_end
            bound = None if window_end < t_stop else bound
            if window_end >= t_stop:
                break
            continue
        t = t_next
        rates = [a(t, z) for a in alphas]
        total = 0.0
        for r in rates:
            total += r
        u = rng.random() * bound
        if u > total:
            continue  # thinned
        acc = 0.0
        j = 0
        for j in range(n_tr):
            acc += rates[j]
            if u <= acc:
                break
        jump = table.transitions[j].jump
        z = tuple(int(zi + li) for zi, li in zip(z, jump))
        times.append(t)
        states.append(z)
        events.append(j)
        fires[j] += 1
        count += 1
        bound = None  # state changed: recompute the majorant
        if max_events is not None and count >= max_events:
            return t, z
    return t_stop, z


def _incidence(table: TransitionTable, fires: np.ndarray) -> int:
    coord = table.fadeout_coord if table.fadeout_coord is not None else 1
    up = np.array([tr.jump[coord] > 0 for tr in table.transitions])
    return int(fires[up].sum())


def gillespie(table: TransitionTable, theta, N: int, z0, T: float,
              seed: int, stream: int = 0, max_events: Optional[int] = None) -> Path:
    """Exact event-level path on {0..N}^p up to horizon T.

    Time-homogeneous tables use the direct method (exponential waiting time,
    next jump proportional to its rate); time-dependent tables use thinning
    against piecewise-constant windowed majorants. Absorbing states end the
    event loop early; the path still covers [0, T].
    """
    th = _theta_values(table, theta)
    z0 = np.asarray(z0, dtype=int)
    if z0.shape != (table.p,) or z0.min() < 0 or z0.max() > N:
        raise ValueError("z0 must lie in {0..N}^p")
    rng = make_rng(seed, stream)
    z = tuple(int(v) for v in z0)
    times = [0.0]
    states = [z]
    events: list[int] = []
    fires = np.zeros(len(table.transitions), dtype=int)
    t_end, _ = _ssa(table, th, N, z, 0.0, float(T), rng, times, states, events,
                    fires, max_events=max_events)
    return Path(
        scheme="exact", N=N, times=np.array(times),
        states=np.array(states, dtype=int), seed=seed, stream=stream,
        t_end=t_end, compartments=table.compartments,
        events=np.array(events, dtype=int), fires=fires,
        incidence=_incidence(table, fires),
    )


def tau_leap(table: TransitionTable, theta, N: int, z0, T: float,
             seed: int, stream: int = 0, eps: float = TAU_EPS) -> Path:
    """Approximate jump path: Poisson event counts over adapted steps.

    The step is chosen so the expected (and one-sigma) relative state change
    stays below ``eps``; steps whose proposal leaves {0..N}^p are halved and
    redrawn, and residual violations are clamped. When the adapted step
    underflows (a couple of expected events per step), the simulator falls
    back to short exact bursts.
    """
    th = _theta_values(table, theta)
    z0 = np.asarray(z0, dtype=int)
    if z0.shape != (table.p,) or z0.min() < 0 or z0.max() > N:
        raise ValueError("z0 must lie in {0..N}^p")
    rng = make_rng(seed, stream)
    p = table.p
    jumps = [tuple(int(v) for v in tr.jump) for tr in table.transitions]
    alphas = _scalar_rate_fns(table, th, N)
    n_tr = len(alphas)
    z = tuple(int(v) for v in z0)
    t = 0.0
    times = [0.0]
    states = [z]
    events: list[int] = []
    fires = np.zeros(n_tr, dtype=int)
    T = float(T)
    while t < T:
        rates = [a(t, z) for a in alphas]
        total = sum(rates)
        if total <= 0.0:
            break  # absorbed
        # Expected change and variance per coordinate.
        tau = T - t
        for i in range(p):
            mu = 0.0
            var = 0.0
            for j in range(n_tr):
                lj = jumps[j][i]
                if lj:
                    mu += lj * rates[j]
                    var += lj * lj * rates[j]
            bound = max(eps * z[i], 1.0)
            if mu != 0.0:
                tau = min(tau, bound / abs(mu))
            if var > 0.0:
                tau = min(tau, bound * bound / var)
        if tau < TAU_FLOOR_FACTOR / total and t + tau < T:
            # Leaping is no longer worthwhile: take a burst of exact events.
            t, z = _ssa(table, th, N, z, t, T, rng, times, states, events,
                        fires, max_events=TAU_EXACT_BURST)
            continue
        # Draw counts; halve the step while the proposal leaves the
        # admissible state set.
        for _ in range(TAU_MAX_HALVINGS):
            ks = [int(rng.poisson(r * tau)) if r > 0.0 else 0 for r in rates]
            znew = list(z)
            for j in range(n_tr):
                if ks[j]:
                    for i in range(p):
                        znew[i] += jumps[j][i] * ks[j]
            ok = all(0 <= v <= N for v in znew)
            if ok and table.simplex:
                ok = sum(znew) <= N
            if ok:
                break
            tau *= 0.5
        else:
            znew = [min(max(v, 0), N) for v in znew]
            if table.simplex and sum(znew) > N:
                over = sum(znew) - N
                znew[0] = max(znew[0] - over, 0)
        t = min(t + tau, T)
        z = tuple(znew)
        times.append(t)
        states.append(z)
        for j in range(n_tr):
            fires[j] += ks[j]
    return Path(
        scheme="tau-leap", N=N, times=np.array(times),
        states=np.array(states, dtype=int), seed=seed, stream=stream,
        t_end=T, compartments=table.compartments,
        fires=fires, incidence=_incidence(table, fires),
    )


def _make_sigma2(table: TransitionTable, th: np.ndarray):
    """Scalar closure for the 2x2 diffusion matrix entries (a, c, b)."""
    terms = []
    for tr in table.transitions:
        l1, l2 = float(tr.jump[0]), float(tr.jump[1])
        terms.append((tr.rate, l1 * l1, l1 * l2, l2 * l2))

    def sigma2(t, s, i):
        a = c = b = 0.0
        y = (s, i)
        for rate, w11, w12, w22 in terms:
            r = rate(t, y, th)
            a += w11 * r
            c += w12 * r
            b += w22 * r
        return a, c, b

    return sigma2


def euler_maruyama(table: TransitionTable, theta, N: int, x0, T: float,
                   dt: Optional[float] = None, seed: int = 0,
                   stream: int = 0) -> Path:
    """Euler-Maruyama path of the small-noise diffusion on [0,1]^p.

    dx = b dt + sqrt(dt/N) * sigma xi per step, then projection onto the unit
    box. Stops and flags the path if the infected coordinate reaches zero
    before the horizon (fade-out), since the diffusion approximation is not
    meaningful at that boundary.
    """
    th = _theta_values(table, theta)
    x0 = np.asarray(x0, dtype=float)
    dt = float(dt if dt is not None else table.em_step)
    if dt > table.em_step + 1e-12:
        raise ValueError(f"dt={dt} exceeds the model's max step {table.em_step}")
    if x0.shape != (table.p,) or x0.min() < 0 or x0.max() > 1:
        raise ValueError("x0 must lie in [0,1]^p")
    if table.p != 2:
        raise NotImplementedError("diffusion simulation is implemented for p=2")
    rng = make_rng(seed, stream)
    nstep = int(math.ceil(T / dt - 1e-12))
    grid = np.minimum(dt * np.arange(nstep + 1), T)
    xi = rng.standard_normal((nstep, 2))
    fdrift = model_core.scalar_drift_fn(table, th)
    sigma2 = _make_sigma2(table, th)
    fade_idx = table.fadeout_coord if table.fadeout_coord is not None else 1
    s, i = float(x0[0]), float(x0[1])
    xs = [(s, i)]
    fadeout = False
    t_end = float(T)
    k = 0
    for k in range(nstep):
        t = grid[k]
        h = grid[k + 1] - t
        b1, b2 = fdrift(t, s, i)
        a, c, b = sigma2(t, s, i)
        if a > 1e-300:
            s11 = math.sqrt(a)
            s21 = c / s11
            s22 = math.sqrt(max(b - s21 * s21, 0.0))
        else:
            s11 = 0.0
            s21 = 0.0
            s22 = math.sqrt(max(b, 0.0))
        f = math.sqrt(h / N)
        s += b1 * h + f * s11 * xi[k, 0]
        i += b2 * h + f * (s21 * xi[k, 0] + s22 * xi[k, 1])
        if (i if fade_idx == 1 else s) <= 0.0:
            fadeout = True
            t_end = grid[k + 1]
            s = min(max(s, 0.0), 1.0)
            i = min(max(i, 0.0), 1.0)
            xs.append((s, i))
            break
        s = min(max(s, 0.0), 1.0)
        i = min(max(i, 0.0), 1.0)
        if table.simplex and s + i > 1.0:
            over = 0.5 * (s + i - 1.0)
            s = min(max(s - over, 0.0), 1.0)
            i = min(max(i - over, 0.0), 1.0)
        xs.append((s, i))
    n_done = len(xs)
    return Path(
        scheme="diffusion", N=N, times=grid[:n_done],
        states=np.array(xs), seed=seed, stream=stream,
        t_end=t_end if not fadeout else grid[n_done - 1],
        compartments=table.compartments, fadeout=fadeout,
    )


def ode_path(table: TransitionTable, theta, x0, T: float,
             dt: float = 0.25, N: int = 0) -> Path:
    """Deterministic mean-field trajectory packaged as a Path (scheme 'ode')."""
    grid = np.arange(0.0, T + dt / 2, dt)
    if grid[-1] < T:
        grid = np.append(grid, T)
    cache = FlowCache.build(table, _theta_values(table, theta),
                            np.asarray(x0, float), grid)
    return Path(
        scheme="ode", N=N, times=grid, states=cache.x_obs, seed=0, stream=0,
        t_end=float(T), compartments=table.compartments,
    )


def sample_at(path: Path, times) -> ObservationSet:
    """Normalized observations X(t_k) = Z(t_k)/N by previous-point sampling.

    Event paths are cadlag: the state at t is the state after the last event
    at or before t. Grid paths use the previous grid point the same way.
    """
    t = np.asarray(times, dtype=float)
    if t.min() < -1e-12 or t.max() > path.t_end + 1e-9:
        raise ValueError(
            f"query times must lie in [0, {path.t_end}] (path coverage)"
        )
    idx = np.searchsorted(path.times, t + 1e-12, side="right") - 1
    idx = np.clip(idx, 0, len(path.times) - 1)
    X = path.proportions()[idx]
    return ObservationSet(times=t, X=X, N=path.N)


def reconstruct_events(path: Path, table: TransitionTable) -> Path:
    """Recover per-event transition indices of an exact path from its state
    increments (the path CSV format does not carry them).

    Requires the table's jump vectors to be pairwise distinct, which holds
    for the built-in models.
    """
    if path.scheme != "exact":
        raise ValueError("event reconstruction applies to exact paths only")
    if path.events is not None:
        return path
    jumps = table.jumps
    if len(np.unique(jumps, axis=0)) != len(jumps):
        raise ValueError("table has duplicate jump vectors; events ambiguous")
    deltas = np.diff(path.states, axis=0)
    events = np.empty(len(deltas), dtype=int)
    for j, jump in enumerate(jumps):
        events[np.all(deltas == jump, axis=1)] = j
    if not np.all((deltas[:, None, :] == jumps[None, :, :]).all(axis=2).any(axis=1)):
        raise ValueError("a state increment matches no transition jump")
    fires = np.bincount(events, minlength=len(jumps))
    return replace(path, events=events, fires=fires,
                   incidence=_incidence(table, fires))


def non_extinct(path: Path, threshold: float = 0.05) -> bool:
    """Final epidemic size at least ``threshold`` of the initial susceptibles.

    Uses the recorded cumulative incidence when the simulator kept per-
    transition event counts; otherwise (diffusion paths, plain SIR) falls
    back to the drop of the susceptible coordinate, which equals cumulative
    incidence whenever infection is the only transition moving it.
    """
    x = path.states.astype(float)
    scale = 1.0 if path.counts else path.N
    s0 = x[0, 0] * scale
    if path.incidence is not None:
        infections = float(path.incidence)
    else:
        infections = (x[0, 0] - x[-1, 0]) * scale
    return infections >= threshold * s0 - 1e-9


# ---------------------------------------------------------------------------
# Serialization: versioned CSV and a compact binary cache
# ---------------------------------------------------------------------------

_CSV_VERSION = "epidiff-path v1"


def write_path_csv(path: Path, fp) -> None:
    """Versioned CSV: one metadata comment line, then one row per time point."""
    own = isinstance(fp, str)
    f = open(fp, "w", encoding="utf-8") if own else fp
    try:
        inc = "" if path.incidence is None else f" incidence={path.incidence}"
        f.write(
            f"# {_CSV_VERSION} N={path.N} t_end={float(path.t_end)!r} "
            f"fadeout={int(path.fadeout)}{inc}\n"
        )
        f.write("time," + ",".join(path.compartments) + ",scheme,seed\n")
        if path.counts:
            cell = lambda v: "%d" % v
        else:
            cell = lambda v: repr(float(v))
        for t, row in zip(path.times, path.states):
            cells = ",".join(cell(v) for v in row)
            f.write(
                f"{repr(float(t))},{cells},{path.scheme},"
                f"{path.seed}:{path.stream}\n"
            )
    finally:
        if own:
            f.close()


def read_path_csv(fp) -> Path:
    own = isinstance(fp, str)
    f = open(fp, "r", encoding="utf-8") if own else fp
    try:
        head = f.readline().strip()
        if not head.startswith(f"# {_CSV_VERSION}"):
            raise ValueError(f"not a {_CSV_VERSION} file: {head[:60]}")
        meta = dict(kv.split("=") for kv in head.split()[3:])
        cols = f.readline().strip().split(",")
        comps = tuple(cols[1:-2])
        times = []
        rows = []
        scheme = "exact"
        seed = stream = 0
        for line in f:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            times.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:-2]])
            scheme = parts[-2]
            seed_s, stream_s = parts[-1].split(":")
            seed, stream = int(seed_s), int(stream_s)
        states = np.array(rows)
        if scheme in COUNT_SCHEMES:
            states = states.astype(int)
        inc = meta.get("incidence")
        return Path(
            scheme=scheme, N=int(meta["N"]), times=np.array(times),
            states=states, seed=seed, stream=stream,
            t_end=float(meta["t_end"]), compartments=comps,
            fadeout=bool(int(meta.get("fadeout", "0"))),
            incidence=None if inc is None else int(inc),
        )
    finally:
        if own:
            f.close()


def write_path_npz(path: Path, fp) -> None:
    """Compact little-endian binary cache of a path."""
    np.savez_compressed(
        fp,
        version=np.array([1], dtype="<i8"),
        times=path.times.astype("<f8"),
        states=path.states.astype("<f8"),
        counts=np.array([int(path.counts)], dtype="<i8"),
        meta=np.array(
            [path.N, path.seed, path.stream, int(path.fadeout),
             -1 if path.incidence is None else path.incidence],
            dtype="<i8",
        ),
        t_end=np.array([path.t_end], dtype="<f8"),
        scheme=np.array(path.scheme),
        compartments=np.array(list(path.compartments)),
        events=(path.events if path.events is not None
                else np.array([], dtype="<i8")).astype("<i8"),
        fires=(path.fires if path.fires is not None
               else np.array([], dtype="<i8")).astype("<i8"),
    )


def read_path_npz(fp) -> Path:
    with np.load(fp, allow_pickle=False) as z:
        if int(z["version"][0]) != 1:
            raise ValueError("unsupported binary path version")
        counts = bool(z["counts"][0])
        states = z["states"].astype(int) if counts else z["states"]
        meta = z["meta"]
        events = z["events"]
        fires = z["fires"]
        inc = int(meta[4])
        return Path(
            scheme=str(z["scheme"]), N=int(meta[0]), times=z["times"],
            states=states, seed=int(meta[1]), stream=int(meta[2]),
            t_end=float(z["t_end"][0]),
            compartments=tuple(str(c) for c in z["compartments"]),
            fadeout=bool(meta[3]),
            events=events if events.size else None,
            fires=fires if fires.size else None,
            incidence=None if inc < 0 else inc,
        )
