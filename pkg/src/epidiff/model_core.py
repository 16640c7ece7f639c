"""Transition-table models and their mechanically derived drift and diffusion.

A model is a list of (jump vector, normalized rate function) pairs on the
unit box of compartment proportions. Everything downstream is assembled from
that table:

* drift              b(t, theta, y)      = sum_l  l * beta_l(t, y, theta)
* diffusion matrix   Sigma(t, theta, y)  = sum_l  beta_l(t, y, theta) * l l^T
* integer jump rates alpha_l(t, z)       = N * beta_l(t, z / N, theta)

Rate functions are written ufunc-style (scalar or array arguments behave the
same), so a single closure serves both the scalar simulation loops and the
vectorized mesh evaluations of the deterministic machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .numutil import chol_psd
from .params import ParamVector

__all__ = [
    "RateDomainError",
    "Transition",
    "TransitionTable",
    "drift",
    "diffusion_matrix",
    "diffusion_sqrt",
    "jump_rates",
]

# Relative step for the central finite-difference fallbacks (state and
# parameter Jacobians of the rate functions).
FD_REL_STEP = 1e-6


class RateDomainError(ValueError):
    """A rate function returned a negative or non-finite value."""


@dataclass(frozen=True)
class Transition:
    """One mechanistic transition: a jump vector and its normalized rate.

    ``rate(t, y, theta)`` takes time in days, ``y`` a length-p sequence of
    proportions (scalars or arrays), and the full canonical parameter value
    array; it returns the nonnegative normalized rate. ``d_rate_dy`` and
    ``d_rate_dtheta`` are optional analytic derivatives with the same calling
    convention, returning length-p (resp. length-n_params) sequences; central
    finite differences are used when they are absent. ``rate_sup`` bounds the
    rate over a time window [t0, t1] at frozen state, which the thinning
    simulator of time-dependent tables requires.
    """

    jump: np.ndarray
    rate: Callable
    d_rate_dy: Optional[Callable] = None
    d_rate_dtheta: Optional[Callable] = None
    rate_sup: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        j = np.asarray(self.jump, dtype=int)
        if j.ndim != 1 or not j.any():
            raise ValueError("jump must be a nonzero integer vector")
        object.__setattr__(self, "jump", j)


@dataclass(frozen=True)
class TransitionTable:
    """A density-dependent jump model: state dimension, transitions, parameters.

    ``params`` is the canonical parameter template (names, defaults, bounds,
    free mask) in the coordinates the estimator works in. ``make_drift``
    optionally returns a fused scalar drift closure ``f(t, *y) -> tuple`` for
    hot loops; the generic transition loop is the fallback.
    """

    p: int
    compartments: tuple[str, ...]
    transitions: tuple[Transition, ...]
    params: ParamVector
    time_dependent: bool = False
    name: str = ""
    make_drift: Optional[Callable] = None
    fadeout_coord: Optional[int] = None
    jump_bound: int = 1
    mesh_step: float = 0.05   # max internal RK mesh step (days)
    em_step: float = 0.01     # max Euler-Maruyama step (days)
    simplex: bool = False     # admissible states also satisfy sum(z) <= N

    def __post_init__(self):
        if not self.transitions:
            raise ValueError("transition list must be nonempty")
        if len(self.compartments) != self.p:
            raise ValueError("compartment names must match state dimension")
        for tr in self.transitions:
            if tr.jump.shape != (self.p,):
                raise ValueError("jump vector length must equal state dimension")
            if np.abs(tr.jump).max() > self.jump_bound:
                raise ValueError("jump exceeds declared bound")
        jm = np.stack([tr.jump for tr in self.transitions])
        object.__setattr__(self, "_jumps", jm)

    @property
    def jumps(self) -> np.ndarray:
        """(n_transitions, p) stacked jump vectors."""
        return self._jumps

    def rates(self, t, y, theta: np.ndarray, check: bool = False) -> np.ndarray:
        """Evaluate all normalized rates; stacked on the leading axis."""
        shape = np.broadcast_shapes(
            np.shape(t), *[np.shape(c) for c in y]
        )
        out = np.empty((len(self.transitions),) + shape, dtype=float)
        for i, tr in enumerate(self.transitions):
            out[i] = tr.rate(t, y, theta)
        if check and (not np.all(np.isfinite(out)) or np.any(out < -1e-14)):
            bad = [
                self.transitions[i].name or f"#{i}"
                for i in range(len(self.transitions))
                if not np.all(np.isfinite(out[i])) or np.any(out[i] < -1e-14)
            ]
            raise RateDomainError(f"negative or non-finite rate from {bad}")
        return out


# ---------------------------------------------------------------------------
# Derived fields
# ---------------------------------------------------------------------------

def drift(table: TransitionTable, t, theta, y) -> np.ndarray:
    """Drift vector b = sum_l l * beta_l at (t, theta, y).

    ``y`` is a length-p sequence; scalar entries give a (p,) result, array
    entries of shape s give (p,) + s.
    """
    th = _theta_values(table, theta)
    rates = table.rates(t, y, th, check=True)
    return np.tensordot(rates, table.jumps.astype(float), axes=([0], [0]))


def diffusion_matrix(table: TransitionTable, t, theta, y) -> np.ndarray:
    """Diffusion matrix Sigma = sum_l beta_l * l l^T; symmetric PSD."""
    th = _theta_values(table, theta)
    rates = table.rates(t, y, th, check=True)
    jl = table.jumps.astype(float)
    outer = jl[:, :, None] * jl[:, None, :]          # (L, p, p)
    return np.tensordot(rates, outer, axes=([0], [0]))


def diffusion_sqrt(sigma: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Lower-triangular square root of Sigma (jitter-guarded Cholesky)."""
    return chol_psd(sigma, tol=tol)


def jump_rates(table: TransitionTable, t, theta, N: int, z) -> np.ndarray:
    """Integer-state event rates alpha_l(t, z) = N * beta_l(t, z/N).

    A transition whose jump would leave the admissible state set ({0..N}^p,
    intersected with sum(z) <= N for simplex tables) gets rate exactly 0, so
    no path can escape it.
    """
    th = _theta_values(table, theta)
    z = np.asarray(z)
    y = tuple(z[i] / N for i in range(table.p))
    rates = N * table.rates(t, y, th)
    if not np.all(np.isfinite(rates)):
        raise RateDomainError("non-finite integer-state rate")
    target = z[None, :] + table.jumps
    ok = np.all((target >= 0) & (target <= N), axis=1)
    if table.simplex:
        ok &= target.sum(axis=1) <= N
    rates = np.where(ok, np.maximum(rates, 0.0), 0.0)
    return rates


def _theta_values(table: TransitionTable, theta) -> np.ndarray:
    if isinstance(theta, ParamVector):
        return theta.values
    th = np.asarray(theta, dtype=float)
    if th.shape != (len(table.params.names),):
        raise ValueError(
            f"expected {len(table.params.names)} parameter values, got shape {th.shape}"
        )
    return th


# ---------------------------------------------------------------------------
# Vectorized mesh evaluation (state Jacobian, Sigma, parameter derivatives)
# with finite-difference fallbacks when a transition lacks analytic ones.
# ---------------------------------------------------------------------------

def _as_full(res, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(res, dtype=float), shape)


def _rate_dy_fd(tr: Transition, t, y, th, shape) -> list[np.ndarray]:
    cols = []
    for i in range(len(y)):
        yi = np.asarray(y[i], dtype=float)
        h = FD_REL_STEP * np.maximum(1.0, np.abs(yi))
        yp = list(y)
        ym = list(y)
        yp[i] = yi + h
        ym[i] = yi - h
        cols.append(_as_full((tr.rate(t, yp, th) - tr.rate(t, ym, th)) / (2 * h), shape))
    return cols


def _rate_dth_fd(tr: Transition, t, y, th, j: int, shape) -> np.ndarray:
    h = FD_REL_STEP * max(1.0, abs(th[j]))
    thp = th.copy()
    thm = th.copy()
    thp[j] += h
    thm[j] -= h
    return _as_full((tr.rate(t, y, thp) - tr.rate(t, y, thm)) / (2 * h), shape)


def eval_fields(table: TransitionTable, t, y, theta,
                want_jac: bool = True, want_sigma: bool = True):
    """Drift, state Jacobian of the drift, and Sigma on a batch of points.

    ``t``: scalar or (M,); ``y``: length-p sequence of matching entries.
    Returns (b, J, Sigma) with shapes (M, p), (M, p, p), (M, p, p); entries
    are None when not requested.
    """
    th = _theta_values(table, theta)
    shape = np.broadcast_shapes(np.shape(t), *[np.shape(c) for c in y])
    M = int(np.prod(shape)) if shape else 1
    p = table.p
    b = np.zeros(shape + (p,), dtype=float)
    J = np.zeros(shape + (p, p), dtype=float) if want_jac else None
    Sig = np.zeros(shape + (p, p), dtype=float) if want_sigma else None
    del M
    for tr in table.transitions:
        r = _as_full(tr.rate(t, y, th), shape)
        l = tr.jump.astype(float)
        b += r[..., None] * l
        if want_sigma:
            Sig += r[..., None, None] * (l[:, None] * l[None, :])
        if want_jac:
            if tr.d_rate_dy is not None:
                g = tr.d_rate_dy(t, y, th)
                grad = [_as_full(g[i], shape) for i in range(p)]
            else:
                grad = _rate_dy_fd(tr, t, y, th, shape)
            for i in range(p):
                J[..., :, i] += grad[i][..., None] * l
    return b, J, Sig


def eval_dbdtheta(table: TransitionTable, t, y, theta, param_idx: Sequence[int]) -> np.ndarray:
    """Partial drift derivative w.r.t. selected parameters: (..., p, m)."""
    th = _theta_values(table, theta)
    shape = np.broadcast_shapes(np.shape(t), *[np.shape(c) for c in y])
    p = table.p
    out = np.zeros(shape + (p, len(param_idx)), dtype=float)
    for tr in table.transitions:
        l = tr.jump.astype(float)
        if tr.d_rate_dtheta is not None:
            g = tr.d_rate_dtheta(t, y, th)
            for m, j in enumerate(param_idx):
                gj = _as_full(g[j], shape)
                out[..., :, m] += gj[..., None] * l
        else:
            for m, j in enumerate(param_idx):
                gj = _rate_dth_fd(tr, t, y, th, j, shape)
                out[..., :, m] += gj[..., None] * l
    return out


def scalar_drift_fn(table: TransitionTable, theta) -> Callable:
    """Plain-float drift closure ``f(t, *y) -> tuple`` for hot loops.

    Uses the table's fused implementation when present, otherwise a generic
    transition loop over the same rate closures.
    """
    th = _theta_values(table, theta)
    if table.make_drift is not None:
        return table.make_drift(th)
    jumps = [tuple(float(v) for v in tr.jump) for tr in table.transitions]
    rates = [tr.rate for tr in table.transitions]
    p = table.p

    def f(t, *y):
        acc = [0.0] * p
        for jmp, rate in zip(jumps, rates):
            r = rate(t, y, th)
            for i in range(p):
                if jmp[i] != 0.0:
                    acc[i] += jmp[i] * r
        return tuple(acc)

    return f
