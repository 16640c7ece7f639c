"""Deterministic machinery along the mean-field flow.

Everything the contrast needs besides the data lives here: the solution
x_theta(t) of dx/dt = b(t, theta, x), the resolvent Phi(t, u) of the flow
linearized along x_theta, parameter sensitivities dx/dtheta_i, and the
per-interval weight matrices

    S_k = (1/Delta_k) * int_{t_{k-1}}^{t_k} Phi(t_k, u) Sigma(u) Phi(t_k, u)^T du.

A FlowCache holds all of it for one parameter value on one observation grid.
The integrator is fixed-step classical RK4 on an internal mesh that refines
the observation grid (deterministic and reproducible); S_k is accumulated by
the same RK4 sweep that transports Phi backward across each interval, so the
quadrature inherits the integrator's fourth-order accuracy. Irregular
observation grids are handled throughout with per-interval Delta_k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import model_core
from .model_core import TransitionTable
from .params import ParamVector

__all__ = ["FlowError", "FlowCache", "solve_ode", "resolvent", "sensitivities",
           "weight_matrix"]

# How far outside [0,1]^p the solution may wander before we call it a blow-up.
_BOX_TOL = 1e-7


class FlowError(RuntimeError):
    """ODE solution left the unit box or the flow machinery broke down."""


def _theta_values(table: TransitionTable, theta) -> np.ndarray:
    if isinstance(theta, ParamVector):
        return theta.values
    return np.asarray(theta, dtype=float)


def _build_mesh(obs_times: np.ndarray, h_max: float):
    """Per-interval uniform refinement of the observation grid to steps <= h_max."""
    t = np.asarray(obs_times, dtype=float)
    if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("observation times must be strictly increasing, length >= 2")
    deltas = np.diff(t)
    nsub = np.maximum(1, np.ceil(deltas / h_max - 1e-12).astype(int))
    nodes = [np.array([t[0]])]
    for k in range(len(deltas)):
        nodes.append(np.linspace(t[k], t[k + 1], nsub[k] + 1)[1:])
    t_nodes = np.concatenate(nodes)
    obs_node_idx = np.concatenate([[0], np.cumsum(nsub)])
    return t_nodes, nsub, deltas, obs_node_idx


def _forward_rk4_p2(fdrift, x0, t_nodes):
    """Scalar RK4 in plain floats for two-compartment tables (hot path)."""
    s = float(x0[0])
    i = float(x0[1])
    xs = [(s, i)]
    fs = []
    tn = t_nodes
    for j in range(len(tn) - 1):
        t = tn[j]
        h = tn[j + 1] - t
        h2 = 0.5 * h
        a1, b1 = fdrift(t, s, i)
        a2, b2 = fdrift(t + h2, s + h2 * a1, i + h2 * b1)
        a3, b3 = fdrift(t + h2, s + h2 * a2, i + h2 * b2)
        a4, b4 = fdrift(t + h, s + h * a3, i + h * b3)
        fs.append((a1, b1))
        s += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        i += (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        xs.append((s, i))
    fs.append(fdrift(tn[-1], s, i))
    return np.array(xs), np.array(fs)


def _forward_rk4_generic(table, th, x0, t_nodes):
    p = table.p

    def b(t, y):
        rates = table.rates(t, tuple(y), th)
        return rates @ table.jumps.astype(float)

    x = np.empty((len(t_nodes), p))
    f = np.empty((len(t_nodes), p))
    x[0] = x0
    for j in range(len(t_nodes) - 1):
        t = t_nodes[j]
        h = t_nodes[j + 1] - t
        y = x[j]
        k1 = b(t, y)
        k2 = b(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = b(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = b(t + h, y + h * k3)
        f[j] = k1
        x[j + 1] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    f[-1] = b(t_nodes[-1], x[-1])
    return x, f


def _sandwich(A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Batched A S A^T."""
    return (A @ S) @ A.transpose(0, 2, 1)


@dataclass
class FlowCache:
    """Flow quantities for one (table, theta, x0, observation grid).

    Immutable after build; safe to share across threads/workers. Sensitivity
    trajectories are computed lazily on first use.
    """

    table: TransitionTable
    theta: np.ndarray
    x0: np.ndarray
    obs_times: np.ndarray
    h_max: float
    t_nodes: np.ndarray
    t_mid: np.ndarray
    x_nodes: np.ndarray
    x_mid: np.ndarray
    J_nodes: np.ndarray
    J_mid: np.ndarray
    Sig_nodes: np.ndarray
    Sig_mid: np.ndarray
    deltas: np.ndarray
    nsub: np.ndarray
    obs_node_idx: np.ndarray
    Phi_k: np.ndarray      # (n, p, p) resolvent over each observation interval
    S_k: np.ndarray        # (n, p, p) weight matrices
    _H_nodes: Optional[np.ndarray] = None   # (M+1, p, m) sensitivities, lazy

    # -- construction -------------------------------------------------------

    @staticmethod
    def build(table: TransitionTable, theta, x0, obs_times,
              h_max: Optional[float] = None) -> "FlowCache":
        th = _theta_values(table, theta)
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (table.p,):
            raise ValueError("x0 must have length p")
        if np.any(x0 < -_BOX_TOL) or np.any(x0 > 1.0 + _BOX_TOL):
            raise FlowError("x0 outside the unit box")
        h = float(h_max if h_max is not None else table.mesh_step)
        t_nodes, nsub, deltas, obs_idx = _build_mesh(np.asarray(obs_times, float), h)

        if table.p == 2:
            fdrift = model_core.scalar_drift_fn(table, th)
            x_nodes, f_nodes = _forward_rk4_p2(fdrift, x0, t_nodes)
        else:
            x_nodes, f_nodes = _forward_rk4_generic(table, th, x0, t_nodes)

        if not np.all(np.isfinite(x_nodes)):
            raise FlowError("ODE solution blew up")
        if x_nodes.min() < -_BOX_TOL or x_nodes.max() > 1.0 + _BOX_TOL:
            raise FlowError("ODE solution left the unit box")

        hsub = np.diff(t_nodes)
        t_mid = t_nodes[:-1] + 0.5 * hsub
        # O(h^4) Hermite midpoints from node values and slopes.
        x_mid = (0.5 * (x_nodes[:-1] + x_nodes[1:])
                 + (hsub[:, None] / 8.0) * (f_nodes[:-1] - f_nodes[1:]))

        ycols_n = tuple(x_nodes[:, i] for i in range(table.p))
        ycols_m = tuple(x_mid[:, i] for i in range(table.p))
        _, J_nodes, Sig_nodes = model_core.eval_fields(table, t_nodes, ycols_n, th)
        _, J_mid, Sig_mid = model_core.eval_fields(table, t_mid, ycols_m, th)

        cache = FlowCache(
            table=table, theta=th, x0=x0,
            obs_times=np.asarray(obs_times, dtype=float), h_max=h,
            t_nodes=t_nodes, t_mid=t_mid, x_nodes=x_nodes, x_mid=x_mid,
            J_nodes=J_nodes, J_mid=J_mid,
            Sig_nodes=Sig_nodes, Sig_mid=Sig_mid,
            deltas=deltas, nsub=nsub, obs_node_idx=obs_idx,
            Phi_k=np.empty(0), S_k=np.empty(0),
        )
        cache._interval_pass()
        return cache

    def _interval_pass(self):
        """Backward RK4 per observation interval, batched over intervals.

        Transports W(u) = Phi(t_k, u) from u = t_k down to t_{k-1} while
        accumulating G(u) = int_u^{t_k} W Sigma W^T dv; then S_k = G / Delta_k.
        """
        p = self.table.p
        n = len(self.obs_times) - 1
        Phi = np.empty((n, p, p))
        S = np.empty((n, p, p))
        groups: dict[int, list[int]] = {}
        for k in range(n):
            groups.setdefault(int(self.nsub[k]), []).append(k)
        eye = np.eye(p)
        for c, klist in groups.items():
            ks = np.asarray(klist, dtype=int)
            starts = self.obs_node_idx[ks]
            step = (self.deltas[ks] / c)[:, None, None]
            s = -step
            W = np.tile(eye, (len(ks), 1, 1))
            G = np.zeros((len(ks), p, p))
            for j in range(c - 1, -1, -1):
                idx = starts + j
                Jn0 = self.J_nodes[idx]
                Jn1 = self.J_nodes[idx + 1]
                Jm = self.J_mid[idx]
                Sn0 = self.Sig_nodes[idx]
                Sn1 = self.Sig_nodes[idx + 1]
                Sm = self.Sig_mid[idx]
                k1W = -(W @ Jn1)
                k1G = -_sandwich(W, Sn1)
                W2 = W + 0.5 * s * k1W
                k2W = -(W2 @ Jm)
                k2G = -_sandwich(W2, Sm)
                W3 = W + 0.5 * s * k2W
                k3W = -(W3 @ Jm)
                k3G = -_sandwich(W3, Sm)
                W4 = W + s * k3W
                k4W = -(W4 @ Jn0)
                k4G = -_sandwich(W4, Sn0)
                W = W + (s / 6.0) * (k1W + 2.0 * k2W + 2.0 * k3W + k4W)
                G = G + (s / 6.0) * (k1G + 2.0 * k2G + 2.0 * k3G + k4G)
            Phi[ks] = W
            G = 0.5 * (G + G.transpose(0, 2, 1))
            S[ks] = G / self.deltas[ks][:, None, None]
        self.Phi_k = Phi
        self.S_k = S

    # -- views ---------------------------------------------------------------

    @property
    def n_intervals(self) -> int:
        return len(self.obs_times) - 1

    @property
    def x_obs(self) -> np.ndarray:
        """x_theta at the observation times, (n+1, p)."""
        return self.x_nodes[self.obs_node_idx]

    def node_index(self, t: float) -> int:
        j = int(np.searchsorted(self.t_nodes, t - 1e-9))
        if j >= len(self.t_nodes) or abs(self.t_nodes[j] - t) > 1e-8 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not an internal mesh node")
        return j

    # -- sensitivities --------------------------------------------------------

    @property
    def free_idx(self) -> np.ndarray:
        return np.nonzero(self.table.params.free)[0]

    def sensitivity_nodes(self) -> np.ndarray:
        """dx_theta/dtheta_i on the mesh for the table's free parameters.

        Solves the variational system dH/dt = J(t) H + dB/dtheta along the
        cached trajectory; shape (M+1, p, m).
        """
        if self._H_nodes is None:
            p = self.table.p
            fidx = self.free_idx
            ycols_n = tuple(self.x_nodes[:, i] for i in range(p))
            ycols_m = tuple(self.x_mid[:, i] for i in range(p))
            Pn = model_core.eval_dbdtheta(self.table, self.t_nodes, ycols_n,
                                          self.theta, fidx)
            Pm = model_core.eval_dbdtheta(self.table, self.t_mid, ycols_m,
                                          self.theta, fidx)
            M = len(self.t_nodes) - 1
            H = np.zeros((M + 1, p, len(fidx)))
            hsub = np.diff(self.t_nodes)
            Jn = self.J_nodes
            Jm = self.J_mid
            for j in range(M):
                h = hsub[j]
                Hj = H[j]
                k1 = Jn[j] @ Hj + Pn[j]
                H2 = Hj + 0.5 * h * k1
                k2 = Jm[j] @ H2 + Pm[j]
                H3 = Hj + 0.5 * h * k2
                k3 = Jm[j] @ H3 + Pm[j]
                H4 = Hj + h * k3
                k4 = Jn[j + 1] @ H4 + Pn[j + 1]
                H[j + 1] = Hj + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            self._H_nodes = H
        return self._H_nodes

    def sensitivity_obs(self) -> np.ndarray:
        """Sensitivities at the observation times, (n+1, p, m)."""
        return self.sensitivity_nodes()[self.obs_node_idx]

    # -- diagnostics -----------------------------------------------------------

    def refinement_check(self) -> dict[str, float]:
        """Mesh-halving convergence diagnostic for x, Phi and S."""
        finer = FlowCache.build(self.table, self.theta, self.x0,
                                self.obs_times, h_max=self.h_max / 2.0)
        dx = float(np.abs(self.x_obs - finer.x_obs).max())
        dphi = float(np.abs(self.Phi_k - finer.Phi_k).max())
        sscale = float(np.abs(finer.S_k).max())
        ds = float(np.abs(self.S_k - finer.S_k).max() / max(sscale, 1e-300))
        return {"dx_obs": dx, "dphi": dphi, "ds_rel": ds}


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def solve_ode(table: TransitionTable, theta, x0, grid,
              h_max: Optional[float] = None) -> np.ndarray:
    """x_theta on the given strictly increasing grid (RK4 on a refined mesh)."""
    cache = FlowCache.build(table, theta, x0, grid, h_max=h_max)
    return cache.x_obs


def resolvent(cache: FlowCache, t: float, u: float) -> np.ndarray:
    """Phi(t, u) along the cached flow; t and u must be internal mesh nodes.

    Computed as the ordered product of per-step RK4 update matrices, so the
    semigroup identity Phi(t, u) = Phi(t, s) Phi(s, u) holds to rounding on
    mesh nodes.
    """
    p = cache.table.p
    if u > t + 1e-12:
        raise ValueError("resolvent requires u <= t")
    j0 = cache.node_index(u)
    j1 = cache.node_index(t)
    W = np.eye(p)
    hsub = np.diff(cache.t_nodes)
    for j in range(j0, j1):
        h = hsub[j]
        J0 = cache.J_nodes[j]
        Jm = cache.J_mid[j]
        J1 = cache.J_nodes[j + 1]
        K1 = J0
        K2 = Jm @ (np.eye(p) + 0.5 * h * K1)
        K3 = Jm @ (np.eye(p) + 0.5 * h * K2)
        K4 = J1 @ (np.eye(p) + h * K3)
        U = np.eye(p) + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        W = U @ W
    return W


def sensitivities(table: TransitionTable, theta, x0, grid,
                  h_max: Optional[float] = None) -> np.ndarray:
    """dx_theta(t)/dtheta_i on the grid for the table's free parameters."""
    cache = FlowCache.build(table, theta, x0, grid, h_max=h_max)
    return cache.sensitivity_obs()


def weight_matrix(cache: FlowCache, k: int) -> np.ndarray:
    """S_k for observation interval k (1-based, matching t_{k-1} -> t_k)."""
    if not 1 <= k <= cache.n_intervals:
        raise IndexError(f"interval index {k} outside 1..{cache.n_intervals}")
    return cache.S_k[k - 1]
