"""Built-in epidemic models: SIR and seasonal SIRS with demography.

Both are two-compartment tables over proportions (s, i) of susceptible and
infected individuals; the removed class is implicit. The SIR table comes in
two parameterizations: estimation coordinates (R0, d) = (lambda/gamma,
1/gamma), which the contrast estimator works in, and natural rates
(lambda, gamma) for the complete-observation likelihood baseline.

The seasonal SIRS uses estimation coordinates (R0, d, 10*lambda1,
1/(delta*T_per)) with demography mu, immigration eta and period T_per held
fixed; transmission is lambda(t) = lambda0 * (1 + lambda1*sin(2 pi t/T_per)).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .model_core import Transition, TransitionTable
from .params import ParamVector

__all__ = [
    "sir_table",
    "sirs_table",
    "model_registry",
    "get_model",
    "sir_rates_from_r0d",
    "sir_r0d_from_rates",
    "sir_r0d_jacobian",
    "sirs_estimation_from_natural",
    "sirs_natural_from_estimation",
    "choose_horizon",
]

DAYS_PER_YEAR = 365.0


# ---------------------------------------------------------------------------
# SIR
# ---------------------------------------------------------------------------

def sir_table(style: str = "r0d") -> TransitionTable:
    """Single-outbreak SIR: jumps (-1,1) at rate lambda*s*i and (0,-1) at gamma*i.

    ``style`` selects the parameter coordinates: "r0d" for (R0, d) or
    "rates" for (lambda, gamma).
    """
    if style == "r0d":
        params = ParamVector.build(
            [("R0", 1.5, 0.2, 20.0), ("d", 3.0, 0.5, 50.0)],
            free=("R0", "d"),
        )

        def rate_inf(t, y, th):
            return (th[0] / th[1]) * y[0] * y[1]

        def d_inf_dy(t, y, th):
            lam = th[0] / th[1]
            return (lam * y[1], lam * y[0])

        def d_inf_dth(t, y, th):
            si = y[0] * y[1]
            return (si / th[1], -th[0] * si / th[1] ** 2)

        def rate_rec(t, y, th):
            return y[1] / th[1]

        def d_rec_dy(t, y, th):
            return (0.0, 1.0 / th[1])

        def d_rec_dth(t, y, th):
            return (0.0, -y[1] / th[1] ** 2)

        def make_drift(th):
            lam = th[0] / th[1]
            gam = 1.0 / th[1]

            def f(t, s, i):
                a = lam * s * i
                return (-a, a - gam * i)

            return f

    elif style == "rates":
        params = ParamVector.build(
            [("lam", 0.5, 0.01, 10.0), ("gamma", 1.0 / 3.0, 0.01, 5.0)],
            free=("lam", "gamma"),
        )

        def rate_inf(t, y, th):
            return th[0] * y[0] * y[1]

        def d_inf_dy(t, y, th):
            return (th[0] * y[1], th[0] * y[0])

        def d_inf_dth(t, y, th):
            return (y[0] * y[1], 0.0)

        def rate_rec(t, y, th):
            return th[1] * y[1]

        def d_rec_dy(t, y, th):
            return (0.0, th[1])

        def d_rec_dth(t, y, th):
            return (0.0, y[1])

        def make_drift(th):
            lam, gam = th[0], th[1]

            def f(t, s, i):
                a = lam * s * i
                return (-a, a - gam * i)

            return f

    else:
        raise ValueError(f"unknown SIR parameterization: {style!r}")

    transitions = (
        Transition(np.array([-1, 1]), rate_inf, d_inf_dy, d_inf_dth, name="infection"),
        Transition(np.array([0, -1]), rate_rec, d_rec_dy, d_rec_dth, name="recovery"),
    )
    return TransitionTable(
        p=2,
        compartments=("S", "I"),
        transitions=transitions,
        params=params,
        time_dependent=False,
        name="sir",
        make_drift=make_drift,
        fadeout_coord=1,
        simplex=True,
    )


# ---------------------------------------------------------------------------
# Seasonal SIRS with demography and immigration
# ---------------------------------------------------------------------------

def sirs_table() -> TransitionTable:
    """Recurrent-outbreak SIRS in estimation coordinates.

    Free parameters (R0, d, lam1x10, waning) with lam1x10 = 10*lambda1 and
    waning = 1/(delta*T_per); mu (birth/death), eta (immigration) and T_per
    are fixed. Transitions:

      (-1, 1)  lambda(t) * s * (i + eta)     infection (with immigration)
      (-1, 0)  mu * s                        death of a susceptible
      ( 0,-1)  (gamma + mu) * i              recovery or death of an infected
      ( 1, 0)  mu + delta * (1 - s - i)      birth / loss of immunity
    """
    params = ParamVector.build(
        [
            ("R0", 1.5, 0.2, 20.0),
            ("d", 3.0, 0.5, 50.0),
            ("lam1x10", 1.5, 1e-3, 9.99),
            ("waning", 2.0, 0.05, 50.0),
            ("mu", 1.0 / (50.0 * DAYS_PER_YEAR), 0.0, 1.0),
            ("eta", 1e-6, 0.0, 1e-2),
            ("T_per", DAYS_PER_YEAR, 1.0, 10_000.0),
        ],
        free=("R0", "d", "lam1x10", "waning"),
    )

    # th layout: 0=R0, 1=d, 2=lam1x10, 3=waning, 4=mu, 5=eta, 6=T_per
    def _lam(t, th):
        return (th[0] / th[1]) * (1.0 + (th[2] / 10.0) * np.sin(2.0 * np.pi * t / th[6]))

    def rate_inf(t, y, th):
        return _lam(t, th) * y[0] * (y[1] + th[5])

    def d_inf_dy(t, y, th):
        lt = _lam(t, th)
        return (lt * (y[1] + th[5]), lt * y[0])

    def d_inf_dth(t, y, th):
        s, i = y[0], y[1]
        base = s * (i + th[5])
        sin_t = np.sin(2.0 * np.pi * t / th[6])
        season = 1.0 + (th[2] / 10.0) * sin_t
        lam0 = th[0] / th[1]
        dT = lam0 * (th[2] / 10.0) * np.cos(2.0 * np.pi * t / th[6]) * (
            -2.0 * np.pi * t / th[6] ** 2
        )
        return (
            season * base / th[1],                 # R0
            -th[0] * season * base / th[1] ** 2,   # d
            lam0 * sin_t * base / 10.0,            # lam1x10
            0.0 * base,                            # waning
            0.0 * base,                            # mu
            _lam(t, th) * s,                       # eta
            dT * base,                             # T_per
        )

    def sup_inf(t0, t1, y, th):
        # sup of lambda(t) over [t0, t1] at frozen state: seasonal peak if the
        # window contains one, else the larger endpoint.
        om = 2.0 * math.pi / th[6]
        s0, s1 = math.sin(om * t0), math.sin(om * t1)
        peak = math.ceil((t0 - th[6] / 4.0) / th[6]) * th[6] + th[6] / 4.0
        m = 1.0 if (t1 - t0 >= th[6] or t0 <= peak <= t1) else max(s0, s1)
        lam_max = (th[0] / th[1]) * (1.0 + (th[2] / 10.0) * m)
        return lam_max * y[0] * (y[1] + th[5])

    def rate_sdeath(t, y, th):
        return th[4] * y[0]

    def d_sdeath_dy(t, y, th):
        return (th[4], 0.0)

    def d_sdeath_dth(t, y, th):
        z = 0.0 * y[0]
        return (z, z, z, z, y[0], z, z)

    def rate_rem(t, y, th):
        return (1.0 / th[1] + th[4]) * y[1]

    def d_rem_dy(t, y, th):
        return (0.0, 1.0 / th[1] + th[4])

    def d_rem_dth(t, y, th):
        z = 0.0 * y[1]
        return (z, -y[1] / th[1] ** 2, z, z, y[1], z, z)

    def rate_replen(t, y, th):
        delta = 1.0 / (th[3] * th[6])
        return th[4] + delta * (1.0 - y[0] - y[1])

    def d_replen_dy(t, y, th):
        delta = 1.0 / (th[3] * th[6])
        return (-delta, -delta)

    def d_replen_dth(t, y, th):
        rem = 1.0 - y[0] - y[1]
        z = 0.0 * rem
        return (
            z,
            z,
            z,
            -rem / (th[3] ** 2 * th[6]),
            1.0 + z,
            z,
            -rem / (th[3] * th[6] ** 2),
        )

    def _const_sup(rate):
        return lambda t0, t1, y, th: rate(t0, y, th)

    transitions = (
        Transition(np.array([-1, 1]), rate_inf, d_inf_dy, d_inf_dth,
                   rate_sup=sup_inf, name="infection"),
        Transition(np.array([-1, 0]), rate_sdeath, d_sdeath_dy, d_sdeath_dth,
                   rate_sup=_const_sup(rate_sdeath), name="s-death"),
        Transition(np.array([0, -1]), rate_rem, d_rem_dy, d_rem_dth,
                   rate_sup=_const_sup(rate_rem), name="removal"),
        Transition(np.array([1, 0]), rate_replen, d_replen_dy, d_replen_dth,
                   rate_sup=_const_sup(rate_replen), name="replenish"),
    )

    def make_drift(th):
        lam0 = th[0] / th[1]
        lam1 = th[2] / 10.0
        gam_mu = 1.0 / th[1] + th[4]
        delta = 1.0 / (th[3] * th[6])
        mu = th[4]
        eta = th[5]
        om = 2.0 * math.pi / th[6]
        sin = math.sin

        def f(t, s, i):
            a = lam0 * (1.0 + lam1 * sin(om * t)) * s * (i + eta)
            return (-a + delta * (1.0 - s - i) + mu * (1.0 - s), a - gam_mu * i)

        return f

    return TransitionTable(
        p=2,
        compartments=("S", "I"),
        transitions=transitions,
        params=params,
        time_dependent=True,
        name="sirs-seasonal",
        make_drift=make_drift,
        fadeout_coord=1,
        mesh_step=0.25,
        em_step=0.05,
        simplex=True,
    )


# ---------------------------------------------------------------------------
# Parameter coordinate changes (exact bijections, with Jacobians for
# covariance transport)
# ---------------------------------------------------------------------------

def sir_rates_from_r0d(r0: float, d: float) -> tuple[float, float]:
    if r0 <= 0 or d <= 0:
        raise ValueError("R0 and d must be positive")
    return r0 / d, 1.0 / d


def sir_r0d_from_rates(lam: float, gamma: float) -> tuple[float, float]:
    if lam <= 0 or gamma <= 0:
        raise ValueError("rates must be positive")
    return lam / gamma, 1.0 / gamma


def sir_r0d_jacobian(lam: float, gamma: float) -> np.ndarray:
    """d(R0, d)/d(lambda, gamma), for delta-method covariance transport."""
    return np.array([[1.0 / gamma, -lam / gamma**2],
                     [0.0, -1.0 / gamma**2]])


def sirs_estimation_from_natural(lam0: float, gamma: float, lam1: float,
                                 delta: float, t_per: float = DAYS_PER_YEAR):
    if min(lam0, gamma, delta) <= 0 or lam1 < 0:
        raise ValueError("rates must be positive (lam1 nonnegative)")
    return lam0 / gamma, 1.0 / gamma, 10.0 * lam1, 1.0 / (delta * t_per)


def sirs_natural_from_estimation(r0: float, d: float, lam1x10: float,
                                 waning: float, t_per: float = DAYS_PER_YEAR):
    if min(r0, d, waning) <= 0 or lam1x10 < 0:
        raise ValueError("out of domain")
    return r0 / d, 1.0 / d, lam1x10 / 10.0, 1.0 / (waning * t_per)


# ---------------------------------------------------------------------------
# Registry and horizon rule
# ---------------------------------------------------------------------------

def model_registry() -> dict[str, Callable[[], TransitionTable]]:
    return {"sir": sir_table, "sirs-seasonal": sirs_table}


def get_model(model_id: str) -> TransitionTable:
    reg = model_registry()
    if model_id not in reg:
        raise KeyError(f"unknown model id {model_id!r}; known: {sorted(reg)}")
    return reg[model_id]()


def choose_horizon(table: TransitionTable, theta, x0, threshold: float = 0.01,
                   t_max: float = 400.0, step: float = 0.05) -> float:
    """Observation horizon rule: first time after the infected-proportion peak
    where the deterministic trajectory drops below ``threshold``.
    """
    from .odeflow import solve_ode  # local import to avoid a cycle

    grid = np.arange(0.0, t_max + step, step)
    x = solve_ode(table, theta, x0, grid)
    i = x[:, table.fadeout_coord if table.fadeout_coord is not None else 1]
    k_peak = int(np.argmax(i))
    below = np.nonzero(i[k_peak:] < threshold)[0]
    if below.size == 0:
        raise ValueError("trajectory never falls below the threshold; raise t_max")
    return float(grid[k_peak + below[0]])
