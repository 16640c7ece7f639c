"""Complete-observation maximum likelihood baseline for the SIR jump process.

With every jump observed, the infection and recovery intensities form a
multiplicative-intensity counting process whose likelihood maximizer is
closed-form:

    lam_hat   = n_inf / int_0^T S(u) I(u) / N du
    gamma_hat = n_rec / int_0^T I(u) du

with the exposure integrals exact sums over inter-event intervals. The
observed information is diag(n_inf / lam^2, n_rec / gamma^2); its inverse is
transported to (R0, d) by the delta method. This estimator is the reference
the discrete-observation contrast is compared against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .contrast import EstimationReport
from .models import sir_r0d_from_rates, sir_r0d_jacobian
from .params import ParamVector
from .simulate import Path

__all__ = ["CompletePath", "sir_mle", "sir_loglik"]


@dataclass(frozen=True)
class CompletePath:
    """Event-level record of every jump: times, types, integer states."""

    times: np.ndarray        # (K,), event times including t=0
    states: np.ndarray       # (K, 2) integer (S, I) after each event
    events: np.ndarray       # (K-1,) transition index per event
    N: int
    t_end: float

    @staticmethod
    def from_path(path: Path) -> "CompletePath":
        if path.scheme != "exact" or path.events is None:
            raise ValueError("complete observation requires an exact event path")
        return CompletePath(
            times=path.times, states=path.states, events=path.events,
            N=path.N, t_end=path.t_end,
        )

    def exposures(self) -> tuple[float, float]:
        """(int S I / N dt, int I dt) as exact sums over constancy intervals."""
        dt = np.diff(np.append(self.times, self.t_end))
        S = self.states[:, 0].astype(float)
        I = self.states[:, 1].astype(float)
        return float(np.sum(S * I / self.N * dt)), float(np.sum(I * dt))


def sir_mle(path, N: Optional[int] = None,
            infection_event: int = 0, recovery_event: int = 1) -> EstimationReport:
    """Closed-form MLE from a completely observed SIR path.

    Returns the same report shape as the contrast estimator, in (R0, d)
    coordinates with the delta-method covariance. A path with zero events of
    one type yields an undefined estimate: the report is flagged
    (``converged`` False, NaN estimates) rather than raising.
    """
    cp = path if isinstance(path, CompletePath) else CompletePath.from_path(path)
    N = int(N if N is not None else cp.N)
    n_inf = int(np.sum(cp.events == infection_event))
    n_rec = int(np.sum(cp.events == recovery_event))
    exp_si, exp_i = cp.exposures()

    lam = n_inf / exp_si if n_inf > 0 and exp_si > 0 else float("nan")
    gam = n_rec / exp_i if n_rec > 0 and exp_i > 0 else float("nan")
    defined = math.isfinite(lam) and math.isfinite(gam)
    if defined:
        r0, d = sir_r0d_from_rates(lam, gam)
        cov_rates = np.diag([lam**2 / n_inf, gam**2 / n_rec])
        J = sir_r0d_jacobian(lam, gam)
        cov = J @ cov_rates @ J.T
        info = np.linalg.inv(cov * N)   # keeps cov == (N * info)^{-1}
        loglik = sir_loglik(cp, lam, gam, n_inf=n_inf, n_rec=n_rec,
                            exp_si=exp_si, exp_i=exp_i)
    else:
        r0 = d = float("nan")
        cov = np.full((2, 2), np.nan)
        info = np.full((2, 2), np.nan)
        loglik = float("nan")

    theta_hat = ParamVector.build(
        [("R0", r0, 1e-12, np.inf), ("d", d, 1e-12, np.inf)],
        free=("R0", "d"),
    )
    rep = EstimationReport(
        theta_hat=theta_hat,
        u_min=-loglik,
        info=info,
        cov=cov,
        free_names=("R0", "d"),
        diagnostics={
            "estimator": "mle",
            "converged": defined,
            "defined": defined,
            "n_inf": n_inf,
            "n_rec": n_rec,
            "exposure_si": exp_si,
            "exposure_i": exp_i,
            "lam": lam,
            "gamma": gam,
            "loglik": loglik,
            "grad_norm": 0.0 if defined else float("nan"),
            "n_fev": 0,
            "n_fail": 0,
        },
    )
    if defined:
        rep.add_ellipsoids()
    return rep


def sir_loglik(cp: CompletePath, lam: float, gamma: float,
               infection_event: int = 0, recovery_event: int = 1,
               n_inf: Optional[int] = None, n_rec: Optional[int] = None,
               exp_si: Optional[float] = None, exp_i: Optional[float] = None) -> float:
    """Exact log-likelihood of a complete SIR event record (up to a constant
    not depending on the rates)."""
    if n_inf is None:
        n_inf = int(np.sum(cp.events == infection_event))
    if n_rec is None:
        n_rec = int(np.sum(cp.events == recovery_event))
    if exp_si is None or exp_i is None:
        exp_si, exp_i = cp.exposures()
    if lam <= 0 or gamma <= 0:
        return -math.inf
    return (n_inf * math.log(lam) - lam * exp_si
            + n_rec * math.log(gamma) - gamma * exp_i)
