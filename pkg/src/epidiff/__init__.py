"""epidiff: density-dependent epidemic jump processes, their small-noise
diffusion approximations, and minimum-contrast parameter estimation.

Quick tour:

>>> import numpy as np
>>> from epidiff import sir_table, gillespie, sample_at, ContrastContext, minimize
>>> table = sir_table()
>>> theta0 = np.array([1.5, 3.0])                    # (R0, d)
>>> path = gillespie(table, theta0, N=1000, z0=np.array([990, 10]), T=40.0, seed=1)
>>> obs = sample_at(path, np.arange(41.0))
>>> ctx = ContrastContext(table=table, obs=obs, N=1000, theta=table.params,
...                       x0=np.array([0.99, 0.01]))
>>> report = minimize(ctx, starts=1)
"""

from .model_core import (RateDomainError, Transition, TransitionTable, drift,
                         diffusion_matrix, diffusion_sqrt, jump_rates)
from .models import (choose_horizon, get_model, model_registry, sir_table,
                     sirs_table)
from .odeflow import (FlowCache, FlowError, resolvent, sensitivities,
                      solve_ode, weight_matrix)
from .params import ParamVector
from .simulate import (ObservationSet, Path, euler_maruyama, gillespie,
                       non_extinct, ode_path, read_path_csv, read_path_npz,
                       reconstruct_events, sample_at, tau_leap, write_path_csv, write_path_npz)
from .contrast import (ContrastContext, EstimationReport, contrast_value,
                       ellipse_polyline, ellipsoid, information_limit,
                       information_matrix, minimize, mis_specified_N,
                       residual, residuals, standardized_residuals)
from .mle_reference import CompletePath, sir_loglik, sir_mle

__version__ = "0.1.0"

__all__ = [
    "ParamVector", "Transition", "TransitionTable", "RateDomainError",
    "drift", "diffusion_matrix", "diffusion_sqrt", "jump_rates",
    "sir_table", "sirs_table", "get_model", "model_registry", "choose_horizon",
    "Path", "ObservationSet", "gillespie", "tau_leap", "euler_maruyama",
    "ode_path", "sample_at", "non_extinct",
    "write_path_csv", "read_path_csv", "write_path_npz", "read_path_npz",
    "reconstruct_events",
    "FlowCache", "FlowError", "solve_ode", "resolvent", "sensitivities",
    "weight_matrix",
    "ContrastContext", "EstimationReport", "contrast_value", "minimize",
    "residual", "residuals", "standardized_residuals", "information_matrix",
    "information_limit", "ellipsoid", "ellipse_polyline", "mis_specified_N",
    "CompletePath", "sir_mle", "sir_loglik",
]
