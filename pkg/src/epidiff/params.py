"""Named parameter vectors with bounds and fixed/free flags."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class ParamVector:
    """Ordered, named parameter vector.

    Components carry box bounds and a ``free`` flag: free entries are the
    ones an estimator is allowed to move, fixed entries stay at their value.
    """

    names: tuple[str, ...]
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    free: np.ndarray  # bool mask

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        fr = np.asarray(self.free, dtype=bool)
        n = len(self.names)
        if not (vals.shape == lo.shape == hi.shape == fr.shape == (n,)):
            raise ValueError("names/values/bounds/free must all have the same length")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(vals < lo - 1e-12) or np.any(vals > hi + 1e-12):
            bad = [self.names[i] for i in np.nonzero((vals < lo) | (vals > hi))[0]]
            raise ValueError(f"values out of bounds: {bad}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "free", fr)

    # -- construction -----------------------------------------------------

    @staticmethod
    def build(spec: Sequence[tuple], free: Iterable[str] = ()) -> "ParamVector":
        """Build from ``[(name, value, lo, hi), ...]`` plus the free-name set."""
        names = tuple(s[0] for s in spec)
        free_set = set(free)
        unknown = free_set - set(names)
        if unknown:
            raise ValueError(f"free names not in parameter list: {sorted(unknown)}")
        return ParamVector(
            names=names,
            values=np.array([s[1] for s in spec], dtype=float),
            lower=np.array([s[2] for s in spec], dtype=float),
            upper=np.array([s[3] for s in spec], dtype=float),
            free=np.array([n in free_set for n in names], dtype=bool),
        )

    # -- views ------------------------------------------------------------

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(n for n, f in zip(self.names, self.free) if f)

    @property
    def free_values(self) -> np.ndarray:
        return self.values[self.free]

    @property
    def free_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower[self.free], self.upper[self.free]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    # -- updates ----------------------------------------------------------

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return replace(self, values=np.asarray(values, dtype=float))

    def with_free_values(self, free_values: np.ndarray) -> "ParamVector":
        vals = self.values.copy()
        vals[self.free] = np.asarray(free_values, dtype=float)
        return replace(self, values=vals)

    def with_updates(self, updates: Mapping[str, float]) -> "ParamVector":
        vals = self.values.copy()
        for k, v in updates.items():
            vals[self.index(k)] = float(v)
        return replace(self, values=vals)

    def with_free(self, free_names: Iterable[str]) -> "ParamVector":
        free_set = set(free_names)
        unknown = free_set - set(self.names)
        if unknown:
            raise ValueError(f"free names not in parameter list: {sorted(unknown)}")
        return replace(self, free=np.array([n in free_set for n in self.names], dtype=bool))

    def require_free(self):
        if self.n_free == 0:
            raise ValueError("at least one free parameter is required for estimation")
