"""Readers for the scenario runner's file outputs.

Everything here parses the runner's CSV/JSON contracts directly; this
package never imports the simulation library.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

PATH_HEADER = "# epidiff-path v1"


class MissingInput(FileNotFoundError):
    """An expected runner output is absent or malformed."""


@dataclass
class PathData:
    times: np.ndarray
    states: np.ndarray          # counts or proportions, as written
    compartments: tuple
    scheme: str
    N: int

    def proportions(self) -> np.ndarray:
        if self.scheme in ("exact", "tau-leap") and self.N > 0:
            return self.states / self.N
        return self.states


def read_path_csv(fn: str) -> PathData:
    if not os.path.exists(fn):
        raise MissingInput(f"path file not found: {fn}")
    with open(fn, "r", encoding="utf-8") as f:
        head = f.readline().strip()
        if not head.startswith(PATH_HEADER):
            raise MissingInput(f"not a path file: {fn}")
        meta = dict(kv.split("=") for kv in head.split()[3:])
        cols = f.readline().strip().split(",")
        if cols[0] != "time" or cols[-2:] != ["scheme", "seed"]:
            raise MissingInput(f"unexpected path columns in {fn}: {cols}")
        times, rows, scheme = [], [], "exact"
        for line in f:
            parts = line.strip().split(",")
            if len(parts) < 4:
                continue
            times.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:-2]])
            scheme = parts[-2]
    return PathData(
        times=np.asarray(times), states=np.asarray(rows),
        compartments=tuple(cols[1:-2]), scheme=scheme, N=int(meta["N"]),
    )


def read_ellipses_csv(fn: str) -> dict:
    """{set name: {(label_x, label_y): (K, 2) polyline}}."""
    if not os.path.exists(fn):
        raise MissingInput(f"ellipse file not found: {fn}")
    out: dict = {}
    with open(fn, "r", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        need = {"set", "label_x", "label_y", "x", "y"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise MissingInput(
                f"{fn}: missing columns "
                f"{sorted(need - set(reader.fieldnames or []))}")
        for row in reader:
            key = (row["label_x"], row["label_y"])
            out.setdefault(row["set"], {}).setdefault(key, []).append(
                (float(row["x"]), float(row["y"])))
    if not out:
        raise MissingInput(f"{fn}: no ellipse rows")
    return {s: {k: np.asarray(v) for k, v in d.items()}
            for s, d in out.items()}


def read_estimates_csv(fn: str) -> dict:
    """{estimator: {column: np.ndarray}} from per-replicate rows."""
    if not os.path.exists(fn):
        raise MissingInput(f"estimates file not found: {fn}")
    buckets: dict = {}
    with open(fn, "r", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "estimator" not in reader.fieldnames:
            raise MissingInput(f"{fn}: missing 'estimator' column")
        for row in reader:
            b = buckets.setdefault(row["estimator"], {})
            for k, v in row.items():
                if k == "estimator":
                    continue
                b.setdefault(k, []).append(v)
    out = {}
    for est, cols in buckets.items():
        out[est] = {}
        for k, vals in cols.items():
            try:
                out[est][k] = np.asarray([float(v) for v in vals])
            except ValueError:
                out[est][k] = np.asarray(vals)
    return out


@dataclass
class Scenario:
    root: str
    truth: dict
    free: list
    config: dict
    ellipses: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return os.path.basename(self.root.rstrip("/"))

    def path_files(self) -> list:
        ddir = os.path.join(self.root, "data")
        man = os.path.join(ddir, "manifest.json")
        if not os.path.exists(man):
            raise MissingInput(f"manifest not found: {man}")
        with open(man, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        return [os.path.join(ddir, rec["file"]) for rec in manifest["paths"]]

    def estimates(self) -> dict:
        return read_estimates_csv(
            os.path.join(self.root, "estimates", "estimates.csv"))

    def has_estimates(self) -> bool:
        return os.path.exists(
            os.path.join(self.root, "estimates", "estimates.csv"))


def load_scenario(root: str) -> Scenario:
    tj = os.path.join(root, "truth.json")
    cj = os.path.join(root, "config.json")
    for fn in (tj, cj):
        if not os.path.exists(fn):
            raise MissingInput(f"scenario input not found: {fn}")
    with open(tj, "r", encoding="utf-8") as f:
        truth = json.load(f)
    with open(cj, "r", encoding="utf-8") as f:
        config = json.load(f)
    ell_fn = os.path.join(root, "ellipses.csv")
    ellipses = read_ellipses_csv(ell_fn) if os.path.exists(ell_fn) else {}
    return Scenario(root=root, truth=truth["params"], free=truth["free"],
                    config=config, ellipses=ellipses)
