"""Figure rendering for epidiff scenario-runner outputs (CSV/JSON in,
PNG/SVG out)."""

from .io import MissingInput, load_scenario, read_ellipses_csv, read_path_csv
from .render import PRESETS, render

__all__ = ["render", "PRESETS", "MissingInput", "load_scenario",
           "read_ellipses_csv", "read_path_csv"]
