"""Ingestion, fit reports and Monte Carlo studies."""

from .fit import FitOptions, FitReport, format_fit, format_trimmean, run_fit
from .io import (CampLikeModel, camp_like_panel, load_panel_csv, load_vectors_csv,
                 save_vectors_csv, within_demean, write_panel_csv)
from .simulate import SimulationSpec, TableRow, replicate, run_simulation, write_table

__all__ = [
    "FitOptions", "FitReport", "format_fit", "format_trimmean", "run_fit",
    "CampLikeModel", "camp_like_panel", "load_panel_csv", "load_vectors_csv",
    "save_vectors_csv", "within_demean", "write_panel_csv",
    "SimulationSpec", "TableRow", "replicate", "run_simulation", "write_table",
]
