"""Benchmark harness: sweeps, frontiers, parameter lookup and adversary-variant tables."""

from .config import PARAM_NAMES, PrivatizerSpec, SweepConfig, load_config
from .frontier import FrontierPoint, frontier, interpolate_at, write_frontier_csv, write_svg
from .lookup import LookupResult, param_for_distortion, param_for_privacy, param_for_utility
from .sweep import TRADEOFF_COLUMNS, TradeoffRow, prepare, read_tradeoff_csv, run_one, run_sweep, write_tradeoff_csv
from .variants import VariantRow, variant_matrix, variant_table, write_variants_csv

__all__ = [
    "PARAM_NAMES",
    "TRADEOFF_COLUMNS",
    "FrontierPoint",
    "LookupResult",
    "PrivatizerSpec",
    "SweepConfig",
    "TradeoffRow",
    "VariantRow",
    "frontier",
    "interpolate_at",
    "load_config",
    "param_for_distortion",
    "param_for_privacy",
    "param_for_utility",
    "prepare",
    "read_tradeoff_csv",
    "run_one",
    "run_sweep",
    "variant_matrix",
    "variant_table",
    "write_frontier_csv",
    "write_svg",
    "write_tradeoff_csv",
    "write_variants_csv",
]
