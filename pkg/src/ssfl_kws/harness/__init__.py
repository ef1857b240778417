"""Evaluation metrics, round logs, config files and the command line.

``config`` and ``cli`` depend on :mod:`ssfl_kws.fedsim` and are imported
on demand rather than here.
"""

from .logs import CSV_HEADER, RoundLog, read_round_csv, write_round_csv
from .metrics import (
    NO_KEPT,
    ScoredSet,
    accuracy,
    frr_at_far,
    load_scored_set,
    operating_threshold,
    pseudo_label_metrics,
    read_scores,
)

__all__ = [
    "CSV_HEADER",
    "NO_KEPT",
    "RoundLog",
    "ScoredSet",
    "accuracy",
    "frr_at_far",
    "load_scored_set",
    "operating_threshold",
    "pseudo_label_metrics",
    "read_round_csv",
    "read_scores",
    "write_round_csv",
]
