"""Per-round metric records and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

from ..errors import FormatError

CSV_HEADER = ["round", "test_accuracy", "label_accuracy", "threshold_accuracy", "label_ratio", "loss_sup", "loss_unsup"]


@dataclass
class RoundLog:
    round: int
    test_accuracy: float
    label_accuracy: float
    threshold_accuracy: float
    label_ratio: float
    loss_sup: float
    loss_unsup: float

    def __post_init__(self):
        for f in fields(self)[1:]:
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"RoundLog.{f.name} must be finite, got {value}")


def _fmt(x):
    return format(float(x), ".17g")


def write_round_csv(logs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for log in logs:
            row = astuple(log)
            w.writerow([str(int(row[0]))] + [_fmt(v) for v in row[1:]])


def read_round_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise FormatError(f"{path}: header must be {','.join(CSV_HEADER)}", offset=1)
    logs = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(CSV_HEADER):
            raise FormatError(f"{path}: expected {len(CSV_HEADER)} fields, got {len(row)}", offset=lineno)
        try:
            logs.append(RoundLog(int(row[0]), *(float(v) for v in row[1:])))
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}", offset=lineno) from None
    return logs
