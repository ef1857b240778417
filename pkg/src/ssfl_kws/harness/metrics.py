"""Accuracy, pseudo-label diagnostics and Relative FRR@FAR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, ShapeError
from ..nncore.model import predict

NO_KEPT = -1.0


def accuracy(params, spec, test_ds):
    """Eval-mode fraction of argmax-correct predictions."""
    if len(test_ds) == 0:
        raise DomainError("accuracy on an empty test set")
    truth = test_ds.truth()
    if np.any(truth < 0):
        raise DomainError("accuracy needs a labeled test set")
    return float(np.mean(predict(params, spec, test_ds.features) == truth))


def pseudo_label_metrics(pseudo, hidden_truth):
    """(label_accuracy, threshold_accuracy, label_ratio) of a PseudoBatch.

    threshold_accuracy is :data:`NO_KEPT` when nothing clears the threshold.
    """
    truth = np.asarray(hidden_truth)
    labels = np.asarray(pseudo.pseudo_labels)
    keep = np.asarray(pseudo.keep_mask, dtype=bool)
    if truth.shape != labels.shape or keep.shape != labels.shape:
        raise ShapeError(f"pseudo-labels {labels.shape}, keep mask {keep.shape}, truth {truth.shape}")
    if labels.size == 0:
        return NO_KEPT, NO_KEPT, NO_KEPT
    correct = labels == truth
    label_acc = float(correct.mean())
    thresh_acc = float(correct[keep].mean()) if keep.any() else NO_KEPT
    return label_acc, thresh_acc, float(keep.mean())


@dataclass
class ScoredSet:
    """Detection scores; higher means "keyword present"."""

    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.positives = np.asarray(self.positives, dtype=np.float64).ravel()
        self.negatives = np.asarray(self.negatives, dtype=np.float64).ravel()

    def far(self, threshold):
        """Fraction of negatives scoring at or above ``threshold``."""
        return float(np.mean(self.negatives >= threshold))

    def frr(self, threshold):
        """Fraction of positives scoring below ``threshold``."""
        return float(np.mean(self.positives < threshold))

    def candidates(self):
        return np.append(np.unique(np.concatenate([self.positives, self.negatives])), np.inf)


def operating_threshold(scores, far_target):
    """Smallest candidate threshold whose FAR does not exceed ``far_target``.

    Candidates are every observed score plus +inf.  FAR is non-increasing
    in the threshold, so a binary search over sorted candidates suffices.
    """
    cand = scores.candidates()
    neg = np.sort(scores.negatives)
    # count of negatives >= t for each candidate t
    n_above = neg.size - np.searchsorted(neg, cand, side="left")
    ok = n_above / neg.size <= far_target
    first = int(np.argmax(ok))
    return float(cand[first])


def frr_at_far(test, baseline, far_target):
    """FRR of ``test`` over FRR of ``baseline`` at a common FAR operating point.

    The baseline threshold is chosen for ``far_target``; the FAR it actually
    achieves is then the target for the test model's own threshold.
    """
    if not 0 < far_target < 1:
        raise DomainError(f"far_target must lie in (0, 1), got {far_target}")
    for name, s in (("test", test), ("baseline", baseline)):
        if s.positives.size == 0 or s.negatives.size == 0:
            raise DomainError(f"{name} scores need both positives and negatives")
    t_b = operating_threshold(baseline, far_target)
    frr_b = baseline.frr(t_b)
    if frr_b == 0:
        raise DomainError("baseline FRR is zero at the operating point; ratio undefined")
    t_x = operating_threshold(test, baseline.far(t_b))
    return test.frr(t_x) / frr_b


def read_scores(path):
    with open(path) as fh:
        return np.array([float(line) for line in fh if line.strip()])


def load_scored_set(stem):
    """Read ``<stem>.pos`` and ``<stem>.neg`` score files (one real per line)."""
    return ScoredSet(read_scores(f"{stem}.pos"), read_scores(f"{stem}.neg"))
