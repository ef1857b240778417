from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, DomainError, ShapeError

UNLABELED = -1


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: Optional[int] = None


class Dataset:
    """A stack of (n_mels, n_frames) feature matrices with optional labels.

    ``labels`` uses -1 for "absent".  Unlabeled subsets produced by
    :func:`split_labeled` keep their ground truth in ``hidden_labels`` so
    pseudo-label metrics can be computed; training code reads
    :meth:`unlabeled_view` and never sees it.
    """

    def __init__(self, features, labels, n_classes, hidden_labels=None):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 3:
            raise ShapeError(f"features must be (N, n_mels, n_frames), got shape {features.shape}")
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != features.shape[0]:
            raise ShapeError(f"{features.shape[0]} feature matrices but {labels.shape[0]} labels")
        if n_classes < 2:
            raise ConfigError(f"n_classes must be at least 2, got {n_classes}")
        present = labels[labels != UNLABELED]
        if present.size and (present.min() < 0 or present.max() >= n_classes):
            raise DomainError(f"labels must lie in [0, {n_classes}) or be -1")
        if not np.all(np.isfinite(features)):
            raise DomainError("features must be finite")
        if hidden_labels is not None:
            hidden_labels = np.asarray(hidden_labels, dtype=np.int64).reshape(-1)
            if hidden_labels.shape != labels.shape:
                raise ShapeError("hidden_labels must align with labels")
        self.features = features
        self.labels = labels
        self.n_classes = int(n_classes)
        self.hidden_labels = hidden_labels

    @property
    def n_mels(self):
        return self.features.shape[1]

    @property
    def n_frames(self):
        return self.features.shape[2]

    def __len__(self):
        return self.features.shape[0]

    def __getitem__(self, i):
        lab = int(self.labels[i])
        return Example(self.features[i], None if lab == UNLABELED else lab)

    @property
    def examples(self):
        return [self[i] for i in range(len(self))]

    @property
    def is_fully_labeled(self):
        return bool(np.all(self.labels != UNLABELED))

    def truth(self):
        """Ground-truth labels: visible labels where present, else hidden ones."""
        if self.hidden_labels is None:
            return self.labels.copy()
        return np.where(self.labels != UNLABELED, self.labels, self.hidden_labels)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        hidden = None if self.hidden_labels is None else self.hidden_labels[idx]
        return Dataset(self.features[idx], self.labels[idx], self.n_classes, hidden)

    def hide_labels(self):
        """Copy with every label moved to ``hidden_labels``."""
        return Dataset(self.features, np.full(len(self), UNLABELED), self.n_classes, self.truth())

    def unlabeled_view(self):
        """Feature matrices only; the training-side view of client data."""
        return self.features

    def equals(self, other):
        return (
            self.n_classes == other.n_classes
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def __repr__(self):
        return (
            f"Dataset(n={len(self)}, n_mels={self.n_mels}, n_frames={self.n_frames}, "
            f"n_classes={self.n_classes}, labeled={int((self.labels != UNLABELED).sum())})"
        )


def split_labeled_indices(ds, n_labeled, seed):
    """Class-balanced labeled indices and the complementary unlabeled indices."""
    if not ds.is_fully_labeled:
        raise DomainError("split_labeled needs a fully labeled dataset")
    if n_labeled < ds.n_classes:
        raise ConfigError(f"n_labeled={n_labeled} is smaller than n_classes={ds.n_classes}")
    if n_labeled > len(ds):
        raise ConfigError(f"n_labeled={n_labeled} exceeds dataset size {len(ds)}")
    rng = np.random.default_rng(seed)
    by_class = [rng.permutation(np.flatnonzero(ds.labels == c)) for c in range(ds.n_classes)]
    base, extra = divmod(n_labeled, ds.n_classes)
    # remainder goes to a seeded choice of classes, one each
    quota = np.full(ds.n_classes, base)
    quota[rng.permutation(ds.n_classes)[:extra]] += 1
    short = [c for c in range(ds.n_classes) if len(by_class[c]) < quota[c]]
    if short:
        raise ConfigError(f"classes {short} have too few examples for n_labeled={n_labeled}")
    labeled = np.sort(np.concatenate([by_class[c][: quota[c]] for c in range(ds.n_classes)]))
    mask = np.ones(len(ds), dtype=bool)
    mask[labeled] = False
    return labeled, np.flatnonzero(mask)


def split_labeled(ds, n_labeled, seed):
    """(labeled, unlabeled) datasets; the unlabeled part keeps hidden truth."""
    lab, unl = split_labeled_indices(ds, n_labeled, seed)
    return ds.subset(lab), ds.subset(unl).hide_labels()


def train_test_split(ds, test_fraction, seed):
    """Seeded stratified hold-out split."""
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test = []
    truth = ds.truth()
    for c in range(ds.n_classes):
        idx = rng.permutation(np.flatnonzero(truth == c))
        test.append(idx[: int(round(test_fraction * len(idx)))])
    test = np.sort(np.concatenate(test))
    mask = np.ones(len(ds), dtype=bool)
    mask[test] = False
    return ds.subset(np.flatnonzero(mask)), ds.subset(test)
