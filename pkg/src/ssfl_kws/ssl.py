"""Supervised, thresholded pseudo-label and mixup losses.

All losses are returned as scalar :class:`~ssfl_kws.nncore.Tensor` nodes
holding their computation graph; call :func:`ssfl_kws.nncore.backward` on
them to populate parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .augment import AugmentPipeline, mixup, sample_mix_lambda
from .errors import DomainError, ShapeError
from .nncore import constant_loss, cross_entropy, forward, soft_cross_entropy
from .nncore.model import predict_proba

IDENTITY = AugmentPipeline()


@dataclass
class Batch:
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 3 or self.features.shape[0] < 1:
            raise ShapeError(f"batch features must be (B>=1, n_mels, n_frames), got {self.features.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ShapeError("labels must have one entry per example")

    def __len__(self):
        return self.features.shape[0]


@dataclass
class PseudoBatch:
    """Hard pseudo-labels from the weak view and the confidence mask.

    ``features`` are the original unlabeled inputs; the strong view is
    drawn from them when the unsupervised loss is computed.
    """

    features: np.ndarray
    pseudo_labels: np.ndarray
    keep_mask: np.ndarray
    confidences: np.ndarray

    @property
    def n_total(self):
        return int(self.keep_mask.size)

    @property
    def n_kept(self):
        return int(self.keep_mask.sum())

    @property
    def label_ratio(self):
        return self.n_kept / self.n_total if self.n_total else 0.0

    def kept(self):
        return self.features[self.keep_mask], self.pseudo_labels[self.keep_mask]


@dataclass
class LossReport:
    loss_sup: float = 0.0
    loss_unsup: float = 0.0
    n_kept: int = 0
    n_total: int = 0


def supervised_loss(params, spec, batch, weak=IDENTITY, rng=None, train=True):
    """Cross-entropy of the weakly augmented labeled batch."""
    if batch.labels is None or np.any(batch.labels < 0):
        raise DomainError("supervised_loss needs every example to be labeled")
    x = weak(batch.features, rng)
    return cross_entropy(forward(params, spec, x, train=train), batch.labels)


def pseudo_from_probs(features, probs, tau):
    """Threshold rule: label = argmax, kept iff max probability >= tau."""
    if not 0 <= tau <= 1:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    probs = np.asarray(probs, dtype=np.float64)
    conf = probs.max(axis=1)
    return PseudoBatch(
        features=np.asarray(features, dtype=np.float64),
        pseudo_labels=probs.argmax(axis=1),
        keep_mask=conf >= tau,
        confidences=conf,
    )


def pseudo_label(params, spec, features, weak=IDENTITY, tau=0.95, rng=None):
    """Label the weak view in eval mode; batch-norm statistics are not touched."""
    if not 0 <= tau <= 1:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    features = np.asarray(features, dtype=np.float64)
    probs = predict_proba(params, spec, weak(features, rng))
    return pseudo_from_probs(features, probs, tau)


def unsupervised_loss(params, spec, pseudo, strong=IDENTITY, rng=None, train=True):
    """Cross-entropy of strong views against pseudo-labels, mean over kept examples.

    Only kept examples are forwarded, so dropped ones get exactly zero
    gradient.  With nothing kept the loss is a constant 0.
    """
    if pseudo.n_kept == 0:
        return constant_loss(0.0)
    x, y = pseudo.kept()
    return cross_entropy(forward(params, spec, strong(x, rng), train=train), y)


def mix_supervised_loss(params, spec, batch, pseudo, beta_param=0.75, rng=None, weak=IDENTITY, lam=None, train=True):
    """Labeled examples mixed with kept pseudo-labeled ones, soft-target CE.

    Labeled example ``i`` is paired with kept example ``i mod n_kept``.  One
    mixing weight is drawn per batch.  Falls back to
    :func:`supervised_loss` when nothing is kept.
    """
    if pseudo is None or pseudo.n_kept == 0:
        return supervised_loss(params, spec, batch, weak, rng, train=train)
    if batch.labels is None or np.any(batch.labels < 0):
        raise DomainError("mix_supervised_loss needs a labeled batch")
    n_classes = spec.n_classes
    x_l = weak(batch.features, rng)
    x_u, y_u = pseudo.kept()
    pair = np.arange(len(batch)) % len(y_u)
    eye = np.eye(n_classes)
    if lam is None:
        lam = sample_mix_lambda(beta_param, rng)
    x_mix, q = mixup(x_l, x_u[pair], eye[batch.labels], eye[y_u[pair]], beta_param, rng, lam=lam)
    return soft_cross_entropy(forward(params, spec, x_mix, train=train), q)

