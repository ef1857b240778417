"""Client partitioners: IID, label skew with K classes per client, Dirichlet(alpha)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .dataset import split_labeled_indices


class Scheme(str, enum.Enum):
    IID = "iid"
    LABEL_SKEW = "label_skew"
    DIRICHLET = "dirichlet"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"labelskewk": "label_skew", "labelskew": "label_skew", "k": "label_skew", "dir": "dirichlet"}
        key = aliases.get(key.replace("_", ""), key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ConfigError(f"unknown partition scheme {name!r} (expected one of: {valid})") from None


@dataclass
class PartitionPlan:
    client_shards: list
    scheme: Scheme
    scheme_param: float = 0
    server_labeled: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def m_clients(self):
        return len(self.client_shards)

    def shard_sizes(self):
        return [len(s) for s in self.client_shards]

    def all_indices(self):
        return np.concatenate([np.asarray(self.server_labeled, dtype=np.int64)] + [np.asarray(s, dtype=np.int64) for s in self.client_shards])

    def is_disjoint(self):
        idx = self.all_indices()
        return idx.size == np.unique(idx).size

    def class_counts(self, labels, n_classes):
        """(m_clients, n_classes) matrix of per-client label histograms."""
        labels = np.asarray(labels)
        return np.stack([np.bincount(labels[np.asarray(s, dtype=np.int64)], minlength=n_classes) for s in self.client_shards])


def _check_clients(m_clients):
    if m_clients <= 0:
        raise ConfigError(f"m_clients must be positive, got {m_clients}")


def partition_iid(n_examples, m_clients, seed):
    """Seeded shuffle cut into ``m_clients`` shards whose sizes differ by at most one."""
    _check_clients(m_clients)
    if n_examples < m_clients:
        raise ConfigError(f"cannot give {m_clients} clients a non-empty IID shard from {n_examples} examples")
    perm = np.random.default_rng(seed).permutation(n_examples)
    shards = [np.sort(s) for s in np.array_split(perm, m_clients)]
    return PartitionPlan(shards, Scheme.IID, 0)


def label_skew_assignment(n_classes, m_clients, k, seed):
    """Classes held by each client: round robin over a seeded class permutation."""
    perm = np.random.default_rng(seed).permutation(n_classes)
    return [[int(perm[(i * k + j) % n_classes]) for j in range(k)] for i in range(m_clients)]


def partition_label_skew(labels, n_classes, m_clients, k, seed):
    """Each client gets examples of exactly ``k`` classes.

    Every class is held by either floor or ceil of ``m_clients*k/n_classes``
    clients and its examples are split evenly among them.
    """
    _check_clients(m_clients)
    labels = np.asarray(labels, dtype=np.int64)
    if not 1 <= k <= n_classes:
        raise ConfigError(f"k must lie in [1, {n_classes}], got {k}")
    if m_clients * k < n_classes:
        raise ConfigError(f"{m_clients} clients x {k} classes cannot cover {n_classes} classes")
    assignment = label_skew_assignment(n_classes, m_clients, k, seed)
    holders = {c: [i for i, cls in enumerate(assignment) if c in cls] for c in range(n_classes)}
    rng = np.random.default_rng([seed, 1])
    shards = [[] for _ in range(m_clients)]
    for c in range(n_classes):
        idx = rng.permutation(np.flatnonzero(labels == c))
        if len(idx) < len(holders[c]):
            raise ConfigError(
                f"class {c} has {len(idx)} examples but is assigned to {len(holders[c])} clients"
            )
        for client, part in zip(holders[c], np.array_split(idx, len(holders[c]))):
            shards[client].append(part)
    shards = [np.sort(np.concatenate(s)) for s in shards]
    return PartitionPlan(shards, Scheme.LABEL_SKEW, k)


def partition_dirichlet(labels, n_classes, m_clients, alpha, seed):
    """Per class, proportions ~ Dir(alpha * 1) and a multinomial split.

    Clients may end up with empty shards.
    """
    _check_clients(m_clients)
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    shards = [[] for _ in range(m_clients)]
    for c in range(n_classes):
        idx = rng.permutation(np.flatnonzero(labels == c))
        p = rng.dirichlet(np.full(m_clients, float(alpha)))
        counts = rng.multinomial(len(idx), p)
        cuts = np.cumsum(counts)[:-1]
        for client, part in enumerate(np.split(idx, cuts)):
            shards[client].append(part)
    shards = [np.sort(np.concatenate(s)).astype(np.int64) for s in shards]
    return PartitionPlan(shards, Scheme.DIRICHLET, float(alpha))


def partition(labels, n_classes, scheme, param, m_clients, seed):
    scheme = Scheme.parse(scheme) if not isinstance(scheme, Scheme) else scheme
    if scheme is Scheme.IID:
        return partition_iid(len(labels), m_clients, seed)
    if scheme is Scheme.LABEL_SKEW:
        if int(param) != param:
            raise ConfigError(f"label_skew needs an integer class count, got {param}")
        return partition_label_skew(labels, n_classes, m_clients, int(param), seed)
    return partition_dirichlet(labels, n_classes, m_clients, param, seed)


def build_plan(ds, n_labeled, scheme, param, m_clients, seed):
    """Server-labeled subset plus client shards over the remaining examples.

    All indices refer to ``ds``.  Partitioning uses ground truth, which the
    simulator knows even though clients do not.
    """
    if n_labeled:
        labeled, rest = split_labeled_indices(ds, n_labeled, seed)
    else:
        labeled, rest = np.zeros(0, dtype=np.int64), np.arange(len(ds))
    if rest.size == 0:
        return PartitionPlan([np.zeros(0, dtype=np.int64) for _ in range(m_clients)], Scheme.parse(scheme), param, labeled)
    sub = partition(ds.truth()[rest], ds.n_classes, scheme, param, m_clients, seed)
    sub.client_shards = [rest[s] for s in sub.client_shards]
    sub.server_labeled = labeled
    return sub
