"""Federated round engine: sampling, local training, FedAvg, schedules.

Randomness is derived from ``(seed, round, role, id)`` seed sequences, so a
round's outcome does not depend on the order (or concurrency) in which
client updates execute.  Aggregation always sums client models in
ascending client-id order.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .augment import AugmentPipeline
from .data import Dataset, Scheme, build_plan, split_labeled_indices, train_test_split
from .errors import ConfigError, ExperimentError
from .harness.logs import RoundLog
from .harness.metrics import NO_KEPT, accuracy, pseudo_label_metrics
from .nncore import ModelSpec, average_params, backward, build_model, load_params, save_params, sgd_step
from .ssl import Batch, mix_supervised_loss, pseudo_label, supervised_loss, unsupervised_loss

log = logging.getLogger(__name__)

# roles in the seed sequence
_SAMPLE, _CLIENT, _SERVER, _CENTRAL, _EVAL = range(5)


class Schedule(str, enum.Enum):
    ALTERNATE = "alternate"
    PARALLEL = "parallel"
    CENTRALIZED_SUPERVISED = "centralized_supervised"
    CENTRALIZED_SEMI = "centralized_semi"

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower().replace("-", "_")
        key = {"supervised": "centralized_supervised", "semi": "centralized_semi"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ConfigError(f"unknown schedule {name!r} (expected one of: {valid})") from None

    @property
    def federated(self):
        return self in (Schedule.ALTERNATE, Schedule.PARALLEL)


@dataclass
class ExperimentConfig:
    m_clients: int = 100
    frac_active: float = 0.1
    rounds: int = 100
    local_epochs: int = 1
    server_epochs: int = 1
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    tau: float = 0.95
    schedule: Schedule = Schedule.ALTERNATE
    partition: Scheme = Scheme.IID
    partition_param: float = 0
    n_labeled: int = 250
    weak_stages: str = "basic"
    strong_stages: str = "basic,spec,mix"
    mix: bool = False
    beta: float = 0.75
    seed: int = 0
    client_supervised: bool = False
    test_fraction: float = 0.1
    block_channels: tuple = (16, 24, 32)
    kernel_size: int = 9
    batchnorm: bool = True
    workers: int = 1
    dataset: Optional[str] = None
    pretrained: Optional[str] = None
    out_csv: Optional[str] = None
    out_params: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.schedule, Schedule):
            self.schedule = Schedule.parse(self.schedule)
        if not isinstance(self.partition, Scheme):
            self.partition = Scheme.parse(self.partition)
        self.block_channels = tuple(int(c) for c in self.block_channels)
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.m_clients >= 1, f"m_clients must be >= 1, got {self.m_clients}")
        need(0 < self.frac_active <= 1, f"frac_active must lie in (0, 1], got {self.frac_active}")
        need(self.rounds >= 0, f"rounds must be >= 0, got {self.rounds}")
        need(self.local_epochs >= 0, f"local_epochs must be >= 0, got {self.local_epochs}")
        need(self.server_epochs >= 0, f"server_epochs must be >= 0, got {self.server_epochs}")
        need(self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}")
        need(self.lr > 0, f"lr must be positive, got {self.lr}")
        need(0 <= self.momentum < 1, f"momentum must lie in [0, 1), got {self.momentum}")
        need(0 <= self.tau <= 1, f"tau must lie in [0, 1], got {self.tau}")
        need(self.n_labeled >= 0, f"n_labeled must be >= 0, got {self.n_labeled}")
        need(self.beta > 0, f"beta must be positive, got {self.beta}")
        need(0 < self.test_fraction < 1, f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        need(self.workers >= 1, f"workers must be >= 1, got {self.workers}")
        if self.partition is Scheme.LABEL_SKEW:
            need(self.partition_param >= 1 and int(self.partition_param) == self.partition_param,
                 f"label_skew partition_param must be a positive integer, got {self.partition_param}")
        if self.partition is Scheme.DIRICHLET:
            need(self.partition_param > 0, f"dirichlet partition_param must be positive, got {self.partition_param}")

    @property
    def n_active(self):
        return max(1, int(np.floor(self.frac_active * self.m_clients + 0.5)))

    def pipelines(self, n_mels, n_frames):
        weak = AugmentPipeline.from_string(self.weak_stages, n_mels, n_frames, self.beta)
        strong = AugmentPipeline.from_string(self.strong_stages, n_mels, n_frames, self.beta)
        return weak, strong

    def mix_enabled(self, strong):
        return bool(self.mix or strong.mix)


@dataclass
class ClientState:
    client_id: int
    shard: np.ndarray


@dataclass
class StepStats:
    """Running sums of per-step losses within one round."""

    sup_sum: float = 0.0
    sup_steps: int = 0
    unsup_sum: float = 0.0
    unsup_steps: int = 0

    def add_sup(self, v):
        self.sup_sum += v
        self.sup_steps += 1

    def add_unsup(self, v):
        self.unsup_sum += v
        self.unsup_steps += 1

    def merge(self, other):
        self.sup_sum += other.sup_sum
        self.sup_steps += other.sup_steps
        self.unsup_sum += other.unsup_sum
        self.unsup_steps += other.unsup_steps

    @property
    def loss_sup(self):
        return self.sup_sum / self.sup_steps if self.sup_steps else 0.0

    @property
    def loss_unsup(self):
        return self.unsup_sum / self.unsup_steps if self.unsup_steps else 0.0


@dataclass
class FedState:
    spec: ModelSpec
    global_params: object
    labeled: Dataset
    pool: Dataset
    clients: list
    test: Dataset
    weak: AugmentPipeline = field(default_factory=AugmentPipeline)
    strong: AugmentPipeline = field(default_factory=AugmentPipeline)
    round: int = 0


@dataclass
class RoundResult:
    round: int
    global_params: object
    log: RoundLog
    sampled: list = field(default_factory=list)
    n_aggregated: int = 0


@dataclass
class ExperimentResult:
    rounds: list
    initial_accuracy: float
    final_accuracy: float
    final_params: object

    @property
    def logs(self):
        return [r.log for r in self.rounds]


def rng_for(seed, round_, role, ident=0):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(round_), role, int(ident)]))


def sample_clients(m_clients, frac_active, round_, seed, eligible=None):
    """``max(1, round(C*M))`` distinct client ids, sorted.

    Only ``eligible`` clients (default: all) are drawn; if fewer are eligible
    than requested, all eligible clients are returned.
    """
    if m_clients < 1 or not 0 < frac_active <= 1:
        raise ConfigError(f"invalid sampling parameters M={m_clients}, C={frac_active}")
    pool = np.arange(m_clients) if eligible is None else np.asarray(sorted(eligible), dtype=np.int64)
    if pool.size == 0:
        raise ExperimentError("no client has a non-empty shard")
    n = min(max(1, int(np.floor(frac_active * m_clients + 0.5))), pool.size)
    chosen = rng_for(seed, round_, _SAMPLE).choice(pool, size=n, replace=False)
    return sorted(int(c) for c in chosen)


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def _train_step(params, loss, cfg):
    params.zero_grad()
    backward(loss)
    sgd_step(params, cfg.lr, cfg.momentum)
    return loss.item()


def client_update(global_params, spec, client, pool, cfg, round_=0, weak=None, strong=None, stats=None):
    """Local training on one client shard; ``global_params`` is left untouched.

    Unlabeled clients run pseudo-label / unsupervised-loss steps.  With
    ``cfg.client_supervised`` the shard labels are used directly (plain FL).
    """
    if weak is None or strong is None:
        weak, strong = cfg.pipelines(spec.n_mels, spec.n_frames)
    stats = stats if stats is not None else StepStats()
    params = global_params.copy()
    params.velocity = {n: np.zeros_like(v) for n, v in params.velocity.items()}
    shard = np.asarray(client.shard, dtype=np.int64)
    if shard.size == 0:
        return params
    rng = rng_for(cfg.seed, round_, _CLIENT, client.client_id)
    x_all = pool.unlabeled_view()
    for _ in range(cfg.local_epochs):
        for b in _batches(shard.size, cfg.batch_size, rng):
            idx = shard[b]
            if cfg.client_supervised:
                loss = supervised_loss(params, spec, Batch(x_all[idx], pool.labels[idx]), weak, rng)
                stats.add_sup(_train_step(params, loss, cfg))
                continue
            pseudo = pseudo_label(params, spec, x_all[idx], weak, cfg.tau, rng)
            if pseudo.n_kept == 0:
                continue
            loss = unsupervised_loss(params, spec, pseudo, strong, rng)
            stats.add_unsup(_train_step(params, loss, cfg))
    return params


def server_finetune(params, spec, labeled, cfg, round_=0, weak=None, strong=None, stats=None):
    """``cfg.server_epochs`` of supervised training on the server's labeled set.

    The server holds no unlabeled data, so the mixup variant always falls
    back to the plain supervised loss here.
    """
    if weak is None or strong is None:
        weak, strong = cfg.pipelines(spec.n_mels, spec.n_frames)
    stats = stats if stats is not None else StepStats()
    params = params.copy()
    params.velocity = {n: np.zeros_like(v) for n, v in params.velocity.items()}
    if cfg.server_epochs == 0:
        return params
    if len(labeled) == 0:
        raise ExperimentError("server has no labeled data to fine-tune on")
    rng = rng_for(cfg.seed, round_, _SERVER)
    mix = cfg.mix_enabled(strong)
    for _ in range(cfg.server_epochs):
        for b in _batches(len(labeled), cfg.batch_size, rng):
            batch = Batch(labeled.features[b], labeled.labels[b])
            if mix:
                loss = mix_supervised_loss(params, spec, batch, None, cfg.beta, rng, weak)
            else:
                loss = supervised_loss(params, spec, batch, weak, rng)
            stats.add_sup(_train_step(params, loss, cfg))
    return params


def _run_clients(state, cfg, ids, start_params):
    """Client updates for ``ids`` in id order; may run on a thread pool."""
    by_id = {c.client_id: c for c in state.clients}
    per_client = [StepStats() for _ in ids]

    def work(i):
        return client_update(start_params, state.spec, by_id[ids[i]], state.pool, cfg, state.round,
                             state.weak, state.strong, per_client[i])

    if cfg.workers > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(work, range(len(ids))))
    else:
        results = [work(i) for i in range(len(ids))]
    stats = StepStats()
    for s in per_client:
        stats.merge(s)
    return results, stats


def _eligible(state):
    return [c.client_id for c in state.clients if len(c.shard) > 0]


def run_round_alternate(state, cfg):
    """Clients train from the current global model, FedAvg, then the server fine-tunes."""
    state.round += 1
    ids = sample_clients(cfg.m_clients, cfg.frac_active, state.round, cfg.seed, _eligible(state))
    client_params, stats = _run_clients(state, cfg, ids, state.global_params)
    aggregated = average_params(client_params)
    state.global_params = server_finetune(aggregated, state.spec, state.labeled, cfg, state.round,
                                          state.weak, state.strong, stats)
    return RoundResult(state.round, state.global_params, evaluate(state, cfg, stats), ids, len(client_params))


def run_round_parallel(state, cfg):
    """Server and clients start from the same model; the server joins FedAvg as one participant."""
    state.round += 1
    ids = sample_clients(cfg.m_clients, cfg.frac_active, state.round, cfg.seed, _eligible(state))
    start = state.global_params
    client_params, stats = _run_clients(state, cfg, ids, start)
    server = server_finetune(start, state.spec, state.labeled, cfg, state.round, state.weak, state.strong, stats)
    participants = client_params + [server]
    state.global_params = average_params(participants)
    return RoundResult(state.round, state.global_params, evaluate(state, cfg, stats), ids, len(participants))


def run_round_central_semi(state, cfg):
    """One pass over the unlabeled pool, each step paired with a labeled batch.

    Step loss is the supervised (or mixup) loss plus the thresholded
    unsupervised loss, equally weighted.
    """
    state.round += 1
    params = state.global_params.copy()
    rng = rng_for(cfg.seed, state.round, _CENTRAL)
    stats = StepStats()
    labeled, pool = state.labeled, state.pool
    mix = cfg.mix_enabled(state.strong)
    lab_batches = []
    for _ in range(max(1, cfg.local_epochs)):
        for ub in _batches(len(pool), cfg.batch_size, rng):
            if not lab_batches:
                lab_batches = _batches(len(labeled), cfg.batch_size, rng)
            lb = lab_batches.pop(0)
            batch = Batch(labeled.features[lb], labeled.labels[lb])
            pseudo = pseudo_label(params, state.spec, pool.unlabeled_view()[ub], state.weak, cfg.tau, rng)
            if mix:
                l_sup = mix_supervised_loss(params, state.spec, batch, pseudo, cfg.beta, rng, state.weak)
            else:
                l_sup = supervised_loss(params, state.spec, batch, state.weak, rng)
            l_unsup = unsupervised_loss(params, state.spec, pseudo, state.strong, rng)
            sup_v, unsup_v = l_sup.item(), l_unsup.item()
            _train_step(params, l_sup + l_unsup, cfg)
            stats.add_sup(sup_v)
            if pseudo.n_kept:
                stats.add_unsup(unsup_v)
    state.global_params = params
    return RoundResult(state.round, params, evaluate(state, cfg, stats))


def run_round_central_supervised(state, cfg):
    state.round += 1
    stats = StepStats()
    state.global_params = server_finetune(state.global_params, state.spec, state.labeled, cfg, state.round,
                                          state.weak, state.strong, stats)
    return RoundResult(state.round, state.global_params, evaluate(state, cfg, stats))


ROUND_FUNCS = {
    Schedule.ALTERNATE: run_round_alternate,
    Schedule.PARALLEL: run_round_parallel,
    Schedule.CENTRALIZED_SUPERVISED: run_round_central_supervised,
    Schedule.CENTRALIZED_SEMI: run_round_central_semi,
}


def evaluate(state, cfg, stats=None):
    """Test accuracy plus pseudo-label diagnostics of the global model on the pool.

    Pseudo-label metrics use the un-augmented pool so curves are comparable
    across rounds and schedules.
    """
    stats = stats or StepStats()
    params, spec = state.global_params, state.spec
    test_acc = accuracy(params, spec, state.test)
    if len(state.pool):
        pseudo = pseudo_label(params, spec, state.pool.unlabeled_view(), tau=cfg.tau)
        la, ta, lr = pseudo_label_metrics(pseudo, state.pool.truth())
    else:
        la = ta = lr = NO_KEPT
    return RoundLog(state.round, test_acc, la, ta, lr, stats.loss_sup, stats.loss_unsup)


def model_spec_for(cfg, ds):
    return ModelSpec(ds.n_mels, ds.n_frames, ds.n_classes, cfg.block_channels, cfg.kernel_size, cfg.batchnorm)


def check_compatible(cfg, train, test):
    if len(train) == 0:
        raise ConfigError("training set is empty")
    if not train.is_fully_labeled:
        raise ConfigError("training set must be fully labeled (the simulator hides labels itself)")
    if (test.n_mels, test.n_frames, test.n_classes) != (train.n_mels, train.n_frames, train.n_classes):
        raise ConfigError("test set dimensions do not match the training set")
    if cfg.n_labeled > len(train):
        raise ConfigError(f"n_labeled={cfg.n_labeled} exceeds training set size {len(train)}")
    if cfg.n_labeled == 0 and (not cfg.schedule.federated or cfg.server_epochs > 0):
        raise ConfigError(f"schedule {cfg.schedule.value} with server training needs n_labeled > 0")
    if 0 < cfg.n_labeled < train.n_classes:
        raise ConfigError(f"n_labeled={cfg.n_labeled} is smaller than n_classes={train.n_classes}")
    if cfg.schedule is Schedule.CENTRALIZED_SEMI and cfg.n_labeled == len(train):
        raise ConfigError("centralized_semi needs unlabeled data (n_labeled < training set size)")
    if cfg.schedule.federated and cfg.n_labeled == len(train):
        raise ConfigError("federated schedules need client data (n_labeled < training set size)")


def init_state(cfg, train, test=None):
    """Validate, split, partition and build (or load) the starting model."""
    if not train.is_fully_labeled:
        raise ConfigError("training set must be fully labeled (the simulator hides labels itself)")
    if test is None:
        train, test = train_test_split(train, cfg.test_fraction, cfg.seed)
    check_compatible(cfg, train, test)
    spec = model_spec_for(cfg, train)
    params = build_model(spec, cfg.seed)
    if cfg.pretrained:
        loaded = load_params(cfg.pretrained)
        if loaded.structure() != params.structure():
            raise ConfigError(f"pretrained parameters in {cfg.pretrained} do not match the model layout")
        params = loaded
    if cfg.schedule.federated:
        plan = build_plan(train, cfg.n_labeled, cfg.partition, cfg.partition_param, cfg.m_clients, cfg.seed)
        labeled_idx = plan.server_labeled
        rest = np.setdiff1d(np.arange(len(train)), labeled_idx)
        position = {int(g): i for i, g in enumerate(rest)}
        clients = [ClientState(i, np.array([position[int(g)] for g in s], dtype=np.int64))
                   for i, s in enumerate(plan.client_shards)]
    else:
        labeled_idx, rest = split_labeled_indices(train, cfg.n_labeled, cfg.seed)
        clients = []
    labeled = train.subset(labeled_idx)
    pool = train.subset(rest)
    if not cfg.client_supervised:
        pool = pool.hide_labels()
    weak, strong = cfg.pipelines(spec.n_mels, spec.n_frames)
    return FedState(spec, params, labeled, pool, clients, test, weak, strong)


def run_experiment(cfg, train, test=None, on_round=None):
    """Run ``cfg.rounds`` rounds of ``cfg.schedule``; returns all round results.

    ``train`` must be fully labeled; the server keeps ``cfg.n_labeled``
    class-balanced examples and the rest form the client pool.  Without an
    explicit ``test`` set a stratified ``cfg.test_fraction`` is held out.
    """
    state = init_state(cfg, train, test)
    initial = accuracy(state.global_params, state.spec, state.test)
    step = ROUND_FUNCS[cfg.schedule]
    results = []
    for _ in range(cfg.rounds):
        res = step(state, cfg)
        results.append(res)
        log.debug("round %d: test_accuracy=%.4f", res.round, res.log.test_accuracy)
        if on_round is not None:
            on_round(res)
    final = results[-1].log.test_accuracy if results else initial
    if cfg.out_params:
        save_params(state.global_params, cfg.out_params)
    return ExperimentResult(results, initial, final, state.global_params)


def with_overrides(cfg, **kw):
    return replace(cfg, **kw)
