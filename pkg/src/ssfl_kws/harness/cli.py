"""Command-line entry point: ``gen-data``, ``partition``, ``run``, ``eval-frr``."""

from __future__ import annotations

import argparse
import sys

from ..data import build_plan, gen_synthetic, load_dataset, save_dataset
from ..errors import ConfigError, SSFLError
from ..fedsim import run_experiment
from .config import _convert, KEYS, load_config
from .logs import write_round_csv
from .metrics import frr_at_far, load_scored_set


def _gen_data(args):
    ds = gen_synthetic(args.n_per_class, args.n_classes, args.n_mels, args.n_frames, args.noise, args.seed, args.variant)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} examples ({ds.n_classes} classes, {ds.n_mels}x{ds.n_frames}) to {args.out}")


def _partition(args):
    ds = load_dataset(args.dataset)
    plan = build_plan(ds, args.n_labeled, args.scheme, args.param, args.m_clients, args.seed)
    counts = plan.class_counts(ds.truth(), ds.n_classes)
    width = max(3, len(str(counts.max())) if counts.size else 1)
    head = "client  size  labels  " + " ".join(f"{f'c{c}':>{width}}" for c in range(ds.n_classes))
    print(f"scheme={plan.scheme.value} param={plan.scheme_param} m_clients={plan.m_clients} server_labeled={len(plan.server_labeled)}")
    print(head)
    for i, row in enumerate(counts):
        cells = " ".join(f"{int(v):>{width}}" for v in row)
        print(f"{i:>6}  {int(row.sum()):>4}  {int((row > 0).sum()):>6}  {cells}")


def _parse_set(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _convert(key, value)
    return out


def _run(args):
    overrides = _parse_set(args.set or [])
    for key in ("schedule", "seed", "out_csv", "rounds", "workers"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    cfg = load_config(args.config, overrides)
    if not cfg.dataset:
        raise ConfigError("config must name a dataset file")
    ds = load_dataset(cfg.dataset)
    result = run_experiment(cfg, ds)
    if cfg.out_csv:
        write_round_csv(result.logs, cfg.out_csv)
    print(f"final_accuracy={result.final_accuracy!r}")


def _eval_frr(args):
    value = frr_at_far(load_scored_set(args.test), load_scored_set(args.baseline), args.far)
    print(f"relative_frr={value!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="ssfl-kws", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic .skws dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n-per-class", type=int, default=100)
    g.add_argument("--n-classes", type=int, default=12)
    g.add_argument("--n-mels", type=int, default=16)
    g.add_argument("--n-frames", type=int, default=32)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--variant", type=int, default=0)
    g.set_defaults(func=_gen_data)

    p = sub.add_parser("partition", help="print per-client label histograms")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scheme", default="iid")
    p.add_argument("--param", type=float, default=0)
    p.add_argument("--m-clients", type=int, default=100)
    p.add_argument("--n-labeled", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_partition)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("config")
    r.add_argument("--schedule")
    r.add_argument("--seed", type=int)
    r.add_argument("--rounds", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out-csv", dest="out_csv")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    r.set_defaults(func=_run)

    e = sub.add_parser("eval-frr", help="relative FRR at a FAR target from score files")
    e.add_argument("--test", required=True, help="stem of <stem>.pos / <stem>.neg")
    e.add_argument("--baseline", required=True)
    e.add_argument("--far", type=float, required=True)
    e.set_defaults(func=_eval_frr)
    return parser


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SSFLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli())
