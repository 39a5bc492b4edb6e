"""Command-line surface.

Subcommands:
  run       full pipeline from a JSON config, reports written to --out
  select-k  BIC curve and chosen cluster count from a weight-vector CSV
  cluster   one clustering method over a weight-vector CSV
  schedule  dump the cyclical learning-rate curve as (epoch, lr) CSV

Exit codes: 0 success, 2 configuration problems, 1 stage failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from fedstack import clustering, model_selection
from fedstack.config import METHODS, load_config
from fedstack.errors import ConfigError, FedStackError
from fedstack.nn import read_weight_csv
from fedstack.pipeline import run_pipeline
from fedstack.reports import emit_reports, write_bic_csv
from fedstack.schedule import LRSchedule, lr_at


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedstack",
        description="Clustered stacked federated learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline from a config file")
    run.add_argument("--config", required=True, help="path to a JSON run config")
    run.add_argument("--out", help="output directory (overrides config out_dir)")
    run.add_argument("--seed", type=int, help="override the root seed")
    run.add_argument("--workers", type=int, help="override the worker count")
    run.add_argument(
        "--method",
        action="append",
        choices=METHODS,
        help="clustering method to run (repeatable; overrides config)",
    )
    run.add_argument("--k", type=int, help="override the BIC-selected cluster count")

    selk = sub.add_parser("select-k", help="BIC cluster-count selection")
    selk.add_argument("--weights", required=True, help="weight-vector CSV")
    selk.add_argument("--k-max", type=int, default=9)
    selk.add_argument("--seed", type=int, default=0)
    selk.add_argument("--restarts", type=int, default=5)
    selk.add_argument("--out", help="write the BIC curve CSV here")

    clus = sub.add_parser("cluster", help="cluster clients from a weight CSV")
    clus.add_argument("--weights", required=True, help="weight-vector CSV")
    clus.add_argument("--method", required=True, choices=METHODS)
    clus.add_argument(
        "--k", type=int, help="cluster count (default: BIC-selected)"
    )
    clus.add_argument("--seed", type=int, default=0)
    clus.add_argument("--out", help="write the assignment CSV here")

    sched = sub.add_parser("schedule", help="dump the learning-rate curve")
    sched.add_argument("--base-lr", type=float, default=1e-5)
    sched.add_argument("--max-lr", type=float, default=1e-3)
    sched.add_argument("--step-size", type=int, default=4)
    sched.add_argument("--epochs", type=int, required=True)
    sched.add_argument("--out", help="write the (epoch, lr) CSV here")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
        config.raw["seed"] = args.seed
    if args.workers is not None:
        config.workers = args.workers
    if args.method:
        config.methods = list(dict.fromkeys(args.method))
        config.raw["methods"] = config.methods
    if args.k is not None:
        config.k_override = args.k
        config.raw["k"] = args.k
    out_dir = args.out or config.out_dir
    if out_dir is None:
        raise ConfigError("no output directory: set out_dir in the config or pass --out")
    report = run_pipeline(config)
    for path in emit_reports(report, out_dir):
        print(path)
    return 0


def _cmd_select_k(args) -> int:
    weights = read_weight_csv(args.weights)
    result = model_selection.select_k(
        weights, args.k_max, args.seed, restarts=args.restarts
    )
    print("k,log_likelihood,m_p,n,bic")
    for rec in result.records:
        print(
            f"{rec.k},{rec.log_likelihood:.17g},{rec.param_count},"
            f"{rec.sample_count},{rec.score:.17g}"
        )
    print(f"selected_k,{result.selected_k}")
    if args.out:
        write_bic_csv(result, args.out)
    return 0


def _cmd_cluster(args) -> int:
    weights = read_weight_csv(args.weights)
    k = args.k
    if k is None:
        k = model_selection.select_k(
            weights, min(9, len(weights)), args.seed
        ).selected_k
    if args.method == "kmeans":
        assignment = clustering.kmeans(weights, k, args.seed)
    elif args.method == "agglomerative":
        assignment = clustering.agglomerative(clustering.distance_matrix(weights), k)
    else:
        _, assignment = clustering.gmm_fit(weights, k, args.seed)
    lines = ["client_id,cluster"]
    for cid in sorted(assignment.mapping):
        lines.append(f"{cid},{assignment.mapping[cid]}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_schedule(args) -> int:
    schedule = LRSchedule(
        base_lr=args.base_lr, max_lr=args.max_lr, step_size=args.step_size
    )
    if args.epochs < 1:
        raise ConfigError("--epochs must be >= 1")
    lines = ["epoch,lr"]
    for epoch in range(args.epochs):
        lines.append(f"{epoch},{lr_at(schedule, epoch):.17g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "select-k": _cmd_select_k,
        "cluster": _cmd_cluster,
        "schedule": _cmd_schedule,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FedStackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
