"""Command-line entry point.

Subcommands:
  run        run one experiment from a TOML config
  gen-synth  materialize a synthetic dataset in TUDataset text layout
  inspect    print dataset statistics (graphs, classes, avg nodes, avg edges)
  compare    run several configs on a common seed and emit a joined CSV
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness, protocol
from .errors import DgflError
from .tudata import dataset_stats, parse_tudataset, write_tudataset


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgfl")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None)

    gen = sub.add_parser("gen-synth", help="write a synthetic dataset")
    gen.add_argument("--spec", required=True,
                     help="TOML file with a [dataset] table (kind = synthetic)")
    gen.add_argument("--out", required=True)

    ins = sub.add_parser("inspect", help="print dataset statistics")
    ins.add_argument("--data", required=True)
    ins.add_argument("--name", required=True)

    cmp_ = sub.add_parser("compare", help="run several configs, joined output")
    cmp_.add_argument("--configs", nargs="+", required=True)
    cmp_.add_argument("--seed", type=int, default=None)
    cmp_.add_argument("--out", default="compare_out")
    return parser


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    logs = protocol.run_experiment(config)
    if logs:
        summary = harness.emit_metrics(logs, config.out_dir, config.convergence)
        print(f"wrote {config.out_dir}/metrics.csv "
              f"(final mean accuracy: {summary['final_mean_accuracy']})")
    else:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(
            "round,client,loss,accuracy,receiver,n_senders,grad_norm\n")
        print(f"wrote {config.out_dir}/metrics.csv (no rounds)")
    return 0


def _cmd_gen_synth(args) -> int:
    config = harness.load_config(args.spec)
    dataset = config.load_dataset()
    write_tudataset(dataset, args.out, dataset.name)
    print(f"wrote {len(dataset.graphs)} graphs to {args.out}/{dataset.name}_*.txt")
    return 0


def _cmd_inspect(args) -> int:
    stats = dataset_stats(parse_tudataset(args.data, args.name))
    print(f"{args.name}: {stats['graphs']} graphs, {stats['classes']} classes, "
          f"avg nodes {stats['avg_nodes']:.2f}, avg edges {stats['avg_edges']:.2f}")
    return 0


def _cmd_compare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["method,round,client,loss,accuracy,receiver,n_senders,grad_norm"]
    common_seed = args.seed
    for cfg_path in args.configs:
        config = harness.load_config(cfg_path)
        if common_seed is None:
            common_seed = config.seed
        config.seed = common_seed
        logs = protocol.run_experiment(config)
        sub = out / config.method
        if logs:
            harness.emit_metrics(logs, sub, config.convergence)
            body = (sub / "metrics.csv").read_text().splitlines()[1:]
            rows.extend(f"{config.method},{line}" for line in body)
    (out / "compare.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {out}/compare.csv")
    return 0


def cli(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    handlers = {"run": _cmd_run, "gen-synth": _cmd_gen_synth,
                "inspect": _cmd_inspect, "compare": _cmd_compare}
    try:
        return handlers[args.command](args)
    except DgflError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))
