"""Command-line entry point: ``wpccn run | three-node | solve``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from . import experiments as ex
from .netmodel import load_instance

log = logging.getLogger("wpccn")


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        yield fh


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, help="override the number of trials")
    p.add_argument("--threads", type=int, default=1, help="worker processes for independent trials")
    # SUPPRESS keeps a flag given before the subcommand from being reset
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wpccn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Monte-Carlo sweep from a JSON experiment config; writes per-trial CSV")
    p.add_argument("config")
    p.add_argument("--summary", help="also write the per-(sweep value, algorithm) summary CSV here")
    _common(p)

    p = sub.add_parser("three-node", help="relay-position sweep of the single-source, single-relay network")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("solve", help="solve one network (instance or scenario JSON) with one algorithm")
    p.add_argument("instance")
    p.add_argument("--algo", required=True, choices=sorted(ex.ALGORITHMS) + ["exhaustive"])
    p.add_argument("--trace", help="bba only: write the search trace as JSON lines")
    _common(p)
    return parser


def _cmd_run(args) -> int:
    cfg = ex.ExperimentConfig.load(args.config)
    overrides = {k: v for k, v in (("seed", args.seed), ("trials", args.trials)) if v is not None}
    cfg = dataclasses.replace(cfg, **overrides)
    records = []
    with _output(args.out) as fh:
        # stream rows so long sweeps leave partial results behind
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ex.CSV_COLUMNS)
        for r in ex.iter_records(cfg, args.threads):
            records.append(r)
            w.writerow(ex.record_row(r))
            fh.flush()
    summary = ex.summarize(records)
    if args.summary:
        with _output(args.summary) as fh:
            ex.write_summary_csv(summary, fh)
    for row in summary:
        log.info(
            "%s=%s %-8s mean=%.6g s  ci95=%.3g s  feasible=%d/%d",
            row["sweep_param"], row["sweep_value"], row["algorithm"],
            row["mean_total_s"], row["ci95_s"], row["feasible"], row["trials"],
        )
    return 0


def _cmd_three_node(args) -> int:
    cfg = ex.ThreeNodeConfig.load(args.config)
    res = ex.three_node_sweep(cfg)
    with _output(args.out) as fh:
        ex.write_three_node_csv(res, fh)
    for pmax in cfg.pmax_w:
        c, e = res.crossovers[pmax], res.benefit_edges[pmax]
        log.info(
            "pmax=%g W crossovers=%s gain-test edges=%s region width error=%.4g",
            pmax, [round(v, 6) for v in c], [round(v, 6) for v in e], ex.region_width_error(c, e),
        )
    return 0


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance, args.seed)
    if args.algo == "bba" and args.trace:
        from .relay import bba

        with open(args.trace, "w") as tf:
            sched = bba(inst, trace=lambda rec: tf.write(json.dumps(rec) + "\n"))
    elif args.algo == "exhaustive":
        from .relay import exhaustive

        sched = exhaustive(inst)
    else:
        sched = ex.ALGORITHMS[args.algo](inst)
    with _output(args.out) as fh:
        fh.write(sched.to_json() + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        raise SystemExit("--threads must be >= 1")
    handlers = {"run": _cmd_run, "three-node": _cmd_three_node, "solve": _cmd_solve}
    try:
        return handlers[args.command](args)
    except (OSError, ValueError, TypeError, KeyError) as err:
        print(f"wpccn: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
