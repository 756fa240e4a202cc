"""Command line entry point: ``htsm-bench gen|run|sweep|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..catalog import ChunkingConfig, open_table
from .datagen import generate_table
from .experiment import BenchConfig, dumps, report, run_experiment, sweep


def _fraction(text: str):
    if text.lower() in ("unlimited", "none", "inf"):
        return None
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="htsm-bench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a seeded lineitem table")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--scale", type=int, default=100_000)
    g.add_argument("--chunk-tuples", type=int, default=4096)
    g.add_argument("--page-bytes", type=int, default=4096)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="run query batches against a table")
    r.add_argument("--table", help="table file from 'gen'; generated on the fly when omitted")
    r.add_argument("--mode", choices=["lru", "cs", "highth"], default="highth")
    r.add_argument("--window", type=int, default=30)
    r.add_argument("--cache-frac", type=_fraction, default=0.2,
                   help="cache size as a fraction of table bytes, or 'unlimited'")
    r.add_argument("--device", choices=["hdd", "ssd", "file"], default="hdd")
    r.add_argument("--devices", type=int, default=1)
    r.add_argument("--batches", type=int, default=3)
    r.add_argument("--queries", type=int, default=16)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--scale", type=int, default=100_000, help="rows when generating on the fly")
    r.add_argument("--cpu-cost", type=float, default=0.0, help="seconds per tuple per query")
    r.add_argument("--out", required=True, help="metrics JSON path")

    s = sub.add_parser("sweep", help="run a parameter grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)

    rep = sub.add_parser("report", help="summarise metrics files")
    rep.add_argument("--in", dest="inputs", nargs="+", required=True)
    rep.add_argument("--format", choices=["csv", "text"], default="text")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            table, _ = generate_table(args.seed, args.scale, args.out,
                                      ChunkingConfig(args.chunk_tuples, args.page_bytes))
            print(f"wrote {args.out}: {table.schema.tuple_count} tuples, {table.chunk_count} chunks")
        elif args.command == "run":
            common = dict(seed=args.seed, batches=args.batches, queries=args.queries,
                          mode=args.mode, window=args.window, cache_fraction=args.cache_frac,
                          device=args.device, devices=args.devices, cpu_cost=args.cpu_cost)
            if args.table:
                table = open_table(args.table)
                config = BenchConfig(scale=table.schema.tuple_count,
                                     tuples_per_chunk=table.config.tuples_per_chunk,
                                     page_bytes=table.config.page_bytes, **common)
                result = run_experiment(config, table)
            else:
                result = run_experiment(BenchConfig(scale=args.scale, **common))
            Path(args.out).write_text(dumps(result))
            t = result["totals"]
            print(f"requests {t['request_count']}  bytes {t['bytes_read']}  "
                  f"sim_time {t['sim_time']:.6f}s  hit_ratio {t['hit_ratio']:.3f}  "
                  f"oracle_match {result['oracle_match']}")
            if not result["oracle_match"]:
                print("error: results differ from the full-scan oracle", file=sys.stderr)
                return 1
        elif args.command == "sweep":
            grid = json.loads(Path(args.grid).read_text())
            rows = sweep(grid, args.out)
            failed = [r for r in rows if r.get("error")]
            print(f"{len(rows)} cells, {len(failed)} failed; summary in {args.out}/summary.csv")
            if failed:
                return 1
        elif args.command == "report":
            sys.stdout.write(report(args.inputs, args.format))
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
