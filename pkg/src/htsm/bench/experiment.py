"""Experiment driver: batches, sweeps and metrics reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..cache import CacheStats, hit_ratio, served_ratio
from ..catalog import ChunkingConfig, DataUnitKey, Table
from ..device import PROFILES, SSD, DiskArray, IoStats
from ..engine import QueryExecutor, oracle_scan, plan
from ..scheduler import Mode, PolicyConfig, run_policy
from .datagen import generate_table
from .workload import column_stats, generate_workload

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REQUIRED_FIELDS = {
    "": ("schema", "config", "batches", "totals"),
    "totals": ("request_count", "bytes_read", "sim_time", "hit_ratio", "cumulative_times"),
}


class SchemaError(ValueError):
    pass


@dataclass
class BenchConfig:
    seed: int = 42
    scale: int = 100_000
    batches: int = 3
    queries: int = 16
    mode: str = "highth"
    window: int = 30
    cache_fraction: float | None = 0.2  # None means unlimited
    device: str = "hdd"
    tuples_per_chunk: int = 4096
    page_bytes: int = 4096
    devices: int = 1
    cpu_cost: float = 0.0
    column_pool: list[str] | None = None

    def __post_init__(self):
        Mode(self.mode)
        for name in ("batches", "queries", "window", "tuples_per_chunk", "devices"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.scale < 0:
            raise ValueError("scale must be >= 0")
        if self.cache_fraction is not None and not 0 < self.cache_fraction <= 1:
            raise ValueError("cache_fraction must lie in (0, 1] or be None")
        if self.device not in ("hdd", "ssd", "file"):
            raise ValueError(f"unknown device {self.device!r}")

    def chunking(self) -> ChunkingConfig:
        return ChunkingConfig(self.tuples_per_chunk, self.page_bytes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _batch_seed(seed: int, batch: int) -> int:
    return int(np.random.SeedSequence([seed, batch]).generate_state(1)[0])


def run_experiment(
    config: BenchConfig,
    table: Table | None = None,
    columns: dict | None = None,
    workdir: str | os.PathLike | None = None,
) -> dict:
    """Run ``config.batches`` independent batches and build the metrics report.

    Without ``table`` the data is generated into ``workdir`` (or a temporary
    directory). Without ``columns`` the oracle reads the columns straight from
    the table file.
    """
    tmp = None
    if table is None:
        if workdir is None:
            tmp = tempfile.TemporaryDirectory()
            workdir = tmp.name
        path = Path(workdir) / f"lineitem_{config.seed}_{config.scale}_{config.tuples_per_chunk}_{config.page_bytes}.htsm"
        table, columns = generate_table(config.seed, config.scale, path, config.chunking())
    try:
        if columns is None:
            columns = {c.name: table.read_column(i) for i, c in enumerate(table.schema.columns)}
        return _run(config, table, columns)
    finally:
        if tmp is not None:
            tmp.cleanup()


def full_scan_time(table: Table, profile, devices: int = 1) -> float:
    """Simulated seconds to read every unit once, chunk by chunk.

    Used as the layout-sizing benchmark in sweeps over chunk and page sizes.
    """
    disk = DiskArray(table, profile, devices)
    total = 0.0
    for chunk in range(table.chunk_count):
        per_dev = disk.plan(DataUnitKey(chunk, c) for c in range(len(table.schema)))
        total += max((sum(profile.cost(r.length) for r in reqs) for reqs in per_dev.values()), default=0.0)
    return total


def _run(config: BenchConfig, table: Table, columns: dict) -> dict:
    stats = column_stats(table)
    capacity = None
    if config.cache_fraction is not None:
        capacity = int(config.cache_fraction * table.total_unit_bytes)
    backend = "file" if config.device == "file" else "sim"
    profile = SSD if config.device == "file" else PROFILES[config.device]
    pconf = PolicyConfig(config.window, capacity, profile, config.devices, backend, config.cpu_cost)

    batches = []
    total_io = IoStats()
    total_cache = CacheStats()
    cumulative = []
    offset = 0.0
    all_match = True
    for b in range(config.batches):
        queries = generate_workload(_batch_seed(config.seed, b), config.queries, stats, config.column_pool)
        plans, execs = [], {}
        for qid, q in enumerate(queries):
            p = plan(q, table, config.window, qid)
            plans.append(p)
            execs[qid] = QueryExecutor(q, p, table.schema)

        def consume(qid, chunk, payloads):
            execs[qid].on_chunk(chunk, payloads)

        t0 = time.perf_counter()
        res = run_policy(table, plans, config.mode, pconf, consume)
        wall = time.perf_counter() - t0
        sched = res.scheduler
        rows = []
        for idx, qid in enumerate(sched.completion_order):
            q = queries[qid]
            value = execs[qid].result()
            expected = oracle_scan(q, columns)
            match = value == expected
            all_match &= match
            rows.append({
                "query_id": qid,
                "sql": str(q),
                "completion_index": idx,
                "completed_at": sched.queries[qid].completed_at,
                "chunks": len(plans[qid].chunks),
                "result": value,
                "oracle": expected,
                "oracle_match": match,
            })
            cumulative.append(offset + sched.queries[qid].completed_at)
        offset += sched.elapsed
        io_stats, cstats = res.io, res.cache_stats
        total_io.merge(io_stats)
        for f in ("lookups", "hits", "shared", "evictions", "drops"):
            setattr(total_cache, f, getattr(total_cache, f) + getattr(cstats, f))
        batch = {
            "batch": b,
            "queries": rows,
            "io": io_stats.to_dict(),
            "cache": cstats.to_dict(),
            "request_count": io_stats.request_count,
            "bytes_read": io_stats.bytes_read,
            "sim_time": io_stats.sim_time,
            "elapsed": sched.elapsed,
        }
        if backend == "file":
            batch["wall_time"] = wall
        batches.append(batch)

    totals = {
        "request_count": total_io.request_count,
        "bytes_read": total_io.bytes_read,
        "sim_time": total_io.sim_time,
        "elapsed": offset,
        "lookups": total_cache.lookups,
        "hits": total_cache.hits,
        "hit_ratio": hit_ratio(total_cache),
        "served_ratio": served_ratio(total_cache),
        "cumulative_times": cumulative,
    }
    if backend == "file":
        totals["wall_time"] = sum(b["wall_time"] for b in batches)
    return {
        "schema": SCHEMA_VERSION,
        "config": config.to_dict(),
        "table": {"tuples": table.schema.tuple_count, "chunks": table.chunk_count,
                  "unit_bytes": table.total_unit_bytes, "cache_capacity": capacity,
                  "full_scan_time": full_scan_time(table, profile, config.devices)},
        "batches": batches,
        "totals": totals,
        "oracle_match": all_match,
    }


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


# sweeps ---------------------------------------------------------------

def expand_grid(grid: dict) -> list[dict]:
    """Cross product of a ``{"base": {...}, "grid": {param: [values]}}`` document.

    A document without ``grid`` is treated as the grid itself.
    """
    base = dict(grid.get("base", {}))
    axes = grid.get("grid", {k: v for k, v in grid.items() if k != "base"})
    names = list(axes)
    cells = []
    for values in itertools.product(*(axes[n] if isinstance(axes[n], list) else [axes[n]] for n in names)):
        cell = dict(base)
        cell.update(zip(names, values))
        cells.append(cell)
    return cells


SUMMARY_FIELDS = ("cell", "mode", "window", "cache_fraction", "device", "tuples_per_chunk",
                  "page_bytes", "devices", "request_count", "bytes_read", "sim_time", "elapsed",
                  "hit_ratio", "served_ratio", "full_scan_time", "oracle_match", "error")


def sweep(grid: dict, out_dir: str | os.PathLike) -> list[dict]:
    """Run every grid cell; a failing cell is recorded and the sweep goes on."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables: dict[tuple, tuple] = {}
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        for i, cell in enumerate(expand_grid(grid)):
            row = {"cell": i, **{k: cell.get(k) for k in SUMMARY_FIELDS if k in cell}}
            try:
                config = BenchConfig(**cell)
                key = (config.seed, config.scale, config.tuples_per_chunk, config.page_bytes)
                if key not in tables:
                    path = Path(tmp) / f"t{len(tables)}.htsm"
                    tables[key] = generate_table(config.seed, config.scale, path, config.chunking())
                report = run_experiment(config, *tables[key])
                (out / f"cell_{i:03d}.json").write_text(dumps(report))
                cfg = report["config"]
                row.update({k: cfg[k] for k in SUMMARY_FIELDS if k in cfg})
                row.update({k: report["totals"][k] for k in SUMMARY_FIELDS if k in report["totals"]})
                row["full_scan_time"] = report["table"]["full_scan_time"]
                row["oracle_match"] = report["oracle_match"]
                row["error"] = ""
            except Exception as exc:  # recorded per cell
                log.warning("sweep cell %d failed: %s", i, exc)
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    (out / "summary.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return rows


# reporting ------------------------------------------------------------

def validate_report(doc: dict, source: str = "<report>") -> None:
    for section, fields in REQUIRED_FIELDS.items():
        obj = doc if not section else doc.get(section)
        if not isinstance(obj, dict):
            raise SchemaError(f"{source}: missing field {section!r}")
        for f in fields:
            if f not in obj:
                name = f"{section}.{f}" if section else f
                raise SchemaError(f"{source}: missing field {name!r}")
    if doc["schema"] != SCHEMA_VERSION:
        raise SchemaError(f"{source}: unsupported schema version {doc['schema']!r}")


def load_reports(paths: Iterable[str | os.PathLike]) -> list[tuple[str, dict]]:
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(x for x in p.glob("*.json") if x.name != "summary.json"))
        else:
            files.append(p)
    if not files:
        raise SchemaError("no metrics files found")
    out = []
    for f in files:
        try:
            doc = json.loads(Path(f).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{f}: not valid JSON: {exc}") from None
        validate_report(doc, str(f))
        out.append((Path(f).stem, doc))
    return out


def _label(name: str, doc: dict) -> dict:
    c = doc["config"]
    return {"run": name, "mode": c.get("mode"), "window": c.get("window"),
            "cache_fraction": c.get("cache_fraction")}


def report_rows(reports: Sequence[tuple[str, dict]]) -> list[dict]:
    """Long-format rows: cumulative time per query index, requests per cache fraction."""
    rows = []
    for name, doc in reports:
        lab = _label(name, doc)
        for i, t in enumerate(doc["totals"]["cumulative_times"]):
            rows.append({"series": "cumulative_time", **lab, "x": i + 1, "y": t})
        frac = lab["cache_fraction"]
        rows.append({"series": "request_count", **lab,
                     "x": "unlimited" if frac is None else frac,
                     "y": doc["totals"]["request_count"]})
    return rows


def report(paths: Iterable[str | os.PathLike], fmt: str = "text") -> str:
    reports = load_reports(paths)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["series", "run", "mode", "window", "cache_fraction", "x", "y"])
        w.writeheader()
        w.writerows(report_rows(reports))
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")

    lines = []
    for name, doc in reports:
        lab, t = _label(name, doc), doc["totals"]
        frac = "unlimited" if lab["cache_fraction"] is None else f"{lab['cache_fraction']:.0%}"
        lines.append(f"== {name}: mode={lab['mode']} W={lab['window']} cache={frac}")
        lines.append(f"   requests {t['request_count']}  bytes {t['bytes_read']}  "
                     f"sim_time {t['sim_time']:.6f}s  hit_ratio {t['hit_ratio']:.3f}")
        times = t["cumulative_times"]
        step = max(1, len(times) // 8)
        marks = list(range(step - 1, len(times), step))
        if times and marks[-1] != len(times) - 1:
            marks.append(len(times) - 1)
        lines.append("   query  cumulative_time")
        lines.extend(f"   {i + 1:5d}  {times[i]:.6f}" for i in marks)

    by_mode: dict[str, list] = {}
    for name, doc in reports:
        by_mode.setdefault(doc["config"].get("mode"), []).append((name, doc))
    if len(by_mode) >= 2:
        lines.append("== comparison")
        modes = sorted(by_mode)
        base = modes[0]
        b = by_mode[base][0][1]["totals"]
        for m in modes[1:]:
            o = by_mode[m][0][1]["totals"]
            red = 1 - o["request_count"] / b["request_count"] if b["request_count"] else 0.0
            lines.append(
                f"   {m} vs {base}: requests {o['request_count']} vs {b['request_count']} "
                f"(I/O reduction {red:.1%}), sim_time {o['sim_time']:.6f} vs {b['sim_time']:.6f} "
                f"(delta {o['sim_time'] - b['sim_time']:+.6f}s)")

    lines.append("== requests by cache fraction")
    for r in report_rows(reports):
        if r["series"] == "request_count":
            lines.append(f"   {r['run']:<16} {r['mode']:<7} W={r['window']:<3} {str(r['x']):<10} {r['y']}")
    return "\n".join(lines) + "\n"
