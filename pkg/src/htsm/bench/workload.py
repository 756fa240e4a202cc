"""Random batches of ``SELECT FUN(c) FROM lineitem WHERE c' >= alpha`` queries."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..catalog import DataUnitKey, Filter, Table
from ..engine import Query

AGG_TYPES = ("int64", "float64")
FILTER_TYPES = ("int64", "float64", "date32")


def column_stats(table: Table) -> dict[str, tuple[object, object, str]]:
    """Global ``(min, max, type)`` per column, read off the zone maps."""
    out = {}
    for cid, col in enumerate(table.schema.columns):
        units = [table.directory[DataUnitKey(c, cid)] for c in range(table.chunk_count)]
        if units:
            out[col.name] = (min(u.min_value for u in units), max(u.max_value for u in units), col.type)
    return out


def draw_alpha(rng: np.random.Generator, lo, hi, type_: str):
    """Normal draw centred between ``lo`` and ``hi``, clipped into range."""
    lo_f, hi_f = float(lo), float(hi)
    x = rng.normal((lo_f + hi_f) / 2, (hi_f - lo_f) / 4 if hi_f > lo_f else 1.0)
    x = min(max(x, lo_f), hi_f)
    if type_ == "float64":
        return round(x, 2) if lo_f <= round(x, 2) <= hi_f else x
    return int(min(max(round(x), lo), hi))


def generate_workload(
    seed: int,
    count: int,
    stats: Mapping[str, tuple[object, object, str]],
    column_pool: Sequence[str] | None = None,
    filter_rate: float = 1.0,
) -> list[Query]:
    """``count`` queries; aggregate and filter columns come from ``column_pool``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng([seed, 0x51])
    if column_pool is None:
        agg_pool = [c for c, (_, _, t) in stats.items() if t in AGG_TYPES]
        filter_pool = [c for c, (_, _, t) in stats.items() if t in FILTER_TYPES]
    else:
        agg_pool = [c for c in column_pool if stats[c][2] in AGG_TYPES]
        filter_pool = [c for c in column_pool if stats[c][2] in FILTER_TYPES]
    if not agg_pool:
        raise ValueError("no numeric columns to aggregate")
    queries = []
    for _ in range(count):
        agg = "SUM" if rng.random() < 0.5 else "AVG"
        col = agg_pool[rng.integers(len(agg_pool))]
        flt = None
        if filter_pool and rng.random() < filter_rate:
            fcol = filter_pool[rng.integers(len(filter_pool))]
            lo, hi, t = stats[fcol]
            flt = Filter(fcol, ">=", draw_alpha(rng, lo, hi, t))
        queries.append(Query(agg, (col,), flt))
    return queries
