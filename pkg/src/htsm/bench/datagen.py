"""Seeded lineitem-like table generator.

Each column draws from its own stream seeded by ``(seed, column_index)``, so
adding rows or changing one column's recipe never perturbs another column.
``orderkey`` and ``shipdate`` are clustered along the row order, which gives
their zone maps something to prune; the rest are uniform.
"""

from __future__ import annotations

import os

import numpy as np

from ..catalog import Column, ChunkingConfig, Table, TableSchema, write_table

LINEITEM_COLUMNS = (
    ("orderkey", "int64"),
    ("partkey", "int64"),
    ("suppkey", "int64"),
    ("linenumber", "int64"),
    ("quantity", "int64"),
    ("extendedprice", "float64"),
    ("discount", "float64"),
    ("tax", "float64"),
    ("supplycost", "float64"),
    ("listprice", "float64"),
    ("netweight", "float64"),
    ("receiptlag", "int64"),
    ("shipdate", "date32"),
    ("commitdate", "date32"),
    ("shipinstruct", "str16"),
    ("shipmode", "str16"),
)

EPOCH_1992 = 8035  # 1992-01-01 as days since 1970-01-01
DATE_SPAN = 2526

_INSTRUCT = np.array([b"DELIVER IN PERSON", b"COLLECT COD", b"NONE", b"TAKE BACK RETURN"], dtype="S16")
_MODES = np.array([b"REG AIR", b"AIR", b"RAIL", b"SHIP", b"TRUCK", b"MAIL", b"FOB"], dtype="S16")


def lineitem_schema(tuple_count: int) -> TableSchema:
    return TableSchema(tuple(Column(n, t) for n, t in LINEITEM_COLUMNS), tuple_count)


def _cents(rng, lo, hi, n):
    return rng.integers(int(lo * 100), int(hi * 100) + 1, n) / 100.0


def _make(name: str, rng: np.random.Generator, n: int) -> np.ndarray:
    if name == "orderkey":
        return np.cumsum(rng.integers(1, 4, n), dtype=np.int64)
    if name == "partkey":
        return rng.integers(1, 200_001, n)
    if name == "suppkey":
        return rng.integers(1, 10_001, n)
    if name == "linenumber":
        return rng.integers(1, 8, n)
    if name == "quantity":
        return rng.integers(1, 51, n)
    if name == "extendedprice":
        return _cents(rng, 900, 104_950, n)
    if name == "discount":
        return rng.integers(0, 11, n) / 100.0
    if name == "tax":
        return rng.integers(0, 9, n) / 100.0
    if name == "supplycost":
        return _cents(rng, 1, 1000, n)
    if name == "listprice":
        return _cents(rng, 900, 2000, n)
    if name == "netweight":
        return _cents(rng, 0.1, 50, n)
    if name == "receiptlag":
        return rng.integers(1, 31, n)
    if name == "shipdate":
        base = EPOCH_1992 + (np.arange(n, dtype=np.int64) * DATE_SPAN) // max(n, 1)
        return (base + rng.integers(0, 122, n)).astype(np.int32)
    if name == "commitdate":
        return (EPOCH_1992 + rng.integers(0, DATE_SPAN + 1, n)).astype(np.int32)
    if name == "shipinstruct":
        return _INSTRUCT[rng.integers(0, len(_INSTRUCT), n)]
    if name == "shipmode":
        return _MODES[rng.integers(0, len(_MODES), n)]
    raise KeyError(name)


def generate_columns(seed: int, scale: int, schema: TableSchema | None = None) -> dict[str, np.ndarray]:
    if scale < 0:
        raise ValueError("scale must be >= 0")
    schema = schema or lineitem_schema(scale)
    out = {}
    for i, col in enumerate(schema.columns):
        rng = np.random.default_rng([seed, i])
        out[col.name] = np.asarray(_make(col.name, rng, scale), dtype=col.dtype)
    return out


def generate_table(
    seed: int,
    scale: int,
    path: str | os.PathLike,
    config: ChunkingConfig | None = None,
) -> tuple[Table, dict[str, np.ndarray]]:
    """Write a seeded table to ``path``; returns it with the in-memory copy."""
    schema = lineitem_schema(scale)
    columns = generate_columns(seed, scale, schema)
    table = write_table(schema, config or ChunkingConfig(4096, 4096), columns, path)
    return table, columns
