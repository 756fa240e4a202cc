"""A tiny aggregate-query layer over the chunked table.

Only one query shape is understood::

    SELECT SUM|AVG(<expr>) FROM <table> [WHERE <col> <op> <literal>]

where ``<expr>`` is a column or ``price * (1 - discount) * (1 + tax)``.

Sums are accumulated left to right in float64, in ascending chunk then row
order, whatever order chunks are delivered in. The full-scan oracle uses the
same order, so the two agree exactly rather than to a tolerance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .catalog import NUMERIC_TYPES, CatalogError, Filter, Table, TableSchema, prune_chunks
from .scheduler import QueryPlan


class QueryError(Exception):
    pass


@dataclass(frozen=True)
class Query:
    agg: str
    expr: tuple[str, ...]
    filter: Filter | None = None
    table: str = "lineitem"

    def __post_init__(self):
        object.__setattr__(self, "agg", self.agg.upper())
        if self.agg not in ("SUM", "AVG"):
            raise QueryError(f"unsupported aggregate {self.agg!r}")
        if isinstance(self.expr, str):
            object.__setattr__(self, "expr", (self.expr,))
        if len(self.expr) not in (1, 3):
            raise QueryError("expression must be a column or price * (1 - discount) * (1 + tax)")

    @property
    def columns(self) -> list[str]:
        cols = list(self.expr)
        if self.filter is not None and self.filter.column not in cols:
            cols.append(self.filter.column)
        return cols

    def validate(self, schema: TableSchema) -> None:
        for name in self.columns:
            try:
                col = schema.columns[schema.column_id(name)]
            except CatalogError as exc:
                raise QueryError(str(exc)) from None
            if col.type not in NUMERIC_TYPES:
                raise QueryError(f"column {name!r} is not numeric")

    def __str__(self) -> str:
        if len(self.expr) == 1:
            e = self.expr[0]
        else:
            e = "{} * (1 - {}) * (1 + {})".format(*self.expr)
        s = f"SELECT {self.agg}({e}) FROM {self.table}"
        if self.filter is not None:
            s += f" WHERE {self.filter.column} {self.filter.op} {self.filter.value!r}"
        return s


_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_QUERY_RE = re.compile(
    rf"""^\s*SELECT\s+(?P<agg>SUM|AVG)\s*\(\s*(?P<expr>.+?)\s*\)\s+
         FROM\s+(?P<table>{_IDENT})
         (?:\s+WHERE\s+(?P<col>{_IDENT})\s*(?P<op>>=|<=|>|<)\s*(?P<lit>[^\s;]+))?\s*;?\s*$""",
    re.IGNORECASE | re.VERBOSE,
)
_PRODUCT_RE = re.compile(
    rf"^(?P<p>{_IDENT})\s*\*\s*\(\s*1\s*-\s*(?P<d>{_IDENT})\s*\)\s*\*\s*\(\s*1\s*\+\s*(?P<t>{_IDENT})\s*\)$")


def _literal(text: str):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            raise QueryError(f"bad literal {text!r}") from None


def parse_query(text: str) -> Query:
    m = _QUERY_RE.match(text)
    if not m:
        raise QueryError(f"cannot parse query: {text!r}")
    expr = m["expr"]
    if re.fullmatch(_IDENT, expr):
        cols = (expr,)
    else:
        pm = _PRODUCT_RE.match(expr)
        if not pm:
            raise QueryError(f"unsupported expression {expr!r}")
        cols = (pm["p"], pm["d"], pm["t"])
    flt = Filter(m["col"], m["op"], _literal(m["lit"])) if m["col"] else None
    return Query(m["agg"], cols, flt, m["table"])


def plan(query: Query, table: Table, window: int = 1, query_id: int = 0) -> QueryPlan:
    """Required columns plus the zone-map-pruned chunk list."""
    query.validate(table.schema)
    cols = frozenset(table.schema.column_id(c) for c in query.columns)
    return QueryPlan(query_id, cols, tuple(prune_chunks(query.filter, table)), window)


@dataclass(frozen=True)
class AggState:
    sum: float = 0.0
    count: int = 0


def _evaluate(query: Query, cols: Mapping[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    if len(query.expr) == 1:
        values = cols[query.expr[0]].astype(np.float64)
    else:
        p, d, t = (cols[c].astype(np.float64) for c in query.expr)
        values = p * (1.0 - d) * (1.0 + t)
    if query.filter is None:
        return values, np.ones(len(values), dtype=bool)
    return values, query.filter.mask(cols[query.filter.column])


def fold_chunk(state: AggState, payloads: Mapping[str, bytes | np.ndarray], query: Query,
               schema: TableSchema) -> AggState:
    """Accumulate one chunk, rows in order, into ``state``."""
    cols = {}
    for name in query.columns:
        if name not in payloads:
            raise QueryError(f"payload is missing column {name!r}")
        raw = payloads[name]
        dtype = schema.columns[schema.column_id(name)].dtype
        cols[name] = np.frombuffer(raw, dtype=dtype) if isinstance(raw, (bytes, bytearray, memoryview)) else np.asarray(raw)
    values, mask = _evaluate(query, cols)
    picked = values[mask]
    if not len(picked):
        return state
    # add.accumulate is a strict left-to-right running sum
    total = np.add.accumulate(np.concatenate(([state.sum], picked)))[-1]
    return AggState(float(total), state.count + len(picked))


def finalize(state: AggState, agg: str) -> float | None:
    """SUM of nothing is 0; AVG of nothing is ``None``."""
    if agg.upper() == "SUM":
        return state.sum if state.count else 0.0
    if state.count == 0:
        return None
    return state.sum / state.count


class QueryExecutor:
    """Folds delivered chunks, buffering any that arrive ahead of order."""

    def __init__(self, query: Query, plan: QueryPlan, schema: TableSchema):
        self.query = query
        self.plan = plan
        self.schema = schema
        self.state = AggState()
        self._names = {schema.column_id(n): n for n in query.columns}
        self._pending: dict[int, dict] = {}
        self._next = 0
        self.received: list[int] = []

    def on_chunk(self, chunk_id: int, payloads: Mapping[int, bytes]) -> None:
        if chunk_id in self._pending or chunk_id in self.received:
            raise QueryError(f"chunk {chunk_id} delivered twice")
        self.received.append(chunk_id)
        self._pending[chunk_id] = {self._names[c]: v for c, v in payloads.items() if c in self._names}
        chunks = self.plan.chunks
        while self._next < len(chunks) and chunks[self._next] in self._pending:
            self.state = fold_chunk(self.state, self._pending.pop(chunks[self._next]),
                                    self.query, self.schema)
            self._next += 1

    @property
    def done(self) -> bool:
        return self._next == len(self.plan.chunks)

    def result(self) -> float | None:
        if not self.done:
            raise QueryError("query has not received all of its chunks")
        return finalize(self.state, self.query.agg)


def oracle_scan(query: Query, columns: Mapping[str, Sequence]) -> float | None:
    """Row-at-a-time reference answer straight from the raw column arrays."""
    refs = [list(np.asarray(columns[c]).tolist()) for c in query.expr]
    n = len(refs[0])
    flt = query.filter
    fvals = np.asarray(columns[flt.column]).tolist() if flt else None
    ops = {
        ">=": lambda a, b: a >= b,
        ">": lambda a, b: a > b,
        "<": lambda a, b: a < b,
        "<=": lambda a, b: a <= b,
    }
    total, count = 0.0, 0
    for i in range(n):
        if flt is not None and not ops[flt.op](fvals[i], flt.value):
            continue
        if len(refs) == 1:
            v = float(refs[0][i])
        else:
            v = float(refs[0][i]) * (1.0 - float(refs[1][i])) * (1.0 + float(refs[2][i]))
        total += v
        count += 1
    if query.agg == "SUM":
        return total if count else 0.0
    return total / count if count else None
