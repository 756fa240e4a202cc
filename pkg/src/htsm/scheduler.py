"""Request windows, the shared request list and the delivery loop.

Every registered query owns a window of at most ``W`` admitted chunks.
Admitted chunks go into one shared :class:`RequestList`; with merging on,
requests for a chunk that is already queued are folded into the queued entry
so one physical read serves every waiting query. The reader consumes the list
strictly from the front, serves resident columns from the cache, reads the
rest, fans the chunk out and lets each served query admit its next chunk.

All state is mutated from the single loop in :meth:`Scheduler.run`, which
processes events in a fixed order, so a run is reproducible bit for bit.
"""

from __future__ import annotations

import enum
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

from .cache import InvariantError, LruCache, WindowCache
from .catalog import DataUnitKey, Table
from .device import HDD, DeviceProfile, DiskArray


class SchedulerError(Exception):
    pass


class ProtocolError(SchedulerError):
    pass


class SchedulerStall(SchedulerError):
    def __init__(self, message: str, state: dict):
        super().__init__(f"{message}: {state}")
        self.state = state


class Mode(str, enum.Enum):
    LRU = "lru"
    CS = "cs"
    HIGHTH = "highth"


@dataclass(frozen=True)
class QueryPlan:
    query_id: int
    columns: frozenset
    chunks: tuple[int, ...]
    window: int = 1

    def __post_init__(self):
        object.__setattr__(self, "columns", frozenset(self.columns))
        object.__setattr__(self, "chunks", tuple(self.chunks))
        if not self.columns:
            raise SchedulerError(f"query {self.query_id} requires no columns")
        if any(b <= a for a, b in zip(self.chunks, self.chunks[1:])):
            raise SchedulerError(f"query {self.query_id}: chunk order must be strictly ascending")
        if self.window < 1:
            raise SchedulerError("window size must be >= 1")

    def keys(self) -> Iterator[DataUnitKey]:
        for c in self.chunks:
            for col in sorted(self.columns):
                yield DataUnitKey(c, col)


@dataclass
class QueryRegistration:
    plan: QueryPlan
    window: int
    cursor: int = 0
    in_window: set = field(default_factory=set)
    delivered: int = 0
    completed_at: float | None = None

    @property
    def query_id(self) -> int:
        return self.plan.query_id

    @property
    def complete(self) -> bool:
        return self.delivered == len(self.plan.chunks)


@dataclass
class ChunkRequest:
    chunk_id: int
    columns: set
    queries: set

    def __post_init__(self):
        self.columns = set(self.columns)
        self.queries = set(self.queries)
        if not self.columns or not self.queries:
            raise SchedulerError("a chunk request needs at least one column and one query")


class RequestList:
    """Front-consumed list of chunk requests.

    With ``merge`` the list holds at most one entry per chunk; without it,
    at most one per (chunk, query).
    """

    def __init__(self, merge: bool = True):
        self.merge = merge
        self._entries: OrderedDict = OrderedDict()

    def _slot(self, req: ChunkRequest):
        if self.merge:
            return req.chunk_id
        (q,) = req.queries
        return (req.chunk_id, q)

    def find(self, chunk_id: int) -> ChunkRequest | None:
        if self.merge:
            return self._entries.get(chunk_id)
        for (c, _), req in self._entries.items():
            if c == chunk_id:
                return req
        return None

    def pop_front(self) -> ChunkRequest:
        if not self._entries:
            raise IndexError("request list is empty")
        return self._entries.popitem(last=False)[1]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[ChunkRequest]:
        return iter(list(self._entries.values()))

    def chunk_ids(self) -> list[int]:
        return [r.chunk_id for r in self._entries.values()]


def insert_request(chunk: ChunkRequest, rlist: RequestList) -> RequestList:
    """Merge ``chunk`` into a queued entry for the same chunk, else append."""
    if not rlist.merge and len(chunk.queries) != 1:
        raise SchedulerError("unmerged request lists take single-query requests")
    slot = rlist._slot(chunk)
    queued = rlist._entries.get(slot)
    if queued is not None:
        queued.columns |= chunk.columns
        queued.queries |= chunk.queries
    else:
        rlist._entries[slot] = ChunkRequest(chunk.chunk_id, chunk.columns, chunk.queries)
    return rlist


@dataclass
class DeliveryEvent:
    chunk_id: int
    payloads: dict
    served_queries: frozenset
    fresh: frozenset = frozenset()


Consumer = Callable[[int, int, Mapping[int, bytes]], None]


class Scheduler:
    """Drives registration, request-list consumption and delivery fan-out."""

    def __init__(
        self,
        disk: DiskArray,
        cache: WindowCache | LruCache,
        merge: bool = True,
        consumer: Consumer | None = None,
        cpu_cost: float = 0.0,
    ):
        self.disk = disk
        self.table = disk.table
        self.cache = cache
        self.rlist = RequestList(merge)
        self.consumer = consumer
        self.cpu_cost = cpu_cost
        self.queries: dict[int, QueryRegistration] = {}
        self.expected_rqn: Counter = Counter()
        self.completion_order: list[int] = []
        self.io_clock = 0.0
        self.cpu_clock = 0.0
        self.log: list[dict] = []

    # registration -----------------------------------------------------

    def register_query(self, plan: QueryPlan) -> QueryRegistration:
        if plan.query_id in self.queries:
            raise SchedulerError(f"duplicate query id {plan.query_id}")
        n = self.table.chunk_count
        ncols = len(self.table.schema)
        if any(not 0 <= c < n for c in plan.chunks):
            raise SchedulerError(f"query {plan.query_id} references chunks outside [0, {n})")
        if any(not 0 <= c < ncols for c in plan.columns):
            raise SchedulerError(f"query {plan.query_id} references unknown columns")
        reg = QueryRegistration(plan, plan.window)
        self.queries[plan.query_id] = reg
        for key in plan.keys():
            self.cache.update_counts(key, 0, +1)
            self.expected_rqn[key] += 1
        self._fill_window(reg)
        if reg.complete:
            self._complete(reg, 0.0)
        return reg

    def _fill_window(self, reg: QueryRegistration) -> None:
        chunks = reg.plan.chunks
        while len(reg.in_window) < reg.window and reg.cursor < len(chunks):
            chunk = chunks[reg.cursor]
            reg.cursor += 1
            reg.in_window.add(chunk)
            for col in reg.plan.columns:
                self.cache.update_counts(DataUnitKey(chunk, col), +1, 0)
            insert_request(ChunkRequest(chunk, reg.plan.columns, {reg.query_id}), self.rlist)

    # reader side ------------------------------------------------------

    def next_request(self) -> tuple[ChunkRequest, dict, set]:
        """Pop the front request and split it into resident and missing columns.

        Returns the request, the resident payloads and the column ids that
        must come from disk.
        """
        if not self.rlist:
            raise IndexError("no pending requests")
        req = self.rlist.pop_front()
        resident, missing = {}, set()
        for col in sorted(req.columns):
            key = DataUnitKey(req.chunk_id, col)
            demand = sum(col in self.queries[q].plan.columns for q in req.queries)
            data = self.cache.lookup(key, demand)
            if data is None:
                missing.add(col)
                self.cache.stats.shared += demand - 1
            else:
                resident[col] = data
        return req, resident, missing

    def step(self) -> DeliveryEvent:
        req, payloads, missing = self.next_request()
        elapsed = 0.0
        if missing:
            data, elapsed = self.disk.read(DataUnitKey(req.chunk_id, c) for c in missing)
            payloads.update({k.column_id: v for k, v in data.items()})
        self.io_clock += elapsed
        self.log.append({
            "chunk": req.chunk_id,
            "queries": sorted(req.queries),
            "hit": sorted(set(payloads) - missing),
            "read": sorted(missing),
        })
        event = DeliveryEvent(req.chunk_id, payloads, frozenset(req.queries), frozenset(missing))
        self.on_chunk_ready(event)
        return event

    def on_chunk_ready(self, event: DeliveryEvent) -> set:
        chunk = event.chunk_id
        regs = []
        for q in sorted(event.served_queries):
            reg = self.queries.get(q)
            if reg is None or chunk not in reg.in_window:
                raise ProtocolError(f"chunk {chunk} delivered to query {q} which did not request it")
            if not reg.plan.columns <= event.payloads.keys():
                raise ProtocolError(f"chunk {chunk} is missing columns for query {q}")
            regs.append(reg)

        rows = len(self.table.rows(chunk))
        start = max(self.cpu_clock, self.io_clock)
        self.cpu_clock = start + rows * self.cpu_cost * len(regs)

        for reg in regs:
            if self.consumer is not None:
                self.consumer(reg.query_id, chunk,
                              {c: event.payloads[c] for c in sorted(reg.plan.columns)})
            for col in reg.plan.columns:
                self.cache.update_counts(DataUnitKey(chunk, col), -1, -1)
            reg.in_window.discard(chunk)
            reg.delivered += 1
            self._fill_window(reg)
            assert len(reg.in_window) <= reg.window
            if reg.complete:
                self._complete(reg, self.cpu_clock)

        for col in sorted(event.fresh):
            self.cache.put(DataUnitKey(chunk, col), event.payloads[col])
        return {r.query_id for r in regs}

    def _complete(self, reg: QueryRegistration, at: float) -> None:
        reg.completed_at = at
        self.completion_order.append(reg.query_id)

    # driver -----------------------------------------------------------

    def run(self) -> None:
        while self.rlist:
            self.step()
        pending = [q for q, r in self.queries.items() if not r.complete]
        if pending:
            raise SchedulerStall("scheduler stalled", self.state())
        self.check_conservation()

    def state(self) -> dict:
        return {
            "pending_requests": self.rlist.chunk_ids(),
            "queries": {
                q: {"cursor": r.cursor, "in_window": sorted(r.in_window),
                    "delivered": r.delivered, "planned": len(r.plan.chunks)}
                for q, r in self.queries.items()
            },
        }

    def check_conservation(self) -> None:
        applied = self.cache.rqn_decrements
        if applied != self.expected_rqn:
            diff = {k: (self.expected_rqn[k], applied[k])
                    for k in set(applied) | set(self.expected_rqn)
                    if applied[k] != self.expected_rqn[k]}
            raise InvariantError(f"rqn decrements differ from registrations: {diff}")

    @property
    def elapsed(self) -> float:
        return max(self.io_clock, self.cpu_clock)


@dataclass
class PolicyConfig:
    window: int = 30
    cache_capacity: int | None = None
    profile: DeviceProfile = HDD
    devices: int = 1
    backend: str = "sim"
    cpu_cost: float = 0.0
    coalescing: bool = True


@dataclass
class PolicyResult:
    mode: Mode
    scheduler: Scheduler

    @property
    def io(self):
        return self.scheduler.disk.stats

    @property
    def cache_stats(self):
        return self.scheduler.cache.stats


def make_cache(mode: Mode, capacity: int | None) -> WindowCache | LruCache:
    return LruCache(capacity) if Mode(mode) is Mode.LRU else WindowCache(capacity)


def run_policy(
    table: Table,
    plans: Sequence[QueryPlan],
    mode: Mode | str,
    config: PolicyConfig | None = None,
    consumer: Consumer | None = None,
) -> PolicyResult:
    """Run ``plans`` to completion under one scheduling policy.

    ``lru`` and ``cs`` force a window of one and keep each query's requests
    separate; ``cs`` keeps the GSG cache while ``lru`` evicts by recency.
    ``highth`` uses the configured window with merging and the GSG cache.
    """
    mode = Mode(mode)
    config = config or PolicyConfig()
    merge = mode is Mode.HIGHTH
    window = config.window if merge else 1
    disk = DiskArray(table, config.profile, config.devices, config.backend, config.coalescing)
    try:
        sched = Scheduler(disk, make_cache(mode, config.cache_capacity), merge, consumer, config.cpu_cost)
        for p in plans:
            sched.register_query(QueryPlan(p.query_id, p.columns, p.chunks, window))
        sched.run()
    finally:
        disk.close()
    return PolicyResult(mode, sched)
