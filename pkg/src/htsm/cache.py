"""Window-based push-model cache (WPC) and an LRU baseline.

Cached units are keyed by ``(chunk_id, column_id)``. Every unit referenced by
a registered query carries two counts:

* ``iqn`` - queries whose request window currently holds the unit,
* ``rqn`` - registered queries that still have to consume the unit.

The Global Status Graph (GSG) is an indexed min-heap over the *cached* units
ordered by ``(iqn, rqn, insertion seq)``; its top is the eviction victim.
Counts for units that are referenced but not cached live in the same
reference table so a freshly read unit can be judged before insertion.
"""

from __future__ import annotations

import enum
from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Hashable, Iterator


class CacheError(Exception):
    pass


class InvariantError(CacheError):
    """Reference bookkeeping went wrong; always a scheduler bug."""


class NoCandidate(CacheError):
    pass


class PutOutcome(str, enum.Enum):
    CACHED = "cached"
    UPDATED = "updated"
    DROPPED = "dropped"
    OVER_CAPACITY = "over_capacity"


@dataclass
class CacheStats:
    lookups: int = 0
    hits: int = 0
    # demands satisfied by another query's in-flight read of the same unit
    shared: int = 0
    evictions: int = 0
    drops: int = 0

    def to_dict(self) -> dict:
        return {
            "lookups": self.lookups,
            "hits": self.hits,
            "shared": self.shared,
            "evictions": self.evictions,
            "drops": self.drops,
            "hit_ratio": hit_ratio(self),
            "served_ratio": served_ratio(self),
        }


def hit_ratio(stats: CacheStats) -> float:
    if stats.lookups == 0:
        return 0.0
    return stats.hits / stats.lookups


def served_ratio(stats: CacheStats) -> float:
    """Fraction of unit demands that needed no disk read of their own."""
    if stats.lookups == 0:
        return 0.0
    return (stats.hits + stats.shared) / stats.lookups


class Gsg:
    """Indexed binary min-heap of ``(iqn, rqn, seq)`` priorities."""

    def __init__(self):
        self._heap: list[tuple[tuple[int, int, int], Hashable]] = []
        self._pos: dict[Hashable, int] = {}
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def __contains__(self, key) -> bool:
        return key in self._pos

    def __iter__(self) -> Iterator[Hashable]:
        return iter(list(self._pos))

    def priority(self, key) -> tuple[int, int, int]:
        return self._heap[self._pos[key]][0]

    def insert(self, key, iqn: int, rqn: int) -> None:
        if key in self._pos:
            raise KeyError(f"{key} already in GSG")
        if rqn <= 0:
            raise InvariantError(f"refusing to track {key} with rqn={rqn}")
        self._heap.append(((iqn, rqn, self._seq), key))
        self._seq += 1
        self._pos[key] = len(self._heap) - 1
        self._sift_up(len(self._heap) - 1)

    def update(self, key, iqn: int, rqn: int) -> None:
        i = self._pos[key]
        old, _ = self._heap[i]
        new = (iqn, rqn, old[2])
        self._heap[i] = (new, key)
        if new < old:
            self._sift_up(i)
        else:
            self._sift_down(i)

    def peek(self):
        if not self._heap:
            raise NoCandidate("GSG is empty")
        return self._heap[0][1]

    def erase(self, key) -> None:
        i = self._pos.pop(key)
        last = self._heap.pop()
        if i < len(self._heap):
            self._heap[i] = last
            self._pos[last[1]] = i
            self._sift_up(i)
            self._sift_down(self._pos[last[1]])

    def get_next(self):
        """Remove and return the lowest-priority key."""
        key = self.peek()
        self.erase(key)
        return key

    def check(self) -> None:
        """Assert the heap property and index consistency."""
        h = self._heap
        assert len(h) == len(self._pos)
        for i, (_, k) in enumerate(h):
            assert self._pos[k] == i
            for c in (2 * i + 1, 2 * i + 2):
                if c < len(h):
                    assert h[i][0] <= h[c][0]

    def _swap(self, i: int, j: int) -> None:
        h = self._heap
        h[i], h[j] = h[j], h[i]
        self._pos[h[i][1]] = i
        self._pos[h[j][1]] = j

    def _sift_up(self, i: int) -> None:
        h = self._heap
        while i:
            parent = (i - 1) // 2
            if h[i][0] < h[parent][0]:
                self._swap(i, parent)
                i = parent
            else:
                break

    def _sift_down(self, i: int) -> None:
        h = self._heap
        n = len(h)
        while True:
            small = i
            for c in (2 * i + 1, 2 * i + 2):
                if c < n and h[c][0] < h[small][0]:
                    small = c
            if small == i:
                return
            self._swap(i, small)
            i = small


def get_next_candidate(gsg: Gsg):
    """Pop the eviction candidate: minimal ``(iqn, rqn, seq)``."""
    if not len(gsg):
        raise NoCandidate("no eviction candidate: GSG is empty")
    return gsg.get_next()


class _RefCounting:
    """Reference table shared by both cache policies."""

    remove_unreferenced = True

    def __init__(self, capacity: int | None):
        if capacity is not None and capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.refs: dict[Hashable, list[int]] = {}
        self.rqn_decrements: Counter = Counter()
        self.stats = CacheStats()
        self.used = 0

    def counts(self, key) -> tuple[int, int]:
        """``(iqn, rqn)`` of ``key``; ``(0, 0)`` when unreferenced."""
        c = self.refs.get(key)
        return (c[0], c[1]) if c else (0, 0)

    def update_counts(self, key, delta_iqn: int, delta_rqn: int) -> tuple[int, int]:
        c = self.refs.get(key)
        iqn, rqn = (c[0], c[1]) if c else (0, 0)
        iqn += delta_iqn
        rqn += delta_rqn
        if iqn < 0 or rqn < 0:
            raise InvariantError(
                f"count underflow for {key}: iqn={iqn}, rqn={rqn} after ({delta_iqn:+d}, {delta_rqn:+d})")
        if rqn < iqn:
            raise InvariantError(f"rqn < iqn for {key}: ({iqn}, {rqn})")
        if delta_rqn < 0:
            self.rqn_decrements[key] -= delta_rqn
        if rqn == 0:
            self.refs.pop(key, None)
        else:
            self.refs[key] = [iqn, rqn]
        self._counts_changed(key, iqn, rqn)
        return iqn, rqn

    def _counts_changed(self, key, iqn: int, rqn: int) -> None:
        pass

    def _check_unit(self, payload: bytes) -> int:
        size = len(payload)
        if size <= 0:
            raise ValueError("cache units must be non-empty")
        return size


class WindowCache(_RefCounting):
    """The WPC: GSG-ordered eviction, drops units nobody will read again."""

    policy = "wpc"

    def __init__(self, capacity: int | None = None):
        super().__init__(capacity)
        self.store: dict[Hashable, bytes] = {}
        self.gsg = Gsg()

    def __contains__(self, key) -> bool:
        return key in self.store

    def __len__(self) -> int:
        return len(self.store)

    def lookup(self, key, demand: int = 1) -> bytes | None:
        self.stats.lookups += demand
        data = self.store.get(key)
        if data is not None:
            self.stats.hits += demand
        return data

    def put(self, key, payload: bytes) -> PutOutcome:
        size = self._check_unit(payload)
        iqn, rqn = self.counts(key)
        if rqn == 0:
            self.stats.drops += 1
            return PutOutcome.DROPPED
        if key in self.store:
            self.gsg.update(key, iqn, rqn)
            return PutOutcome.UPDATED
        if self.capacity is not None and size > self.capacity:
            self.stats.drops += 1
            return PutOutcome.OVER_CAPACITY
        self.store[key] = payload
        self.used += size
        self.gsg.insert(key, iqn, rqn)
        while self.capacity is not None and self.used > self.capacity:
            victim = self.evict()
            if victim == key:
                self.stats.evictions -= 1
                self.stats.drops += 1
                return PutOutcome.DROPPED
        return PutOutcome.CACHED

    def evict(self):
        victim = get_next_candidate(self.gsg)
        self.used -= len(self.store.pop(victim))
        self.stats.evictions += 1
        return victim

    def _counts_changed(self, key, iqn: int, rqn: int) -> None:
        if key not in self.store:
            return
        if rqn == 0:
            self.gsg.erase(key)
            self.used -= len(self.store.pop(key))
        else:
            self.gsg.update(key, iqn, rqn)

    def check(self) -> None:
        self.gsg.check()
        assert set(self.gsg) == set(self.store)
        assert self.used == sum(len(v) for v in self.store.values())
        if self.capacity is not None:
            assert self.used <= self.capacity
        for k in self.store:
            iqn, rqn = self.counts(k)
            assert rqn > 0 and rqn >= iqn
            assert self.gsg.priority(k)[:2] == (iqn, rqn)


class LruCache(_RefCounting):
    """Recency-ordered baseline that ignores query information.

    Reference counts are still maintained so runs can be audited, but they
    never influence admission or eviction.
    """

    policy = "lru"

    def __init__(self, capacity: int | None = None):
        super().__init__(capacity)
        self.store: OrderedDict[Hashable, bytes] = OrderedDict()

    def __contains__(self, key) -> bool:
        return key in self.store

    def __len__(self) -> int:
        return len(self.store)

    def lookup(self, key, demand: int = 1) -> bytes | None:
        self.stats.lookups += demand
        data = self.store.get(key)
        if data is not None:
            self.stats.hits += demand
            self.store.move_to_end(key)
        return data

    def put(self, key, payload: bytes) -> PutOutcome:
        size = self._check_unit(payload)
        if key in self.store:
            self.store.move_to_end(key)
            return PutOutcome.UPDATED
        if self.capacity is not None and size > self.capacity:
            self.stats.drops += 1
            return PutOutcome.OVER_CAPACITY
        self.store[key] = payload
        self.used += size
        while self.capacity is not None and self.used > self.capacity:
            victim, data = self.store.popitem(last=False)
            self.used -= len(data)
            self.stats.evictions += 1
        return PutOutcome.CACHED

    def check(self) -> None:
        assert self.used == sum(len(v) for v in self.store.values())
        if self.capacity is not None:
            assert self.used <= self.capacity
