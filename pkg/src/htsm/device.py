"""Disk-array dispatch, request coalescing and I/O cost accounting."""

from __future__ import annotations

import bisect
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .catalog import DataUnitKey, Extent, Table


class DeviceError(Exception):
    pass


class InvalidRequest(DeviceError):
    pass


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    seek_cost: float  # seconds per discontiguous positioning
    bandwidth: float  # bytes per second
    alignment: int = 4096

    def __post_init__(self):
        if self.seek_cost < 0:
            raise ValueError("seek_cost must be >= 0")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")
        if self.alignment < 4096 or self.alignment & (self.alignment - 1):
            raise ValueError("alignment must be a power of two >= 4096")

    def cost(self, length: int) -> float:
        return self.seek_cost + length / self.bandwidth


HDD = DeviceProfile("hdd", seek_cost=5e-3, bandwidth=150e6)
SSD = DeviceProfile("ssd", seek_cost=2e-5, bandwidth=2e9)
PROFILES = {"hdd": HDD, "ssd": SSD}


@dataclass
class IoRequest:
    device_id: int
    offset: int
    length: int
    keys: frozenset = frozenset()

    def __post_init__(self):
        if self.length <= 0:
            raise InvalidRequest(f"request length must be > 0, got {self.length}")
        if self.offset < 0:
            raise InvalidRequest(f"request offset must be >= 0, got {self.offset}")

    @property
    def end(self) -> int:
        return self.offset + self.length


@dataclass
class DeviceStats:
    request_count: int = 0
    bytes_read: int = 0
    busy_time: float = 0.0


@dataclass
class IoStats:
    request_count: int = 0
    bytes_read: int = 0
    sim_time: float = 0.0
    wall_time: float = 0.0
    per_device: dict[int, DeviceStats] = field(default_factory=dict)

    def __post_init__(self):
        self._lock = threading.Lock()

    def record(self, device_id: int, length: int, cost: float) -> None:
        with self._lock:
            self.request_count += 1
            self.bytes_read += length
            d = self.per_device.setdefault(device_id, DeviceStats())
            d.request_count += 1
            d.bytes_read += length
            d.busy_time += cost

    def advance(self, seconds: float) -> None:
        with self._lock:
            self.sim_time += seconds

    def merge(self, other: "IoStats") -> None:
        with self._lock:
            self.request_count += other.request_count
            self.bytes_read += other.bytes_read
            self.sim_time += other.sim_time
            self.wall_time += other.wall_time
            for dev, d in other.per_device.items():
                mine = self.per_device.setdefault(dev, DeviceStats())
                mine.request_count += d.request_count
                mine.bytes_read += d.bytes_read
                mine.busy_time += d.busy_time

    def to_dict(self) -> dict:
        return {
            "request_count": self.request_count,
            "bytes_read": self.bytes_read,
            "sim_time": self.sim_time,
            "per_device": {
                str(k): {"request_count": v.request_count, "bytes_read": v.bytes_read,
                         "busy_time": v.busy_time}
                for k, v in sorted(self.per_device.items())
            },
        }


def dispatch(
    extents: Sequence[Extent | tuple[DataUnitKey, Extent]],
    devices: int,
) -> dict[int, list[IoRequest]]:
    """Spread extents round-robin over ``devices``.

    Items may be bare extents (one group) or ``(key, extent)`` pairs, in
    which case each chunk's segment is its own round-robin group starting
    at ``chunk_id % devices``.
    """
    if devices < 1:
        raise ValueError("devices must be >= 1")
    groups: dict[int, list[tuple[frozenset, Extent]]] = {}
    for item in extents:
        if isinstance(item, Extent):
            key, ext = None, item
        else:
            key, ext = item
        g = -1 if key is None else key.chunk_id
        groups.setdefault(g, []).append((frozenset() if key is None else frozenset([key]), ext))
    out: dict[int, list[IoRequest]] = {d: [] for d in range(devices)}
    for g in sorted(groups):
        start = 0 if g < 0 else g % devices
        for i, (keys, ext) in enumerate(sorted(groups[g], key=lambda p: p[1].offset)):
            dev = (start + i) % devices
            out[dev].append(IoRequest(dev, ext.offset, ext.length, keys))
    for reqs in out.values():
        reqs.sort(key=lambda r: r.offset)
    return out


def coalesce(requests: Sequence[IoRequest]) -> list[IoRequest]:
    """Merge maximal runs of byte-adjacent requests on one device."""
    out: list[IoRequest] = []
    for r in requests:
        if out and r.device_id != out[-1].device_id:
            raise InvalidRequest("coalesce expects requests for a single device")
        if out and r.offset < out[-1].end:
            raise InvalidRequest(
                f"overlapping or unsorted requests at offset {r.offset} (previous ends {out[-1].end})")
        if out and r.offset == out[-1].end:
            last = out[-1]
            out[-1] = IoRequest(last.device_id, last.offset, last.length + r.length, last.keys | r.keys)
        else:
            out.append(IoRequest(r.device_id, r.offset, r.length, r.keys))
    return out


def _read_exact(fd: int, offset: int, length: int, device_id: int) -> bytes:
    try:
        data = os.pread(fd, length, offset)
    except OSError as exc:
        raise DeviceError(f"device {device_id}: read failed at offset {offset}: {exc}") from exc
    if len(data) != length:
        raise DeviceError(
            f"device {device_id}: read beyond end of file at offset {offset} "
            f"(wanted {length}, got {len(data)})")
    return data


def execute_sim(
    requests: Sequence[IoRequest],
    profile: DeviceProfile,
    fd: int | None = None,
) -> tuple[list[bytes], IoStats]:
    """Charge each request ``seek_cost + length / bandwidth``.

    With ``fd`` the bytes come from the file; otherwise they are zeros.
    """
    stats = IoStats()
    data = []
    for r in requests:
        cost = profile.cost(r.length)
        stats.record(r.device_id, r.length, cost)
        stats.sim_time += cost
        data.append(bytes(r.length) if fd is None else _read_exact(fd, r.offset, r.length, r.device_id))
    return data, stats


def execute_file(
    requests: Sequence[IoRequest],
    fd: int,
    alignment: int = 4096,
) -> tuple[list[bytes], IoStats]:
    """Positional reads against a real file; one counted read per request."""
    for r in requests:
        if r.offset % alignment:
            raise InvalidRequest(
                f"device {r.device_id}: offset {r.offset} not aligned to {alignment}")
    stats = IoStats()
    data = []
    t0 = time.perf_counter()
    for r in requests:
        data.append(_read_exact(fd, r.offset, r.length, r.device_id))
        stats.record(r.device_id, r.length, 0.0)
    stats.wall_time = time.perf_counter() - t0
    return data, stats


class DiskArray:
    """Reads data units of one table through dispatch, coalescing and execution.

    ``backend`` is ``"sim"`` (cost model, bytes from the file when the table
    has one, zeros otherwise) or ``"file"`` (real positional reads; simulated
    time is still charged from ``profile``).
    """

    def __init__(
        self,
        table: Table,
        profile: DeviceProfile = HDD,
        devices: int = 1,
        backend: str = "sim",
        coalescing: bool = True,
        parallel: bool = False,
    ):
        if backend not in ("sim", "file"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "file" and table.path is None:
            raise ValueError("file backend needs a table with a backing file")
        if devices < 1:
            raise ValueError("devices must be >= 1")
        self.table = table
        self.profile = profile
        self.devices = devices
        self.backend = backend
        self.coalescing = coalescing
        self.parallel = parallel and backend == "file" and devices > 1
        self.stats = IoStats()
        self._fd = os.open(table.path, os.O_RDONLY) if table.path else None

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def plan(self, keys: Iterable[DataUnitKey]) -> dict[int, list[IoRequest]]:
        pairs = [(k, e) for k in sorted(keys) for e in self.table.lookup_extents(k)]
        per_dev = dispatch(pairs, self.devices)
        if self.coalescing:
            per_dev = {d: coalesce(r) for d, r in per_dev.items()}
        return per_dev

    def _run_device(self, reqs: list[IoRequest]) -> tuple[list[bytes], IoStats]:
        if self.backend == "file":
            data, st = execute_file(reqs, self._fd, self.profile.alignment)
            st.sim_time = sum(self.profile.cost(r.length) for r in reqs)
            for d in st.per_device.values():
                d.busy_time = st.sim_time
            return data, st
        return execute_sim(reqs, self.profile, self._fd)

    def read(self, keys: Iterable[DataUnitKey]) -> tuple[dict[DataUnitKey, bytes], float]:
        """Read ``keys``; returns payloads and the elapsed simulated seconds.

        Devices work in parallel, so elapsed time is the slowest device's.
        """
        keys = sorted(set(keys))
        if not keys:
            return {}, 0.0
        per_dev = {d: r for d, r in self.plan(keys).items() if r}
        if self.parallel:
            with ThreadPoolExecutor(len(per_dev)) as pool:
                results = dict(zip(per_dev, pool.map(self._run_device, per_dev.values())))
        else:
            results = {d: self._run_device(r) for d, r in per_dev.items()}

        spans = []
        elapsed = 0.0
        for dev, (data, st) in results.items():
            elapsed = max(elapsed, st.sim_time)
            st.sim_time = 0.0
            self.stats.merge(st)
            spans.extend((r.offset, r.end, buf) for r, buf in zip(per_dev[dev], data))
        self.stats.advance(elapsed)
        spans.sort(key=lambda s: s[0])
        starts = [s[0] for s in spans]

        out = {}
        for k in keys:
            pieces = []
            for ext in self.table.lookup_extents(k):
                i = bisect.bisect_right(starts, ext.offset) - 1
                s, e, buf = spans[i]
                if not (s <= ext.offset and ext.offset + ext.length <= e):
                    raise DeviceError(f"extent {ext} not covered by issued requests")
                pieces.append(buf[ext.offset - s: ext.offset - s + ext.length])
            out[k] = b"".join(pieces)
        return out, elapsed
