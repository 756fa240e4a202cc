"""Chunked, column-partitioned table layout and its on-disk format.

A table of ``N`` tuples is cut into ``ceil(N / n)`` chunks of ``n`` tuples.
Inside a chunk every column is stored as one contiguous, page-aligned
segment; one column of one chunk is a *data unit*, addressed by
``(chunk_id, column_id)``.

File layout (little-endian)::

    "HTSM" | u32 version | u16 column_count
    | per column: u8 type_tag, u8 name_len, name
    | u64 tuple_count | u64 tuples_per_chunk | u64 page_bytes
    | u32 entry_count
    | per entry: u32 chunk_id, u16 column_id, u64 offset, u64 length,
                 16B min, 16B max
    | payload segments, each starting on a page_bytes boundary
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

MAGIC = b"HTSM"
VERSION = 1

TYPE_TAGS = {"int64": 0, "float64": 1, "date32": 2, "str16": 3}
TAG_TYPES = {v: k for k, v in TYPE_TAGS.items()}
DTYPES = {
    "int64": np.dtype("<i8"),
    "float64": np.dtype("<f8"),
    "date32": np.dtype("<i4"),
    "str16": np.dtype("S16"),
}
NUMERIC_TYPES = ("int64", "float64", "date32")

_HEADER = struct.Struct("<4sIH")
_SIZES = struct.Struct("<QQQI")
_ENTRY = struct.Struct("<IHQQ16s16s")

MIN_PAGE_BYTES = 1 << 12
MAX_PAGE_BYTES = 1 << 26


class CatalogError(Exception):
    pass


class FormatError(CatalogError):
    pass


class DataUnitKey(NamedTuple):
    chunk_id: int
    column_id: int


class Extent(NamedTuple):
    device_id: int
    offset: int
    length: int


@dataclass(frozen=True)
class Column:
    name: str
    type: str

    @property
    def dtype(self) -> np.dtype:
        return DTYPES[self.type]

    @property
    def width(self) -> int:
        return self.dtype.itemsize


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[Column, ...]
    tuple_count: int

    def __post_init__(self):
        cols = tuple(c if isinstance(c, Column) else Column(*c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        if not 1 <= len(cols) <= 256:
            raise CatalogError(f"column count {len(cols)} outside 1..256")
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise CatalogError("column names must be unique")
        for c in cols:
            if c.type not in TYPE_TAGS:
                raise CatalogError(f"unknown column type {c.type!r}")
            if not 0 < len(c.name.encode()) < 256:
                raise CatalogError(f"bad column name {c.name!r}")
        if self.tuple_count < 0:
            raise CatalogError("tuple_count must be >= 0")

    def column_id(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise CatalogError(f"no column named {name!r}")

    def __len__(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class ChunkingConfig:
    tuples_per_chunk: int = 65_536
    page_bytes: int = 1 << 22

    def __post_init__(self):
        if self.tuples_per_chunk < 1:
            raise CatalogError("tuples_per_chunk must be >= 1")
        p = self.page_bytes
        if p & (p - 1) or not MIN_PAGE_BYTES <= p <= MAX_PAGE_BYTES:
            raise CatalogError(f"page_bytes {p} must be a power of two in [2^12, 2^26]")


@dataclass(frozen=True)
class UnitEntry:
    """Directory record for one data unit."""

    offset: int
    length: int
    min_value: object
    max_value: object
    page_bytes: int

    @property
    def uncompressed_bytes(self) -> int:
        return self.length

    def extents(self) -> list[Extent]:
        # one extent per storage page; the last may be partial
        out = []
        pos, end = self.offset, self.offset + self.length
        while pos < end:
            n = min(self.page_bytes, end - pos)
            out.append(Extent(0, pos, n))
            pos += n
        return out


def chunk_count(tuple_count: int, tuples_per_chunk: int) -> int:
    if tuples_per_chunk < 1:
        raise CatalogError("tuples_per_chunk must be >= 1")
    if tuple_count < 0:
        raise CatalogError("tuple_count must be >= 0")
    return -(-tuple_count // tuples_per_chunk)


def chunk_rows(chunk_id: int, tuple_count: int, tuples_per_chunk: int) -> range:
    start = chunk_id * tuples_per_chunk
    return range(start, min(start + tuples_per_chunk, tuple_count))


def _align(x: int, page: int) -> int:
    return -(-x // page) * page


def encode_bound(value, type_: str) -> bytes:
    if type_ == "int64":
        raw = struct.pack("<q", int(value))
    elif type_ == "float64":
        raw = struct.pack("<d", float(value))
    elif type_ == "date32":
        raw = struct.pack("<i", int(value))
    else:
        raw = bytes(value)[:16]
    return raw.ljust(16, b"\0")


def decode_bound(raw: bytes, type_: str):
    if type_ == "int64":
        return struct.unpack_from("<q", raw)[0]
    if type_ == "float64":
        return struct.unpack_from("<d", raw)[0]
    if type_ == "date32":
        return struct.unpack_from("<i", raw)[0]
    return bytes(raw).rstrip(b"\0")


@dataclass
class Table:
    """An opened table: schema, chunking and the unit directory."""

    schema: TableSchema
    config: ChunkingConfig
    directory: dict[DataUnitKey, UnitEntry]
    path: str | None = None
    payload_offset: int = 0
    file_bytes: int = 0

    @property
    def chunk_count(self) -> int:
        return chunk_count(self.schema.tuple_count, self.config.tuples_per_chunk)

    @property
    def total_unit_bytes(self) -> int:
        return sum(e.length for e in self.directory.values())

    def rows(self, chunk_id: int) -> range:
        return chunk_rows(chunk_id, self.schema.tuple_count, self.config.tuples_per_chunk)

    def lookup_extents(self, key: DataUnitKey) -> list[Extent]:
        return lookup_extents(self.directory, key)

    def read_unit(self, key: DataUnitKey) -> bytes:
        """Read one unit straight from the file, bypassing the device layer."""
        if self.path is None:
            raise CatalogError("table has no backing file")
        entry = self.directory[DataUnitKey(*key)]
        with open(self.path, "rb") as f:
            f.seek(entry.offset)
            data = f.read(entry.length)
        if len(data) != entry.length:
            raise FormatError(f"short read for unit {tuple(key)}")
        return data

    def read_column(self, column_id: int) -> np.ndarray:
        col = self.schema.columns[column_id]
        parts = [
            np.frombuffer(self.read_unit(DataUnitKey(c, column_id)), dtype=col.dtype)
            for c in range(self.chunk_count)
        ]
        if not parts:
            return np.empty(0, dtype=col.dtype)
        return np.concatenate(parts)


def lookup_extents(directory: Mapping[DataUnitKey, UnitEntry], key) -> list[Extent]:
    try:
        entry = directory[DataUnitKey(*key)]
    except KeyError:
        raise KeyError(f"data unit {tuple(key)} not in directory") from None
    return entry.extents()


def _header_bytes(schema: TableSchema, n_entries: int) -> int:
    size = _HEADER.size
    for c in schema.columns:
        size += 2 + len(c.name.encode())
    return size + _SIZES.size + n_entries * _ENTRY.size


def plan_layout(schema: TableSchema, config: ChunkingConfig) -> tuple[int, dict[DataUnitKey, tuple[int, int]]]:
    """Return the payload start and ``key -> (offset, length)`` for every unit.

    Chunk-major order; within a chunk, columns in schema order, each segment
    starting on a page boundary.
    """
    n_chunks = chunk_count(schema.tuple_count, config.tuples_per_chunk)
    page = config.page_bytes
    payload = _align(_header_bytes(schema, n_chunks * len(schema)), page)
    pos = payload
    layout = {}
    for chunk in range(n_chunks):
        rows = len(chunk_rows(chunk, schema.tuple_count, config.tuples_per_chunk))
        for cid, col in enumerate(schema.columns):
            length = rows * col.width
            layout[DataUnitKey(chunk, cid)] = (pos, length)
            pos = _align(pos + length, page)
    return payload, layout


def _coerce(values, col: Column, expected: int) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise CatalogError(f"column {col.name!r} must be one-dimensional")
    if len(arr) != expected:
        raise CatalogError(f"column {col.name!r} has {len(arr)} values, expected {expected}")
    if col.type == "str16":
        if arr.dtype.kind not in "SU" and len(arr):
            raise CatalogError(f"column {col.name!r} expects byte strings")
        return np.asarray(arr, dtype=col.dtype)
    if col.type == "float64":
        if arr.dtype.kind not in "fiu" and len(arr):
            raise CatalogError(f"column {col.name!r} expects numbers")
    elif arr.dtype.kind not in "iu" and len(arr):
        raise CatalogError(f"column {col.name!r} expects integers")
    return arr.astype(col.dtype, casting="same_kind" if col.type == "float64" else "unsafe")


def write_table(
    schema: TableSchema,
    config: ChunkingConfig,
    columns: Mapping[str, Sequence] | Sequence[Sequence],
    path: str | os.PathLike,
) -> Table:
    """Write ``columns`` to ``path`` and return the opened table."""
    if isinstance(columns, Mapping):
        missing = [c.name for c in schema.columns if c.name not in columns]
        if missing:
            raise CatalogError(f"missing column data: {missing}")
        streams = [columns[c.name] for c in schema.columns]
    else:
        streams = list(columns)
        if len(streams) != len(schema):
            raise CatalogError("column data count does not match schema")
    arrays = [_coerce(s, c, schema.tuple_count) for s, c in zip(streams, schema.columns)]

    payload, layout = plan_layout(schema, config)
    directory: dict[DataUnitKey, UnitEntry] = {}
    entries = []
    for key, (offset, length) in layout.items():
        col = schema.columns[key.column_id]
        rows = chunk_rows(key.chunk_id, schema.tuple_count, config.tuples_per_chunk)
        part = arrays[key.column_id][rows.start:rows.stop]
        if col.type == "str16":
            values = part.tolist()
            lo, hi = min(values), max(values)
        else:
            lo, hi = part.min().item(), part.max().item()
        directory[key] = UnitEntry(offset, length, lo, hi, config.page_bytes)
        entries.append(
            _ENTRY.pack(key.chunk_id, key.column_id, offset, length,
                        encode_bound(lo, col.type), encode_bound(hi, col.type))
        )

    head = [_HEADER.pack(MAGIC, VERSION, len(schema))]
    for c in schema.columns:
        name = c.name.encode()
        head.append(struct.pack("<BB", TYPE_TAGS[c.type], len(name)) + name)
    head.append(_SIZES.pack(schema.tuple_count, config.tuples_per_chunk,
                            config.page_bytes, len(entries)))
    head.extend(entries)

    end = payload
    if layout:
        last_off, last_len = layout[max(layout)]
        end = last_off + last_len
    with open(path, "wb") as f:
        f.write(b"".join(head))
        for key, (offset, length) in layout.items():
            rows = chunk_rows(key.chunk_id, schema.tuple_count, config.tuples_per_chunk)
            f.seek(offset)
            f.write(arrays[key.column_id][rows.start:rows.stop].tobytes())
        # pad to the end of the final page so every page is readable in full
        f.truncate(_align(end, config.page_bytes))
    return Table(schema, config, directory, os.fspath(path), payload, _align(end, config.page_bytes))


def open_table(path: str | os.PathLike) -> Table:
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError("file too short for header")
        magic, version, ncols = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported version {version}")
        cols = []
        for _ in range(ncols):
            tag, nlen = struct.unpack("<BB", f.read(2))
            if tag not in TAG_TYPES:
                raise FormatError(f"unknown type tag {tag}")
            cols.append(Column(f.read(nlen).decode(), TAG_TYPES[tag]))
        tuples, per_chunk, page, n_entries = _SIZES.unpack(f.read(_SIZES.size))
        schema = TableSchema(tuple(cols), tuples)
        config = ChunkingConfig(per_chunk, page)
        blob = f.read(n_entries * _ENTRY.size)
        if len(blob) != n_entries * _ENTRY.size:
            raise FormatError("truncated directory")
        directory = {}
        for chunk, cid, offset, length, lo, hi in _ENTRY.iter_unpack(blob):
            t = cols[cid].type
            directory[DataUnitKey(chunk, cid)] = UnitEntry(
                offset, length, decode_bound(lo, t), decode_bound(hi, t), page)
        size = os.fstat(f.fileno()).st_size
    expected = chunk_count(tuples, per_chunk) * ncols
    if len(directory) != expected:
        raise FormatError(f"directory has {len(directory)} entries, expected {expected}")
    payload = _align(_header_bytes(schema, n_entries), page)
    return Table(schema, config, directory, os.fspath(path), payload, size)


@dataclass(frozen=True)
class Filter:
    column: str
    op: str
    value: object

    OPS = (">=", ">", "<", "<=")

    def __post_init__(self):
        if self.op not in self.OPS:
            raise CatalogError(f"unsupported filter operator {self.op!r}")

    def mask(self, values: np.ndarray) -> np.ndarray:
        v = self.value
        if self.op == ">=":
            return values >= v
        if self.op == ">":
            return values > v
        if self.op == "<":
            return values < v
        return values <= v

    def may_match(self, lo, hi) -> bool:
        """Whether some value in ``[lo, hi]`` can satisfy the predicate."""
        v = self.value
        if self.op == ">=":
            return hi >= v
        if self.op == ">":
            return hi > v
        if self.op == "<":
            return lo < v
        return lo <= v


def prune_chunks(filter: Filter | None, table: Table) -> list[int]:
    """Ascending chunk ids whose zone map admits ``filter``."""
    if filter is None:
        return list(range(table.chunk_count))
    cid = table.schema.column_id(filter.column)
    value = filter.value
    if table.schema.columns[cid].type == "str16" and isinstance(value, str):
        filter = Filter(filter.column, filter.op, value.encode())
    return [
        c for c in range(table.chunk_count)
        if filter.may_match(table.directory[DataUnitKey(c, cid)].min_value,
                            table.directory[DataUnitKey(c, cid)].max_value)
    ]
