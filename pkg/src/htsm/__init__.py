"""Multi-query columnar storage manager with shared scans and a window-aware cache."""

from .cache import Gsg, LruCache, PutOutcome, WindowCache, get_next_candidate, hit_ratio
from .catalog import (ChunkingConfig, Column, DataUnitKey, Extent, Filter, Table, TableSchema,
                      chunk_count, lookup_extents, open_table, prune_chunks, write_table)
from .device import HDD, SSD, DeviceProfile, DiskArray, IoRequest, IoStats, coalesce, dispatch
from .engine import Query, QueryExecutor, finalize, fold_chunk, oracle_scan, parse_query, plan
from .scheduler import (ChunkRequest, Mode, PolicyConfig, QueryPlan, RequestList, Scheduler,
                        insert_request, run_policy)

__all__ = [
    "Gsg",
    "LruCache",
    "PutOutcome",
    "WindowCache",
    "get_next_candidate",
    "hit_ratio",
    "ChunkingConfig",
    "Column",
    "DataUnitKey",
    "Extent",
    "Filter",
    "Table",
    "TableSchema",
    "chunk_count",
    "lookup_extents",
    "open_table",
    "prune_chunks",
    "write_table",
    "HDD",
    "SSD",
    "DeviceProfile",
    "DiskArray",
    "IoRequest",
    "IoStats",
    "coalesce",
    "dispatch",
    "Query",
    "QueryExecutor",
    "finalize",
    "fold_chunk",
    "oracle_scan",
    "parse_query",
    "plan",
    "ChunkRequest",
    "Mode",
    "PolicyConfig",
    "QueryPlan",
    "RequestList",
    "Scheduler",
    "insert_request",
    "run_policy",
]

__version__ = "0.1.0"
