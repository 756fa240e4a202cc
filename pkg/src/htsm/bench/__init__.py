"""Data generation, workloads and the experiment driver."""

from .datagen import LINEITEM_COLUMNS, generate_columns, generate_table, lineitem_schema
from .experiment import BenchConfig, SchemaError, report, run_experiment, sweep
from .workload import column_stats, generate_workload

__all__ = [
    "LINEITEM_COLUMNS", "generate_columns", "generate_table", "lineitem_schema",
    "BenchConfig", "SchemaError", "report", "run_experiment", "sweep",
    "column_stats", "generate_workload",
]
