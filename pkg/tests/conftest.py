import numpy as np
import pytest

from htsm.bench.datagen import generate_table
from htsm.catalog import ChunkingConfig, Column, TableSchema, write_table


@pytest.fixture
def page_table(tmp_path):
    """Ten one-tuple chunks of a single int64 column: pages 1..10 of the trace."""
    schema = TableSchema((Column("page", "int64"),), 10)
    return write_table(schema, ChunkingConfig(1, 4096), {"page": np.arange(1, 11)}, tmp_path / "pages.htsm")


@pytest.fixture(scope="session")
def small_lineitem(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.htsm"
    return generate_table(7, 20_000, path, ChunkingConfig(2048, 4096))


@pytest.fixture(scope="session")
def desk_lineitem(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "desk.htsm"
    return generate_table(42, 100_000, path, ChunkingConfig(4096, 4096))


_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
