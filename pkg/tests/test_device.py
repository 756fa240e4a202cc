import os
import random

import pytest
from hypothesis import given, settings, strategies as st

from htsm.catalog import DataUnitKey, Extent
from htsm.device import (
    HDD, SSD, DeviceError, DeviceProfile, DiskArray, InvalidRequest, IoRequest, IoStats,
    coalesce, dispatch, execute_file, execute_sim,
)

PAGE = 4096


def test_profiles():
    assert HDD.seek_cost == 5e-3 and HDD.bandwidth == 150e6
    assert SSD.seek_cost == 2e-5 and SSD.bandwidth == 2e9
    with pytest.raises(ValueError):
        DeviceProfile("x", -1, 1)
    with pytest.raises(ValueError):
        DeviceProfile("x", 0, 0)


def test_request_validation():
    with pytest.raises(InvalidRequest):
        IoRequest(0, 0, 0)
    with pytest.raises(InvalidRequest):
        IoRequest(0, -4096, 10)


def test_dispatch_single_device():
    ext = [Extent(0, o, PAGE) for o in (3 * PAGE, 0, PAGE)]
    out = dispatch(ext, 1)
    assert [r.offset for r in out[0]] == [0, PAGE, 3 * PAGE]


def test_dispatch_round_robin():
    ext = [Extent(0, i * PAGE, PAGE) for i in range(4)]
    out = dispatch(ext, 2)
    assigned = {r.offset // PAGE: d for d, reqs in out.items() for r in reqs}
    assert [assigned[i] for i in range(4)] == [0, 1, 0, 1]


def test_dispatch_empty():
    assert dispatch([], 3) == {0: [], 1: [], 2: []}
    with pytest.raises(ValueError):
        dispatch([], 0)


def test_dispatch_random_against_modulo_oracle():
    rng = random.Random(5)
    pairs = []
    offsets = rng.sample(range(500), 50)
    for i, off in enumerate(offsets):
        pairs.append((DataUnitKey(rng.randrange(6), i), Extent(0, off * PAGE, PAGE)))
    out = dispatch(pairs, 3)

    # naive oracle: per chunk, the i-th extent by offset goes to (chunk + i) % 3
    expected = {}
    for chunk in {k.chunk_id for k, _ in pairs}:
        mine = sorted((e.offset for k, e in pairs if k.chunk_id == chunk))
        for i, off in enumerate(mine):
            expected[off] = (chunk + i) % 3
    got = {r.offset: d for d, reqs in out.items() for r in reqs}
    assert got == expected
    for reqs in out.values():
        assert [r.offset for r in reqs] == sorted(r.offset for r in reqs)
    for chunk in {k.chunk_id for k, _ in pairs}:
        counts = [sum(1 for r in out[d] if next(iter(r.keys)).chunk_id == chunk) for d in range(3)]
        assert max(counts) - min(counts) <= 1


def test_coalesce_adjacent_and_gap():
    a = IoRequest(0, 0, 4096, frozenset({1}))
    b = IoRequest(0, 4096, 4096, frozenset({2}))
    (m,) = coalesce([a, b])
    assert (m.offset, m.length, m.keys) == (0, 8192, frozenset({1, 2}))
    c = IoRequest(0, 8192, 4096)
    assert len(coalesce([a, c])) == 2


def test_coalesce_rejects_overlap():
    with pytest.raises(InvalidRequest):
        coalesce([IoRequest(0, 0, 8192), IoRequest(0, 4096, 4096)])


def _runs(extents):
    """Brute force: count maximal chains of byte-adjacent extents."""
    ends = {o + n for o, n in extents}
    return sum(1 for o, _ in extents if o not in ends)


def test_coalesce_random_against_run_count():
    rng = random.Random(11)
    for _ in range(20):
        pages = sorted(rng.sample(range(300), 100))
        reqs = [IoRequest(0, p * PAGE, PAGE) for p in pages]
        out = coalesce(reqs)
        assert len(out) == _runs([(r.offset, r.length) for r in reqs])
        assert sum(r.length for r in out) == sum(r.length for r in reqs)


def test_execute_sim_formula():
    data, st_ = execute_sim([], HDD)
    assert data == [] and st_.sim_time == 0 and st_.request_count == 0
    prof = DeviceProfile("t", 0.005, 100 * 1024 * 1024)
    data, st_ = execute_sim([IoRequest(0, 0, 1 << 20)], prof)
    assert st_.sim_time == pytest.approx(0.005 + 1048576 / 104857600, abs=1e-15)
    assert st_.sim_time == pytest.approx(0.015)
    assert data == [bytes(1 << 20)]
    assert st_.bytes_read == 1 << 20 and st_.request_count == 1


def test_adjacent_merge_saves_exactly_one_seek():
    prof = DeviceProfile("t", 0.005, 100 * 1024 * 1024)
    reqs = [IoRequest(0, 0, 512 * 1024), IoRequest(0, 512 * 1024, 512 * 1024)]
    _, raw = execute_sim(reqs, prof)
    _, merged = execute_sim(coalesce(reqs), prof)
    assert abs((raw.sim_time - merged.sim_time) - prof.seek_cost) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sets(st.integers(0, 200), min_size=1, max_size=60))
def test_coalescing_properties(pages):
    reqs = [IoRequest(0, p * PAGE, PAGE) for p in sorted(pages)]
    merged = coalesce(reqs)
    _, a = execute_sim(reqs, HDD)
    _, b = execute_sim(merged, HDD)
    assert a.bytes_read == b.bytes_read
    assert b.request_count <= a.request_count
    assert b.sim_time <= a.sim_time + 1e-12
    _, again = execute_sim(merged, HDD)
    assert again.to_dict() == b.to_dict()


def test_execute_file_round_trip(small_lineitem):
    table, cols = small_lineitem
    fd = os.open(table.path, os.O_RDONLY)
    try:
        key = DataUnitKey(3, 5)
        reqs = [IoRequest(0, e.offset, e.length) for e in table.lookup_extents(key)]
        data, st_ = execute_file(reqs, fd)
        r = table.rows(3)
        assert b"".join(data) == cols["extendedprice"][r.start:r.stop].tobytes()
        assert st_.request_count == len(reqs)

        assert execute_file([], fd)[1].request_count == 0
        with pytest.raises(InvalidRequest):
            execute_file([IoRequest(0, 100, 8)], fd)
        with pytest.raises(DeviceError, match="device 2"):
            execute_file([IoRequest(2, table.file_bytes + PAGE, PAGE)], fd)
    finally:
        os.close(fd)


def test_execute_sim_file_backed_past_eof(small_lineitem):
    table, _ = small_lineitem
    fd = os.open(table.path, os.O_RDONLY)
    try:
        with pytest.raises(DeviceError):
            execute_sim([IoRequest(0, table.file_bytes, PAGE)], HDD, fd)
    finally:
        os.close(fd)


@pytest.mark.parametrize("backend", ["sim", "file"])
@pytest.mark.parametrize("devices", [1, 3])
def test_disk_array_reads_exact_units(small_lineitem, backend, devices):
    table, cols = small_lineitem
    keys = [DataUnitKey(c, k) for c in (0, 2, 5) for k in (0, 4, 5, 6, 14)]
    with DiskArray(table, HDD, devices, backend, parallel=True) as disk:
        data, elapsed = disk.read(keys)
        assert elapsed > 0
        for k in keys:
            name = table.schema.columns[k.column_id].name
            r = table.rows(k.chunk_id)
            assert data[k] == cols[name][r.start:r.stop].tobytes()
        assert disk.stats.bytes_read == sum(table.directory[k].length for k in keys)
        assert set(disk.stats.per_device) <= set(range(devices))
        assert disk.read([]) == ({}, 0.0)


def test_disk_array_zero_fill_without_file(small_lineitem):
    table, _ = small_lineitem
    import dataclasses
    bare = dataclasses.replace(table, path=None)
    disk = DiskArray(bare, SSD)
    data, _ = disk.read([DataUnitKey(0, 0)])
    assert data[DataUnitKey(0, 0)] == bytes(table.directory[(0, 0)].length)


def test_adjacent_columns_coalesce_in_one_chunk(small_lineitem):
    table, _ = small_lineitem
    disk = DiskArray(table, HDD, 1)
    disk.read([DataUnitKey(0, c) for c in (4, 5, 6, 9)])
    # columns 4-6 are contiguous, 9 stands alone
    assert disk.stats.request_count == 2
    plain = DiskArray(table, HDD, 1, coalescing=False)
    plain.read([DataUnitKey(0, c) for c in (4, 5, 6, 9)])
    assert plain.stats.request_count == sum(len(table.lookup_extents((0, c))) for c in (4, 5, 6, 9))
    assert plain.stats.sim_time > disk.stats.sim_time


def test_iostats_merge_and_determinism():
    a, b = IoStats(), IoStats()
    a.record(0, 10, 0.1)
    b.record(1, 20, 0.2)
    b.sim_time = 0.2
    a.merge(b)
    assert a.request_count == 2 and a.bytes_read == 30
    assert a.per_device[1].bytes_read == 20
