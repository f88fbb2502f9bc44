import numpy as np
import pytest

from rowtrack import DESK, BASELINE, BASELINE_512GB, Geometry, GeometryConfig, TrackerConfig, validate
from rowtrack.errors import (
    AddressOutOfRange,
    CounterTooNarrow,
    NonPowerOfTwo,
    RowOutOfRange,
    UntaggedModeInfeasible,
    WaysInsufficient,
)


def test_baseline_start_d_layout():
    lay = validate(BASELINE, TrackerConfig("start_d", t_rh=256, counter_bits=7, free_on_mitigate=True))
    assert lay.tag_bits == 9
    assert lay.tagged_entry_bytes == 2
    assert lay.entries_per_line == 32


def test_512gb_start_m_layout():
    lay = validate(BASELINE_512GB, TrackerConfig("start_m", t_rh=4096))
    assert lay.tag_bits == 12
    assert lay.counter_bits == 11
    assert lay.tagged_entry_bytes == 3
    assert lay.entries_per_line == 21


def test_desk_layout_by_hand():
    # 32K rows = 15 bits, 64 sets = 6 bits -> 9 tag bits; 9 + 6 + 1 = 16 bits = 2B
    lay = validate(DESK, TrackerConfig("start_d", t_rh=64, counter_bits=6))
    assert (lay.row_bits, lay.set_bits, lay.tag_bits) == (15, 6, 9)
    assert lay.tagged_entry_bytes == 2
    assert lay.entries_per_line == 32
    assert lay.rows_per_set == 512


def test_entries_fit_line():
    for rows, sets in [(32768, 64), (65536, 128), (1 << 20, 4096)]:
        for v in ("start_m", "start_lite"):
            lay = validate(GeometryConfig(row_count=rows, llc_sets=sets), TrackerConfig(v, t_rh=256))
            assert lay.entries_per_line * lay.tagged_entry_bytes <= lay.line_bytes


@pytest.mark.parametrize(
    "config, tracker, exc",
    [
        (DESK.replace(row_count=30000), None, NonPowerOfTwo),
        (DESK.replace(llc_sets=48), None, NonPowerOfTwo),
        (DESK, TrackerConfig("start_d", t_rh=256, counter_bits=6), CounterTooNarrow),
        (DESK.replace(row_count=1 << 20), TrackerConfig("start_d"), UntaggedModeInfeasible),
        (DESK.replace(llc_ways=4), TrackerConfig("start_d"), WaysInsufficient),
    ],
)
def test_validate_errors(config, tracker, exc):
    with pytest.raises(exc):
        validate(config, tracker)


def test_validate_collects_all_problems():
    with pytest.raises(NonPowerOfTwo) as info:
        validate(DESK.replace(row_count=3, llc_sets=5))
    assert len(info.value.violations) == 2


def test_start_lite_needs_one_way_only():
    validate(DESK.replace(llc_ways=2), TrackerConfig("start_lite"))


def test_map_row_extremes():
    geo = Geometry(DESK, TrackerConfig())
    assert tuple(geo.map_row(0)) == (0, 0, 0, 0)
    last = geo.map_row(DESK.row_count - 1)
    assert last.set_index == DESK.llc_sets - 1
    assert last.row_tag == geo.layout.rows_per_set - 1
    assert last.untagged_way == 7
    assert last.untagged_byte == (1 << geo.layout.byte_bits) - 1


def test_map_row_baseline_bit_slice():
    geo = Geometry(BASELINE, TrackerConfig("start_d", counter_bits=7, free_on_mitigate=True))
    m = geo.map_row((5 << 9) | 0b101_000011)
    assert m.set_index == 5
    assert m.row_tag == 0b101000011
    assert m.untagged_way == 5
    assert m.untagged_byte == 3


def test_map_row_out_of_range():
    geo = Geometry()
    with pytest.raises(RowOutOfRange):
        geo.map_row(DESK.row_count)
    with pytest.raises(RowOutOfRange):
        geo.map_row(-1)


@pytest.mark.parametrize("set_hash", ["identity", "xor"])
def test_map_row_bijection_exhaustive(set_hash):
    geo = Geometry(DESK.replace(set_hash=set_hash), TrackerConfig())
    seen = set()
    for r in range(DESK.row_count):
        m = geo.map_row(r)
        assert geo.row_of(m.set_index, m.row_tag) == r
        seen.add((m.set_index, m.row_tag))
    assert len(seen) == DESK.row_count


@pytest.mark.parametrize("set_hash", ["identity", "xor"])
def test_rows_of_set_agrees_with_map_row(set_hash):
    geo = Geometry(DESK.replace(set_hash=set_hash), TrackerConfig())
    for s in (0, 17, 63):
        rows = geo.rows_of_set(s)
        assert len(rows) == geo.layout.rows_per_set
        assert all(geo.map_row(int(r)).set_index == s for r in rows)


def test_map_address_examples():
    geo = Geometry()
    a = geo.map_address(0)
    assert (a.bank, a.row_id, a.llc_set) == (0, 0, 0)
    b = geo.map_address(DESK.line_bytes)
    assert b.bank == 1
    assert b.row_id == DESK.rows_per_bank  # in-bank row 0 of bank 1
    c = geo.map_address(DESK.row_size_bytes * DESK.bank_count)
    assert c.bank == 0 and c.row_id == 1


def test_map_address_out_of_range():
    with pytest.raises(AddressOutOfRange):
        Geometry().map_address(DESK.memory_bytes)


def test_row_address_round_trip():
    geo = Geometry()
    rng = np.random.default_rng(3)
    for row in rng.integers(0, DESK.row_count, 500):
        col = int(rng.integers(0, geo.columns_per_row))
        addr = geo.row_address(int(row), col)
        m = geo.map_address(addr)
        assert m.row_id == row
        assert m.bank == geo.bank_of_row(int(row))
    # every line of a row maps back to that row
    assert {geo.map_address(geo.row_address(9, c)).row_id for c in range(geo.columns_per_row)} == {9}


def test_structural_constants():
    geo = Geometry(BASELINE, TrackerConfig("start_s", counter_bits=7, free_on_mitigate=True))
    assert BASELINE.llc_sets * 2 // 8 == 4096
    assert BASELINE.row_count * 1 == BASELINE.llc_bytes // 2
    assert geo.reservation_bytes(8) == 8 * 1024 * 1024
