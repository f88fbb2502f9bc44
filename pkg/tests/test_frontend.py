import numpy as np
import pytest

from rowtrack import Geometry, GeometryConfig, MemoryFrontend
from rowtrack.errors import AlreadyReserved
from rowtrack.trace import MemoryAccess

CFG = GeometryConfig(row_count=4096, llc_sets=16, llc_ways=2, bank_count=4)


def frontend(policy="lru", **cfg):
    return MemoryFrontend(Geometry(CFG.replace(**cfg)), policy=policy)


def line_addr(fe, set_index, k):
    """Address of the k-th distinct line that maps to ``set_index``."""
    cfg = fe.geometry.config
    return (set_index + k * cfg.llc_sets) * cfg.line_bytes


def test_miss_then_hit_one_activation():
    fe = frontend()
    a = fe.access(MemoryAccess(0, 0x1000))
    b = fe.access(MemoryAccess(45, 0x1000))
    assert not a.hit and a.activation is not None
    assert b.hit and b.activation is None
    assert fe.stats.activations == 1


def test_lru_forced_eviction_two_way():
    fe = frontend("lru")
    lines = [line_addr(fe, 3, k) for k in range(3)]
    for t, addr in enumerate(lines):
        assert not fe.access(MemoryAccess(t, addr)).hit
    out = fe.access(MemoryAccess(9, lines[0]))
    assert not out.hit
    assert out.eviction.tag == fe.geometry.map_address(lines[1]).llc_tag


def test_lru_hit_refreshes_recency():
    fe = frontend("lru")
    a, b, c = (line_addr(fe, 3, k) for k in range(3))
    for addr in (a, b, a, c):
        fe.access(MemoryAccess(0, addr))
    assert fe.access(MemoryAccess(1, a)).hit
    assert not fe.access(MemoryAccess(2, b)).hit


def test_srrip_hand_simulation():
    # 2 ways: fill A, B at rrpv 2; hit A -> 0; C ages B to 3 and replaces it
    fe = frontend("srrip")
    a, b, c = (line_addr(fe, 5, k) for k in range(3))
    for addr in (a, b, a, c):
        fe.access(MemoryAccess(0, addr))
    llc = fe.llc
    tags = [l.tag for l in llc.lines[5]]
    geo = fe.geometry
    assert tags == [geo.map_address(a).llc_tag, geo.map_address(c).llc_tag]
    assert [l.rrpv for l in llc.lines[5]] == [1, 2]


def test_srrip_tie_goes_to_lowest_way():
    fe = frontend("srrip")
    a, b, c = (line_addr(fe, 0, k) for k in range(3))
    for addr in (a, b, c):
        fe.access(MemoryAccess(0, addr))
    assert fe.llc.lines[0][0].tag == fe.geometry.map_address(c).llc_tag


def test_row_buffer_thrash_open_row():
    fe = frontend(llc_ways=16)
    geo = fe.geometry
    # rows 0 and 1 share bank 0; distinct columns so every access misses the LLC
    acts = [fe.access(MemoryAccess(i, geo.row_address(i % 2, i))).activation for i in range(40)]
    assert all(a is not None for a in acts)


def test_row_buffer_hit_open_row():
    fe = frontend(llc_ways=16)
    geo = fe.geometry
    acts = [fe.access(MemoryAccess(i, geo.row_address(7, i))).activation for i in range(10)]
    assert acts[0] is not None and all(a is None for a in acts[1:])
    assert fe.stats.row_buffer_hits == 9


def test_close_row_activations_equal_misses():
    fe = frontend(llc_ways=4, page_policy="close-row")
    rng = np.random.default_rng(1)
    for i, addr in enumerate(rng.integers(0, CFG.memory_bytes // 64, 3000) * 64):
        fe.access(MemoryAccess(i, int(addr)))
    assert fe.stats.activations == fe.stats.misses


def test_reserve_invalid_way_no_eviction():
    fe = frontend()
    assert fe.reserve_way(2, 0) is None
    assert fe.stats.forced_evictions == 0
    with pytest.raises(AlreadyReserved):
        fe.reserve_way(2, 0)


def test_reserve_dirty_line_counts_writeback():
    fe = frontend()
    addr = line_addr(fe, 4, 0)
    fe.access(MemoryAccess(0, addr, "W"))
    way = fe.llc.lookup(4, fe.geometry.map_address(addr).llc_tag)
    ev = fe.reserve_way(4, way)
    assert ev.forced and ev.dirty
    assert fe.stats.forced_evictions == 1
    assert fe.stats.writebacks == 1
    assert not fe.access(MemoryAccess(1, addr)).hit


def test_reserved_way_never_filled():
    fe = MemoryFrontend(Geometry(CFG.replace(llc_ways=8)), check_reservations=True)
    fe.reserve_way(1, 0)
    fe.reserve_way(1, 1)
    rng = np.random.default_rng(7)
    for i in range(10_000):
        fe.access(MemoryAccess(i, line_addr(fe, 1, int(rng.integers(0, 64)))))
    assert not fe.llc.lines[1][0].valid and not fe.llc.lines[1][1].valid


def test_release_all():
    fe = frontend()
    fe.reserve_way(0, 0)
    fe.reserve_way(3, 1)
    fe.release_all_reservations()
    assert fe.reserved_ways == 0
    fe.release_all_reservations()
    assert fe.reserved_ways == 0
    # a demand fill can now land in the previously reserved way
    fe.access(MemoryAccess(0, line_addr(fe, 0, 0)))
    assert fe.llc.lines[0][0].valid


def test_writeback_activations_opt_in():
    cfg = dict(llc_ways=2, page_policy="close-row")
    counts = []
    for flag in (False, True):
        fe = MemoryFrontend(Geometry(CFG.replace(**cfg)), policy="lru", count_writeback_acts=flag)
        a, b, c = (line_addr(fe, 0, k) for k in range(3))
        outs = [fe.access(MemoryAccess(i, x, "W")) for i, x in enumerate((a, b, c))]
        counts.append(sum(o.activation is not None for o in outs) + sum(o.writeback is not None for o in outs))
        assert fe.stats.writebacks == 1
        assert fe.stats.activations == counts[-1]
    assert counts == [3, 4]
    # the extra activation targets the row of the evicted line a
    assert outs[2].writeback.row_id == fe.geometry.map_address(a).row_id


def test_unknown_policy():
    with pytest.raises(ValueError):
        MemoryFrontend(Geometry(CFG), policy="plru")
