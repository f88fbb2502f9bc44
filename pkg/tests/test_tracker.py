import math

import numpy as np
import pytest

from rowtrack import DESK, Geometry, IdealTracker, SacState, StartTracker, TrackerConfig, make_tracker
from rowtrack.errors import AtCap
from rowtrack.trace import ActivationEvent

VARIANTS = ["start_s", "start_d", "start_m", "start_lite", "ideal"]


def tracker(variant="start_d", config=DESK, **kw):
    kw.setdefault("t_rh", 256)
    return make_tracker(Geometry(config, TrackerConfig(variant, **kw)))


def hit(t, row, n=1, start=0):
    """Activate ``row`` n times; return the number of mitigations."""
    return sum(len(t.on_activation(ActivationEvent(start + i, row)).mitigations) for i in range(n))


def set_rows(t, s, n, bucket=None):
    """First n rows of set s (optionally inside one top-3-bit bucket)."""
    rows = t.geometry.rows_of_set(s)
    if bucket is not None:
        per = len(rows) // 8
        rows = rows[bucket * per : (bucket + 1) * per]
    return [int(r) for r in rows[:n]]


@pytest.mark.parametrize("variant", VARIANTS)
def test_mitigation_on_128th_activation(variant):
    t = tracker(variant)
    assert hit(t, 1234, 127) == 0
    assert t.count_of(1234) == 127
    assert hit(t, 1234, 1) == 1
    assert t.count_of(1234) == 0


@pytest.mark.parametrize("variant", VARIANTS)
def test_k_thresholds_give_k_mitigations(variant):
    t = tracker(variant, t_rh=16)
    assert hit(t, 77, 8 * 5) == 5


def test_ideal_zero_activations():
    t = tracker("ideal")
    assert t.mitigations == 0 and t.snapshot() == {}


def test_start_d_fills_one_way_then_splits():
    t = tracker("start_d", free_on_mitigate=True)
    assert t.per_line == 32
    rows = set_rows(t, 3, 33)
    for r in rows[:32]:
        assert hit(t, r) == 0
    assert t.sac.get(3) is SacState.S1
    assert len(t.index[3]) == 32
    out = t.on_activation(ActivationEvent(0, rows[32]))
    assert out.escalations[0].state is SacState.S2
    assert t.sac.get(3) is SacState.S2
    assert len(t.index[3]) == 33
    for tag, (way, _) in t.index[3].items():
        assert way == tag & 1
    t.check_consistency()


def test_parity_split_by_hand():
    t = tracker("start_d")
    t.escalate_set(9)
    for tag, c in [(2, 4), (5, 6), (8, 1), (11, 3)]:
        t._place(9, 0, t._free_slot(9, 0), tag, c)
    rep = t.escalate_set(9)
    assert (rep.old_state, rep.new_state, rep.entries, rep.moved) == (SacState.S1, SacState.S2, 4, 2)
    way_a = {e.tag: e.counter for e in t.tagged.decode(t.lines[9][0]) if e.valid}
    way_b = {e.tag: e.counter for e in t.tagged.decode(t.lines[9][1]) if e.valid}
    assert way_a == {2: 4, 8: 1}
    assert way_b == {5: 6, 11: 3}


def test_untagged_conversion_by_hand():
    t = tracker("start_d")
    t.escalate_set(2)
    t.escalate_set(2)
    tag = 0b101000011
    t._place(2, tag & 1, t._free_slot(2, tag & 1), tag, 9)
    t.escalate_set(2)
    assert t.untagged_mode[2]
    assert t.lines[2][5][3] == 9
    assert t.count_of(t.geometry.row_of(2, tag)) == 9
    assert sum(sum(line) for line in t.lines[2]) == 9


def test_empty_set_escalation():
    t = tracker("start_d")
    for _ in range(3):
        t.escalate_set(0)
    assert all(not any(line) for line in t.lines[0])
    m = tracker("start_m")
    for _ in range(3):
        m.escalate_set(0)
    assert all(mask == 0 for mask in m.used[0])


def test_escalation_preserves_pairs():
    rng = np.random.default_rng(4)
    for variant in ("start_d", "start_m"):
        t = tracker(variant, t_rh=512)
        rows = set_rows(t, 5, 200)
        truth = {}
        for r in rng.choice(rows, 3000).tolist():
            truth[r] = truth.get(r, 0) + 1
            hit(t, r)
        assert t.sac.get(5) is SacState.S3
        for r, n in truth.items():
            assert t.count_of(r) == n % 256


def test_start_m_overflow_on_rehash_goes_to_table():
    t = tracker("start_m")
    per = t.per_line
    # 2 ways of one bucket's rows: the 8-way rehash must evict per_line of them
    rows = set_rows(t, 1, 2 * per, bucket=0)
    for i, r in enumerate(rows):
        hit(t, r, 1 + i % 5)
    assert t.sac.get(1) is SacState.S2
    hit(t, set_rows(t, 1, 1, bucket=0)[0] + 2 * per)  # one more -> S3
    rep = t.reorgs[-1]
    assert rep.new_state is SacState.S3 and rep.evicted == per
    for i, r in enumerate(rows):
        assert t.count_of(r) == 1 + i % 5
    t.check_consistency()


def test_lite_cap():
    t = tracker("start_lite")
    t.escalate_set(0)
    with pytest.raises(AtCap):
        t.sac.escalate(0)


def test_start_d_never_touches_memory():
    t = tracker("start_d")
    rng = np.random.default_rng(0)
    for r in rng.integers(0, DESK.row_count, 20000).tolist():
        out = t.on_activation(ActivationEvent(0, r))
        assert out.mtt_reads == out.mtt_writes == 0 and not out.metadata
    assert t.mtt is None


@pytest.mark.parametrize("variant", VARIANTS)
def test_window_reset(variant):
    t = tracker(variant)
    t.window_reset()  # no-op on empty state
    hit(t, 55, 30)
    t.window_reset()
    t.window_reset()
    assert t.count_of(55) == 0
    hit(t, 55)
    assert t.count_of(55) == 1
    if variant != "ideal":
        assert t.reserved_ways == (8 * DESK.llc_sets if variant == "start_s" else 1)


def test_start_s_static():
    t = tracker("start_s")
    assert t.sac_histogram() == [0, 0, 0, DESK.llc_sets]
    t.window_reset()
    assert t.reserved_ways == 8 * DESK.llc_sets


def test_free_on_mitigate_releases_slot():
    t = tracker("start_d", free_on_mitigate=True)
    hit(t, 64, 128)
    s, tag = t.geometry.set_and_tag(64)
    assert tag not in t.index[s]
    keep = tracker("start_d")
    hit(keep, 64, 128)
    assert tag in keep.index[s]


# -- memory-mapped table --------------------------------------------------------


def lite():
    return tracker("start_lite")


def test_cold_install_no_table_traffic():
    t = lite()
    out = t.on_activation(ActivationEvent(0, 100))
    assert out.mtt_reads == 0 and t.count_of(100) == 1
    assert t.mtt.stats.resets == 0


def test_evict_at_40_returns_at_41():
    t = lite()
    rows = set_rows(t, 6, t.per_line + 1)
    a, others, x = rows[0], rows[1 : t.per_line], rows[t.per_line]
    hit(t, a, 40)
    for r in others:
        hit(t, r, 50)
    out = t.on_activation(ActivationEvent(1, x))
    assert (out.mtt_writes, out.mtt_reads, len(out.metadata)) == (1, 1, 2)
    assert t.mtt.counters[a] == 40
    assert t.count_of(x) == 1
    out = t.on_activation(ActivationEvent(2, a))
    assert out.mtt_reads == 1
    assert t.count_of(a) == 41
    assert t.mtt.stats.resets == 1
    # victim x went back with its count of 1
    assert t.count_of(x) == 1


def test_metadata_targets_table_rows():
    t = lite()
    rows = set_rows(t, 6, t.per_line + 1)
    for r in rows:
        out = t.on_activation(ActivationEvent(0, r))
    mtt = t.mtt
    assert [e.row_id for e in out.metadata] == [mtt.mtt_row_of(rows[0]), mtt.mtt_row_of(rows[-1])]
    assert all(mtt.is_mtt_row(e.row_id) for e in out.metadata)


def test_new_row_after_eviction_reads_zero():
    t = lite()
    mtt = t.mtt
    events = []
    mtt.lazy_reset(3, 0, events)
    assert mtt.on_miss_with_space(3, set_rows(t, 3, 1)[0], 0, events) == 1
    assert mtt.stats.reads == 1


def test_lazy_reset_once_per_set_and_window():
    t = lite()
    rows = set_rows(t, 8, t.per_line + 5)
    for r in rows:
        hit(t, r)
    assert t.mtt.stats.resets == 1
    assert t.mtt.stats.writes == 5


def test_stale_counts_do_not_cross_windows():
    t = lite()
    rows = set_rows(t, 6, t.per_line + 1)
    a = rows[0]
    hit(t, a, 40)
    for r in rows[1:]:
        hit(t, r, 50)
    assert t.mtt.counters[a] == 40
    t.window_reset()
    assert t.count_of(a) == 0
    fresh = set_rows(t, 6, 2 * t.per_line + 1)[t.per_line + 1 :]
    for r in fresh:
        hit(t, r, 2)
    hit(t, a)
    assert t.count_of(a) == 1


def test_lazy_reset_is_per_set():
    t = lite()
    mtt = t.mtt
    r3, r4 = set_rows(t, 3, 1)[0], set_rows(t, 4, 1)[0]
    mtt.counters[[r3, r4]] = 7
    mtt.lazy_reset(3, 0, [])
    assert mtt.counters[r3] == 0 and mtt.counters[r4] == 7


def test_mtt_row_arithmetic():
    mtt = lite().mtt
    assert mtt.mtt_row_of(0) == mtt.mtt_row_base
    need = math.ceil(DESK.row_count * mtt.counter_bytes / DESK.row_size_bytes)
    assert mtt.mtt_row_of(DESK.row_count - 1) == mtt.mtt_row_base + need - 1
    # the region covers its own rows
    assert mtt.mtt_row_of(mtt.mtt_row_base + mtt.mtt_rows - 1) < mtt.mtt_row_base + mtt.mtt_rows


def test_victim_is_smallest_counter_lowest_slot():
    t = lite()
    rows = set_rows(t, 2, t.per_line + 1)
    for i, r in enumerate(rows[:-1]):
        hit(t, r, 5 if i not in (3, 7) else 2)
    hit(t, rows[-1])
    s, tag3 = t.geometry.set_and_tag(rows[3])
    assert tag3 not in t.index[s]
    assert t.geometry.set_and_tag(rows[7])[1] in t.index[s]


def test_start_tracker_rejects_ideal():
    with pytest.raises(ValueError):
        StartTracker(Geometry(DESK, TrackerConfig("ideal")))
    assert isinstance(tracker("ideal"), IdealTracker)
