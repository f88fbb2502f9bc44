import pytest
from hypothesis import given
from hypothesis import strategies as st

from rowtrack import DESK, BASELINE, SacState, SacTable, TrackerConfig, validate
from rowtrack.codec import INVALID, LineCodec, TrackingEntry
from rowtrack.errors import AlreadyMax, AtCap


def test_fresh_table_all_s0():
    sac = SacTable(64)
    assert all(sac.get(s) is SacState.S0 for s in range(64))


def test_escalation_sequence():
    sac = SacTable(64)
    assert sac.escalate(7) == (SacState.S1, [0])
    assert sac.get(7) is SacState.S1
    assert sac.get(6) is SacState.S0
    assert sac.escalate(7) == (SacState.S2, [1])
    assert sac.escalate(7) == (SacState.S3, [2, 3, 4, 5, 6, 7])
    with pytest.raises(AlreadyMax):
        sac.escalate(7)
    assert sac.reserved_ways == 8


@pytest.mark.parametrize("state", [SacState.S1, SacState.S2, SacState.S3])
def test_reset_returns_to_s0(state):
    sac = SacTable(16)
    for _ in range(state):
        sac.escalate(3)
    sac.reset_all()
    assert sac.histogram() == [16, 0, 0, 0]
    assert sac.reserved_ways == 0


def test_cap_for_lite():
    sac = SacTable(4, max_state=SacState.S1)
    sac.escalate(0)
    with pytest.raises(AtCap):
        sac.escalate(0)


@given(st.lists(st.integers(0, 7), max_size=60))
def test_monotone_within_window(sets):
    sac = SacTable(8)
    prev = [0] * 8
    for s in sets:
        if sac.get(s) is not SacState.S3:
            sac.escalate(s)
        now = [int(sac.get(i)) for i in range(8)]
        assert all(a >= b for a, b in zip(now, prev))
        prev = now
    assert sac.reserved_ways == sum(SacState(x).ways for x in prev)


def test_storage_and_capacity():
    assert SacTable(16384).storage_bytes == 4096
    lay = validate(BASELINE, TrackerConfig("start_d", counter_bits=7, free_on_mitigate=True))
    assert 16384 * lay.entries_per_line == 524_288


def _codec(variant="start_m", fmt=LineCodec.TAGGED, **kw):
    return LineCodec(validate(DESK, TrackerConfig(variant, t_rh=256, **kw)), fmt)


@given(st.data())
def test_tagged_round_trip(data):
    codec = _codec()
    entries = data.draw(
        st.lists(
            st.builds(
                TrackingEntry,
                st.just(True),
                st.integers(0, (1 << codec.tag_bits) - 1),
                st.integers(0, (1 << codec.counter_bits) - 1),
            ),
            max_size=codec.slots,
        )
    )
    entries = entries + [INVALID] * (codec.slots - len(entries))
    assert codec.decode(codec.encode(entries)) == entries


@given(st.lists(st.integers(0, 127), min_size=64, max_size=64))
def test_untagged_round_trip(counters):
    codec = _codec("start_d", LineCodec.UNTAGGED)
    assert codec.counter_bits == 7
    line = codec.encode(TrackingEntry(True, 0, c) for c in counters)
    assert bytes(line) == bytes(counters)
    assert [e.counter for e in codec.decode(line)] == counters


def test_valid_bit_keeps_zero_counter():
    codec = _codec()
    line = codec.new_line()
    codec.write(line, 2, TrackingEntry(True, 5, 0))
    assert codec.read(line, 2) == TrackingEntry(True, 5, 0)
    assert codec.read(line, 1) == INVALID


def test_no_valid_bit_zero_counter_is_free():
    codec = _codec("start_d", free_on_mitigate=True)
    assert codec.valid_bits == 0
    line = codec.new_line()
    codec.write(line, 0, TrackingEntry(True, 5, 0))
    assert codec.read(line, 0) == INVALID


def test_counter_at_and_overflow():
    codec = _codec()
    line = codec.new_line()
    codec.write(line, 4, TrackingEntry(True, 300, 77))
    assert codec.counter_at(line, 4) == 77
    with pytest.raises(OverflowError):
        codec.write(line, 0, TrackingEntry(True, 0, 1 << codec.counter_bits))
    with pytest.raises(OverflowError):
        codec.write(line, 0, TrackingEntry(True, 1 << codec.tag_bits, 1))
    with pytest.raises(ValueError):
        codec.encode([INVALID] * (codec.slots + 1))
