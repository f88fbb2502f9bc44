"""Activation trackers: the START family and the one-counter-per-row ideal.

Every tracker here is exact: the count it holds for a row always equals the
row's true activations since the later of the window start and the row's
last mitigation. They differ only in where the counts live.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

from .codec import INVALID, LineCodec, TrackingEntry
from .errors import ConfigError
from .geometry import Geometry, Variant
from .mtt import MemoryMappedTable
from .sac import SacState, SacTable
from .trace import ActivationEvent


class Escalation(NamedTuple):
    set_index: int
    state: SacState
    ways_added: tuple


class TrackerOutcome(NamedTuple):
    mitigations: tuple = ()
    mtt_reads: int = 0
    mtt_writes: int = 0
    escalations: tuple = ()
    metadata: tuple = ()


QUIET = TrackerOutcome()


class ReorgReport(NamedTuple):
    set_index: int
    old_state: SacState
    new_state: SacState
    entries: int
    moved: int
    evicted: int


class IdealTracker:
    """One counter per row, never touching the LLC."""

    variant = Variant.IDEAL

    def __init__(self, geometry: Geometry):
        self.geometry = geometry
        self.threshold = geometry.tracker.effective_threshold
        self.counts: dict[int, int] = {}
        self.mitigations = 0

    def on_activation(self, e: ActivationEvent) -> TrackerOutcome:
        return self.ideal_on_activation(e)

    def ideal_on_activation(self, e: ActivationEvent) -> TrackerOutcome:
        c = self.counts.get(e.row_id, 0) + 1
        if c >= self.threshold:
            self.counts[e.row_id] = 0
            self.mitigations += 1
            return TrackerOutcome(mitigations=(e.row_id,))
        self.counts[e.row_id] = c
        return QUIET

    def window_reset(self, now_ns: int = 0) -> None:
        self.counts.clear()

    def count_of(self, row_id: int) -> int:
        return self.counts.get(row_id, 0)

    def snapshot(self) -> dict[int, int]:
        return {r: c for r, c in self.counts.items() if c}

    @property
    def reserved_ways(self) -> int:
        return 0

    def reserved_ways_of(self, set_index: int) -> int:
        return 0

    def sac_histogram(self) -> list[int]:
        return [self.geometry.config.llc_sets, 0, 0, 0]


class StartTracker:
    """START-S / START-D / START-M / START-LITE over packed LLC lines.

    Per set, ``lines[s]`` holds one bytearray per reserved way in reservation
    order. ``index[s]`` maps a row tag to its (way, slot) and ``used[s][w]``
    is a bitmask of occupied slots; both mirror the packed line contents.
    """

    def __init__(self, geometry: Geometry, mtt: Optional[MemoryMappedTable] = None):
        tcfg = geometry.tracker
        if tcfg is None or tcfg.variant is Variant.IDEAL:
            raise ConfigError("StartTracker needs a START variant configuration")
        self.geometry = geometry
        self.config = tcfg
        self.variant = tcfg.variant
        self.layout = lay = geometry.layout
        self.threshold = tcfg.effective_threshold
        self.free_on_mitigate = tcfg.free_on_mitigate
        sets = geometry.config.llc_sets
        self.sets = sets
        self.max_state = SacState(tcfg.resolved_max_state)
        if tcfg.backing == "none" and self.max_state is not SacState.S3:
            raise ConfigError(f"{self.variant.value} without a memory-mapped table must allow 8-way allocation")
        self.sac = SacTable(sets, self.max_state)
        self.tagged = LineCodec(lay, LineCodec.TAGGED)
        self.untagged = LineCodec(lay, LineCodec.UNTAGGED) if lay.untagged_feasible else None
        self.per_line = lay.entries_per_line
        self._full = (1 << self.per_line) - 1
        self._top_shift = lay.byte_bits
        if tcfg.backing == "mtt":
            self.mtt = mtt if mtt is not None else MemoryMappedTable(geometry, tcfg.mtt_reset_mode)
        else:
            self.mtt = None
        self.mitigations = 0
        self.reorgs: list[ReorgReport] = []
        self.static = self.variant is Variant.START_S
        self._clear()
        if self.static:
            self.sac.fill(SacState.S3)
            for s in range(sets):
                self.lines[s] = [self.untagged.new_line() for _ in range(8)]
                self.untagged_mode[s] = True

    def _clear(self) -> None:
        n = self.sets
        self.lines: list[list[bytearray]] = [[] for _ in range(n)]
        self.index: list[dict[int, tuple[int, int]]] = [{} for _ in range(n)]
        self.used: list[list[int]] = [[] for _ in range(n)]
        self.untagged_mode = [False] * n

    # -- hashing -------------------------------------------------------------

    def hashed_way(self, state: SacState, tag: int) -> int:
        if state is SacState.S1:
            return 0
        if state is SacState.S2:
            return tag & 1
        return tag >> self._top_shift

    # -- main entry point ----------------------------------------------------

    def on_activation(self, e: ActivationEvent) -> TrackerOutcome:
        s, tag = self.geometry.set_and_tag(e.row_id)
        if self.untagged_mode[s]:
            way, byte = tag >> self._top_shift, tag & ((1 << self._top_shift) - 1)
            line = self.lines[s][way]
            c = line[byte] + 1
            if c >= self.threshold:
                line[byte] = 0
                self.mitigations += 1
                return TrackerOutcome(mitigations=(e.row_id,))
            line[byte] = c
            return QUIET

        loc = self.index[s].get(tag)
        if loc is not None:
            way, slot = loc
            line = self.lines[s][way]
            entry = self.tagged.read(line, slot)
            c = entry.counter + 1
            if c >= self.threshold:
                self.mitigations += 1
                if self.free_on_mitigate:
                    self._free(s, way, slot, tag)
                else:
                    self.tagged.write(line, slot, TrackingEntry(True, tag, 0))
                return TrackerOutcome(mitigations=(e.row_id,))
            self.tagged.write(line, slot, TrackingEntry(True, tag, c))
            return QUIET
        return self._install(s, tag, e)

    def _install(self, s: int, tag: int, e: ActivationEvent) -> TrackerOutcome:
        escalations = []
        metadata: list = []
        mtt = self.mtt
        reads0 = mtt.stats.reads if mtt else 0
        writes0 = mtt.stats.writes if mtt else 0
        count = None
        while True:
            state = self.sac.get(s)
            if state is SacState.S0:
                escalations.append(self._escalate(s, e.time_ns, metadata))
                continue
            if self.untagged_mode[s]:
                break
            way = self.hashed_way(state, tag)
            slot = self._free_slot(s, way)
            if slot is not None:
                count = mtt.on_miss_with_space(s, e.row_id, e.time_ns, metadata) if mtt else 1
                break
            if state < self.max_state:
                escalations.append(self._escalate(s, e.time_ns, metadata))
                continue
            if mtt is None:
                raise AssertionError(f"set {s} way {way} full at {state.name} with no backing table")
            slot = self._victim_slot(s, way)
            victim = self.tagged.read(self.lines[s][way], slot)
            victim_row = self.geometry.row_of(s, victim.tag)
            self._free(s, way, slot, victim.tag)
            count = mtt.evict_and_fetch(s, victim_row, victim.counter, e.row_id, e.time_ns, metadata) + 1
            break

        mitigations = ()
        if self.untagged_mode[s]:
            # START-D just reorganized to untagged; the row's byte holds its count
            way, byte = self.geometry.untagged_position(tag)
            line = self.lines[s][way]
            c = line[byte] + 1
            if c >= self.threshold:
                c = 0
                mitigations = (e.row_id,)
            line[byte] = c
        else:
            if count >= self.threshold:
                mitigations = (e.row_id,)
                count = 0
            if count or not self.free_on_mitigate:
                self._place(s, way, slot, tag, count)
        if mitigations:
            self.mitigations += 1
        if not (escalations or metadata or mitigations):
            return QUIET
        return TrackerOutcome(
            mitigations=mitigations,
            mtt_reads=(mtt.stats.reads - reads0) if mtt else 0,
            mtt_writes=(mtt.stats.writes - writes0) if mtt else 0,
            escalations=tuple(escalations),
            metadata=tuple(metadata),
        )

    # -- slot bookkeeping ------------------------------------------------------

    def _free_slot(self, s: int, way: int) -> Optional[int]:
        mask = self.used[s][way]
        if mask == self._full:
            return None
        return ((~mask) & (mask + 1)).bit_length() - 1

    def _place(self, s: int, way: int, slot: int, tag: int, count: int) -> None:
        self.tagged.write(self.lines[s][way], slot, TrackingEntry(True, tag, count))
        self.used[s][way] |= 1 << slot
        self.index[s][tag] = (way, slot)

    def _free(self, s: int, way: int, slot: int, tag: int) -> None:
        self.tagged.write(self.lines[s][way], slot, INVALID)
        self.used[s][way] &= ~(1 << slot)
        del self.index[s][tag]

    def _victim_slot(self, s: int, way: int) -> int:
        """Occupied slot with the smallest counter, lowest slot on ties."""
        line = self.lines[s][way]
        mask = self.used[s][way]
        counter_at = self.tagged.counter_at
        best = best_count = None
        for slot in range(self.per_line):
            if mask >> slot & 1:
                c = counter_at(line, slot)
                if best is None or c < best_count:
                    best, best_count = slot, c
        return best

    # -- escalation --------------------------------------------------------------

    def _escalate(self, s: int, time_ns: int, metadata: list) -> Escalation:
        report = self.escalate_set(s, time_ns, metadata)
        return Escalation(s, report.new_state, tuple(report.new_state.reserved_way_indices[report.old_state.ways :]))

    def escalate_set(self, s: int, time_ns: int = 0, metadata: Optional[list] = None) -> ReorgReport:
        """Lease the next allocation step to set ``s`` and reorganize its entries.

        S1->S2 keeps even tags in way 0 and moves odd tags to way 1. S2->S3
        either rewrites every entry into its untagged byte (START-S/D) or
        rehashes tagged entries by their top three tag bits (START-M),
        evicting the smallest counters to the table if a way overflows.
        """
        if metadata is None:
            metadata = []
        old = self.sac.get(s)
        new, _ = self.sac.escalate(s)
        tagged = self.tagged
        moved = evicted = 0
        entries = 0
        if new is SacState.S1:
            self.lines[s] = [tagged.new_line()]
            self.used[s] = [0]
            self.index[s] = {}
        elif new is SacState.S2:
            self.lines[s].append(tagged.new_line())
            self.used[s].append(0)
            for tag, (way, slot) in list(self.index[s].items()):
                entries += 1
                if tag & 1:
                    ent = tagged.read(self.lines[s][way], slot)
                    self._free(s, way, slot, tag)
                    self._place(s, 1, self._free_slot(s, 1), tag, ent.counter)
                    moved += 1
        else:
            resident = self._collect(s)
            entries = len(resident)
            if self.variant in (Variant.START_S, Variant.START_D):
                lines = [self.untagged.new_line() for _ in range(8)]
                for tag, count in resident:
                    way, byte = self.geometry.untagged_position(tag)
                    lines[way][byte] = count
                self.lines[s] = lines
                self.used[s] = []
                self.index[s] = {}
                self.untagged_mode[s] = True
                moved = entries
            else:
                self.lines[s] = [tagged.new_line() for _ in range(8)]
                self.used[s] = [0] * 8
                self.index[s] = {}
                buckets: list[list] = [[] for _ in range(8)]
                for order, (tag, count) in enumerate(resident):
                    buckets[tag >> self._top_shift].append((count, order, tag))
                for way, bucket in enumerate(buckets):
                    overflow = len(bucket) - self.per_line
                    if overflow > 0:
                        bucket.sort()
                        self.mtt.ensure_active(s, time_ns, metadata)
                        for count, _, tag in bucket[:overflow]:
                            self.mtt.write(self.geometry.row_of(s, tag), count, time_ns, metadata)
                        evicted += overflow
                        bucket = sorted(bucket[overflow:], key=lambda b: b[1])
                    for count, _, tag in bucket:
                        self._place(s, way, self._free_slot(s, way), tag, count)
                moved = entries - evicted
        report = ReorgReport(s, old, new, entries, moved, evicted)
        if old is not SacState.S0:
            self.reorgs.append(report)
        return report

    def _collect(self, s: int) -> list[tuple[int, int]]:
        """Valid (tag, counter) pairs decoded from the set's lines, in way/slot order."""
        out = []
        for line in self.lines[s]:
            for ent in self.tagged.decode(line):
                if ent.valid:
                    out.append((ent.tag, ent.counter))
        return out

    # -- window and inspection ---------------------------------------------------

    def window_reset(self, now_ns: int = 0) -> None:
        if self.static:
            for lines in self.lines:
                for line in lines:
                    line[:] = bytes(len(line))
            return
        self.sac.reset_all()
        self._clear()
        if self.mtt is not None:
            self.mtt.window_reset()

    def count_of(self, row_id: int) -> int:
        s, tag = self.geometry.set_and_tag(row_id)
        if self.untagged_mode[s]:
            way, byte = self.geometry.untagged_position(tag)
            return self.lines[s][way][byte]
        loc = self.index[s].get(tag)
        if loc is not None:
            return self.tagged.read(self.lines[s][loc[0]], loc[1]).counter
        if self.mtt is not None:
            return self.mtt.stored(s, row_id)
        return 0

    def snapshot(self) -> dict[int, int]:
        """Every nonzero count the tracker holds, LLC and table combined."""
        out: dict[int, int] = {}
        geo = self.geometry
        if self.mtt is not None:
            for s in self.mtt.active.nonzero()[0].tolist():
                rows = geo.rows_of_set(s)
                vals = self.mtt.counters[rows]
                for r, v in zip(rows[vals != 0].tolist(), vals[vals != 0].tolist()):
                    out[r] = v
        for s in range(self.sets):
            if self.untagged_mode[s]:
                for way, line in enumerate(self.lines[s]):
                    for byte, v in enumerate(line):
                        if v:
                            out[geo.row_of(s, (way << self._top_shift) | byte)] = v
                continue
            for tag, (way, slot) in self.index[s].items():
                row = geo.row_of(s, tag)
                v = self.tagged.read(self.lines[s][way], slot).counter
                if v:
                    out[row] = v
                else:
                    out.pop(row, None)
        return out

    def check_consistency(self) -> None:
        """Assert the index and slot masks agree with the packed lines."""
        for s in range(self.sets):
            if self.untagged_mode[s] or not self.lines[s]:
                continue
            seen = {}
            for way, line in enumerate(self.lines[s]):
                mask = 0
                for slot, ent in enumerate(self.tagged.decode(line)):
                    if ent.valid:
                        mask |= 1 << slot
                        assert ent.tag not in seen, f"duplicate tag {ent.tag} in set {s}"
                        seen[ent.tag] = (way, slot)
                assert mask == self.used[s][way], f"slot mask mismatch in set {s} way {way}"
            assert seen == self.index[s], f"index mismatch in set {s}"

    @property
    def reserved_ways(self) -> int:
        return self.sac.reserved_ways

    def reserved_ways_of(self, set_index: int) -> int:
        return self.sac.get(set_index).ways

    def sac_histogram(self) -> list[int]:
        return self.sac.histogram()


def make_tracker(geometry: Geometry):
    if geometry.tracker is None:
        raise ConfigError("geometry has no tracker configuration")
    if geometry.tracker.variant is Variant.IDEAL:
        return IdealTracker(geometry)
    return StartTracker(geometry)
