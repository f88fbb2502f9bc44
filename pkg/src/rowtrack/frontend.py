"""Reservation-aware set-associative LLC plus a per-bank row-buffer model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .errors import AlreadyReserved
from .geometry import Geometry
from .trace import ActivationEvent, Cause, MemoryAccess

RRPV_MAX = 3
RRPV_INSERT = 2


class CacheLineState:
    __slots__ = ("valid", "tag", "dirty", "rrpv")

    def __init__(self):
        self.valid = False
        self.tag = 0
        self.dirty = False
        self.rrpv = RRPV_MAX

    def __repr__(self):
        return f"CacheLineState(valid={self.valid}, tag={self.tag:#x}, dirty={self.dirty}, rrpv={self.rrpv})"


class Eviction(NamedTuple):
    set_index: int
    way: int
    tag: int
    dirty: bool
    forced: bool


class AccessOutcome(NamedTuple):
    hit: bool
    activation: Optional[ActivationEvent]
    eviction: Optional[Eviction]
    # activation of the written-back line's row (count_writeback_acts only)
    writeback: Optional[ActivationEvent] = None


@dataclass
class FrontendStats:
    hits: int = 0
    misses: int = 0
    activations: int = 0
    writebacks: int = 0
    forced_evictions: int = 0
    forced_writebacks: int = 0
    row_buffer_hits: int = 0


class LLC:
    """Set-associative cache with SRRIP (default) or LRU replacement.

    Reserved ways hold tracking metadata: they are skipped by lookup,
    insertion and victim selection. Ties always go to the lowest way index.
    """

    def __init__(self, sets: int, ways: int, policy: str = "srrip"):
        if policy not in ("srrip", "lru"):
            raise ValueError(f"unknown replacement policy {policy!r}")
        self.sets = sets
        self.ways = ways
        self.policy = policy
        self.lines = [[CacheLineState() for _ in range(ways)] for _ in range(sets)]
        self.reserved = [[False] * ways for _ in range(sets)]
        self.reserved_count = [0] * sets
        self._clock = 0

    def lookup(self, s: int, tag: int) -> Optional[int]:
        res = self.reserved[s]
        for w, line in enumerate(self.lines[s]):
            if line.valid and line.tag == tag and not res[w]:
                return w
        return None

    def touch(self, s: int, w: int) -> None:
        line = self.lines[s][w]
        if self.policy == "srrip":
            line.rrpv = 0
        else:
            self._clock += 1
            line.rrpv = self._clock

    def victim(self, s: int) -> int:
        lines = self.lines[s]
        res = self.reserved[s]
        candidates = [w for w in range(self.ways) if not res[w]]
        if not candidates:
            raise RuntimeError(f"set {s} has no unreserved way")
        for w in candidates:
            if not lines[w].valid:
                return w
        if self.policy == "lru":
            return min(candidates, key=lambda w: (lines[w].rrpv, w))
        while True:
            for w in candidates:
                if lines[w].rrpv >= RRPV_MAX:
                    return w
            for w in candidates:
                lines[w].rrpv += 1

    def fill(self, s: int, w: int, tag: int, dirty: bool) -> None:
        line = self.lines[s][w]
        line.valid = True
        line.tag = tag
        line.dirty = dirty
        if self.policy == "srrip":
            line.rrpv = RRPV_INSERT
        else:
            self._clock += 1
            line.rrpv = self._clock

    def snapshot(self) -> tuple:
        """Hashable view of all demand-visible state (for equivalence checks)."""
        return tuple(
            tuple((l.valid, l.tag, l.dirty, l.rrpv, r) for l, r in zip(lines, res))
            for lines, res in zip(self.lines, self.reserved)
        )


class MemoryFrontend:
    """Turns memory accesses into LLC hits/misses and demand activations."""

    def __init__(
        self,
        geometry: Geometry,
        policy: str = "srrip",
        count_writeback_acts: bool = False,
        check_reservations: bool = False,
    ):
        cfg = geometry.config
        self.geometry = geometry
        self.llc = LLC(cfg.llc_sets, cfg.llc_ways, policy)
        self.open_rows: list[Optional[int]] = [None] * cfg.bank_count
        self.close_row = cfg.page_policy == "close-row"
        self.count_writeback_acts = count_writeback_acts
        self.check_reservations = check_reservations
        self.stats = FrontendStats()
        self._set_bits = geometry.layout.set_bits
        self._line_bits = geometry.line_bits

    # -- demand path -------------------------------------------------------

    def access(self, a: MemoryAccess) -> AccessOutcome:
        addr = self.geometry.map_address(a.addr)
        llc = self.llc
        s, tag = addr.llc_set, addr.llc_tag
        w = llc.lookup(s, tag)
        if w is not None:
            llc.touch(s, w)
            if a.kind == "W":
                llc.lines[s][w].dirty = True
            self.stats.hits += 1
            return AccessOutcome(True, None, None)

        self.stats.misses += 1
        w = llc.victim(s)
        old = llc.lines[s][w]
        evicted = None
        wb_act = None
        if old.valid:
            evicted = Eviction(s, w, old.tag, old.dirty, False)
            if old.dirty:
                self.stats.writebacks += 1
                if self.count_writeback_acts:
                    wb_act = self._bank_activate(self._line_row(s, old.tag), a.time_ns)
        llc.fill(s, w, tag, a.kind == "W")
        act = self._bank_activate(addr.row_id, a.time_ns)
        if self.check_reservations:
            self.assert_reservations()
        return AccessOutcome(False, act, evicted, wb_act)

    def _line_row(self, s: int, tag: int) -> int:
        line = (tag << self._set_bits) | s
        return self.geometry.map_address(line << self._line_bits).row_id

    def _bank_activate(self, row_id: int, time_ns: int) -> Optional[ActivationEvent]:
        bank = self.geometry.bank_of_row(row_id)
        if not self.close_row and self.open_rows[bank] == row_id:
            self.stats.row_buffer_hits += 1
            return None
        self.open_rows[bank] = None if self.close_row else row_id
        self.stats.activations += 1
        return ActivationEvent(time_ns, row_id, Cause.DEMAND)

    # -- reservations --------------------------------------------------------

    def reserve_way(self, s: int, w: int) -> Optional[Eviction]:
        llc = self.llc
        if llc.reserved[s][w]:
            raise AlreadyReserved(f"way {w} of set {s} is already reserved")
        line = llc.lines[s][w]
        ev = None
        if line.valid:
            ev = Eviction(s, w, line.tag, line.dirty, True)
            self.stats.forced_evictions += 1
            if line.dirty:
                self.stats.writebacks += 1
                self.stats.forced_writebacks += 1
        line.valid = False
        line.dirty = False
        line.rrpv = RRPV_MAX if llc.policy == "srrip" else 0
        llc.reserved[s][w] = True
        llc.reserved_count[s] += 1
        return ev

    def release_all_reservations(self) -> None:
        llc = self.llc
        for s in range(llc.sets):
            if llc.reserved_count[s]:
                res = llc.reserved[s]
                for w in range(llc.ways):
                    if res[w]:
                        res[w] = False
                        # tracking lines are dropped, never written back as data
                        line = llc.lines[s][w]
                        line.valid = False
                        line.dirty = False
                llc.reserved_count[s] = 0

    @property
    def reserved_ways(self) -> int:
        return sum(self.llc.reserved_count)

    def assert_reservations(self) -> None:
        llc = self.llc
        for s in range(llc.sets):
            for w in range(llc.ways):
                if llc.reserved[s][w] and llc.lines[s][w].valid:
                    raise AssertionError(f"demand line resident in reserved way {w} of set {s}")
