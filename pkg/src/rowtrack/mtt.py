"""Memory-mapped tracking table: per-row counters held in DRAM rows.

The table backs the LLC-resident tagged entries of START-M and START-LITE.
While a row's entry is resident in the LLC that copy is authoritative; a
fetch therefore clears the in-memory copy so that a later free-on-mitigate
never resurrects a stale count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Geometry
from .trace import ActivationEvent, Cause


@dataclass
class MttStats:
    reads: int = 0
    writes: int = 0
    resets: int = 0
    reset_line_writes: int = 0


class MemoryMappedTable:
    def __init__(self, geometry: Geometry, reset_mode: str = "bulk"):
        lay = geometry.layout
        if lay.mtt_row_base is None:
            raise ValueError("geometry was not validated for a memory-mapped tracker")
        self.geometry = geometry
        self.reset_mode = reset_mode
        self.counters = np.zeros(geometry.row_count, dtype=np.int32)
        self.active = np.zeros(geometry.config.llc_sets, dtype=bool)
        self.mtt_row_base = lay.mtt_row_base
        self.mtt_rows = lay.mtt_rows
        self.counter_bytes = lay.counter_bytes
        self.row_size = geometry.config.row_size_bytes
        self.line_bytes = geometry.config.line_bytes
        self.stats = MttStats()

    def mtt_row_of(self, row_id: int) -> int:
        return self.mtt_row_base + (row_id * self.counter_bytes) // self.row_size

    def is_mtt_row(self, row_id: int) -> bool:
        return self.mtt_row_base <= row_id < self.mtt_row_base + self.mtt_rows

    def stored(self, set_index: int, row_id: int) -> int:
        """Count the table holds for a non-resident row (0 before the set's lazy reset)."""
        return int(self.counters[row_id]) if self.active[set_index] else 0

    # -- primitive accesses ------------------------------------------------

    def read(self, row_id: int, time_ns: int, events: list) -> int:
        self.stats.reads += 1
        events.append(ActivationEvent(time_ns, self.mtt_row_of(row_id), Cause.METADATA))
        value = int(self.counters[row_id])
        self.counters[row_id] = 0
        return value

    def write(self, row_id: int, count: int, time_ns: int, events: list) -> None:
        self.stats.writes += 1
        events.append(ActivationEvent(time_ns, self.mtt_row_of(row_id), Cause.METADATA))
        self.counters[row_id] = count

    def lazy_reset(self, set_index: int, time_ns: int, events: list) -> None:
        rows = self.geometry.rows_of_set(set_index)
        self.counters[rows] = 0
        self.active[set_index] = True
        self.stats.resets += 1
        if self.reset_mode == "per_line":
            offsets = rows * self.counter_bytes
            lines = np.unique(offsets // self.line_bytes)
            self.stats.reset_line_writes += int(lines.size)
            for mrow in np.unique(offsets // self.row_size).tolist():
                events.append(ActivationEvent(time_ns, self.mtt_row_base + mrow, Cause.METADATA))

    def ensure_active(self, set_index: int, time_ns: int, events: list) -> None:
        if not self.active[set_index]:
            self.lazy_reset(set_index, time_ns, events)

    # -- tracker-facing operations -----------------------------------------

    def on_miss_with_space(self, set_index: int, row_id: int, time_ns: int, events: list) -> int:
        """Count to install for a row missing from a way that still has room.

        Before the set's first eviction no row can have been evicted, so the
        row is new and the table is not touched. Afterwards the table is
        always consulted, since a freed slot does not prove first access.
        """
        if not self.active[set_index]:
            return 1
        return self.read(row_id, time_ns, events) + 1

    def evict_and_fetch(
        self, set_index: int, victim_row: int, victim_count: int, incoming_row: int, time_ns: int, events: list
    ) -> int:
        self.ensure_active(set_index, time_ns, events)
        self.write(victim_row, victim_count, time_ns, events)
        return self.read(incoming_row, time_ns, events)

    def window_reset(self) -> None:
        # counters are cleared lazily, set by set, on first eviction
        self.active[:] = False
