"""Set Allocation Counter table: two bits per LLC set selecting 0/1/2/8 leased ways."""

from __future__ import annotations

from enum import IntEnum

import numpy as np

from .errors import AlreadyMax, AtCap

RESERVATION_ORDER = (0, 1, 2, 3, 4, 5, 6, 7)


class SacState(IntEnum):
    S0 = 0
    S1 = 1
    S2 = 2
    S3 = 3

    @property
    def ways(self) -> int:
        return WAYS_BY_STATE[self]

    @property
    def reserved_way_indices(self) -> tuple[int, ...]:
        return RESERVATION_ORDER[: self.ways]


WAYS_BY_STATE = (0, 1, 2, 8)


class SacTable:
    """Per-set allocation state, monotone within a tracking window.

    ``max_state`` caps escalation (START-LITE uses S1); asking for more raises
    :class:`AtCap` so the caller can fall back to the memory-mapped table.
    """

    def __init__(self, sets: int, max_state: int = SacState.S3):
        self.sets = sets
        self.max_state = SacState(max_state)
        self.states = np.zeros(sets, dtype=np.uint8)
        self.reserved_ways = 0
        self.escalations = 0

    def get(self, set_index: int) -> SacState:
        return SacState(int(self.states[set_index]))

    def escalate(self, set_index: int) -> tuple[SacState, list[int]]:
        cur = SacState(int(self.states[set_index]))
        if cur is SacState.S3:
            raise AlreadyMax(f"set {set_index} already holds 8 reserved ways")
        if cur >= self.max_state:
            raise AtCap(f"set {set_index} is at the configured cap {self.max_state.name}")
        new = SacState(cur + 1)
        self.states[set_index] = new
        added = list(RESERVATION_ORDER[cur.ways : new.ways])
        self.reserved_ways += len(added)
        self.escalations += 1
        return new, added

    def reset_all(self) -> None:
        self.states[:] = 0
        self.reserved_ways = 0

    def fill(self, state: SacState) -> None:
        """Force every set to ``state`` (START-S static reservation)."""
        self.states[:] = state
        self.reserved_ways = self.sets * SacState(state).ways

    def histogram(self) -> list[int]:
        return np.bincount(self.states, minlength=4).tolist()

    @property
    def storage_bytes(self) -> int:
        return (2 * self.sets + 7) // 8
