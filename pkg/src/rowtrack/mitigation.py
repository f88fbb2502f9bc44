"""Victim-refresh mitigation (DRFM) and cascade draining.

Refreshing a victim row activates it, so every refresh re-enters the tracker
as a ``victim_refresh`` activation and can trigger further mitigations.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

from .errors import CascadeLimitExceeded
from .geometry import Geometry
from .trace import ActivationEvent, Cause


@dataclass(frozen=True)
class MitigationRecord:
    time_ns: int
    aggressor_row: int
    blast_radius: int
    victim_rows: tuple = field(default_factory=tuple)
    event_index: int = -1

    def log_line(self, variant: str) -> dict:
        return {"time_ns": self.time_ns, "row_id": self.aggressor_row, "variant": variant}


def victim_rows(geometry: Geometry, aggressor: int, radius: int) -> list[int]:
    """Rows within ``radius`` of ``aggressor`` in the same bank, nearest first."""
    if not 1 <= radius <= 4:
        raise ValueError(f"blast radius must be in [1, 4], got {radius}")
    per_bank = geometry.config.rows_per_bank
    lo = (aggressor // per_bank) * per_bank
    hi = lo + per_bank
    out = []
    for d in range(1, radius + 1):
        for r in (aggressor - d, aggressor + d):
            if lo <= r < hi:
                out.append(r)
    return out


class Mitigator:
    def __init__(self, geometry: Geometry, radius: int = 1):
        if not 1 <= radius <= 4:
            raise ValueError(f"blast radius must be in [1, 4], got {radius}")
        self.geometry = geometry
        self.radius = radius
        self.records: list[MitigationRecord] = []
        self.victim_refreshes = 0

    def execute(self, aggressor: int, time_ns: int, event_index: int = -1) -> list[ActivationEvent]:
        victims = victim_rows(self.geometry, aggressor, self.radius)
        self.records.append(MitigationRecord(time_ns, aggressor, self.radius, tuple(victims), event_index))
        self.victim_refreshes += len(victims)
        return [ActivationEvent(time_ns, v, Cause.VICTIM_REFRESH) for v in victims]


def cascade_gain(t_rh: int, radius: int, table_backed: bool) -> float:
    """Worst-case mitigations caused per mitigation.

    Each mitigation activates 2*radius victims; a mitigation needs
    effective_threshold activations. With a memory-mapped table a victim
    that misses in the LLC also costs a table write and read, and the
    table rows are tracked too, so the feedback doubles. At gain >= 1 a
    cascade is not guaranteed to settle.
    """
    per_victim = 2 if table_backed else 1
    return 2 * radius * per_victim / (t_rh // 2)


class CascadeResult(NamedTuple):
    mitigations: int
    depth: int
    processed: int


def drain_cascade(
    queue: Iterable[ActivationEvent],
    handle: Callable[[ActivationEvent], tuple[bool, list, list]],
    cap: int = 1_000_000,
) -> CascadeResult:
    """Process events FIFO until quiescent.

    ``handle(event)`` returns ``(mitigated, victim_events, other_events)``.
    Victim refreshes are one generation deeper than their cause; other
    follow-ups (table traffic) stay in the same generation. ``depth`` is the
    deepest generation that issued a mitigation, counting the first as 1.
    """
    work = deque((ev, 0) for ev in queue)
    mitigations = depth = processed = 0
    while work:
        if processed >= cap:
            raise CascadeLimitExceeded(f"cascade did not settle within {cap} events")
        ev, gen = work.popleft()
        processed += 1
        mitigated, victims, others = handle(ev)
        work.extend((o, gen) for o in others)
        if mitigated:
            mitigations += 1
            depth = max(depth, gen + 1)
            work.extend((v, gen + 1) for v in victims)
    return CascadeResult(mitigations, depth, processed)
