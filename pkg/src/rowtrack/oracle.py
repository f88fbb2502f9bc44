"""Brute-force ground truth for activation trackers.

The checks here look only at the processed activation stream and the
mitigation log; no tracker internals are consulted except by
:func:`check_exactness`, which compares a tracker's snapshot to the truth.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .errors import UnorderedInput
from .mitigation import MitigationRecord
from .trace import ActivationEvent


@dataclass(frozen=True)
class Violation:
    kind: str
    row_id: int
    event_index: int
    time_ns: int
    count: int
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def violations_json(violations: Iterable[Violation]) -> str:
    return json.dumps([v.to_dict() for v in violations], indent=2)


class TruthState:
    """Exact per-row counts since max(window start, last mitigation)."""

    def __init__(self, t_rh: int, window_ns: Optional[int] = None):
        self.threshold = t_rh // 2
        self.window_ns = window_ns
        self.counts: dict[int, int] = {}
        self.window = 0
        self.unique_rows: set[int] = set()
        self.unique_per_window: list[int] = []

    def _roll(self, time_ns: int) -> None:
        if self.window_ns is None:
            return
        w = time_ns // self.window_ns
        while w > self.window:
            self.unique_per_window.append(len(self.unique_rows))
            self.unique_rows = set()
            self.counts.clear()
            self.window += 1

    def step(self, index: int, e: ActivationEvent, mitigated_row: Optional[int], strict: bool = True) -> list[Violation]:
        self._roll(e.time_ns)
        row = e.row_id
        self.unique_rows.add(row)
        c = self.counts.get(row, 0) + 1
        out = []
        if mitigated_row is not None and mitigated_row != row:
            out.append(Violation("wrong_row", mitigated_row, index, e.time_ns, c, f"event activated row {row}"))
        if c >= self.threshold:
            if mitigated_row != row:
                out.append(Violation("missed", row, index, e.time_ns, c, "threshold reached without mitigation"))
            c = 0
        elif mitigated_row == row:
            if strict:
                out.append(Violation("early", row, index, e.time_ns, c, "mitigation below threshold"))
            c = 0
        self.counts[row] = c
        return out

    def count(self, row_id: int) -> int:
        return self.counts.get(row_id, 0)

    def snapshot(self) -> dict[int, int]:
        return {r: c for r, c in self.counts.items() if c}

    def finish(self) -> list[int]:
        return self.unique_per_window + [len(self.unique_rows)]


def _mitigation_map(events: Sequence[ActivationEvent], mitigations: Sequence[MitigationRecord]) -> dict[int, int]:
    by_index: dict[int, int] = {}
    last_i = -1
    last_t = None
    for m in mitigations:
        if m.event_index < 0 or m.event_index >= len(events):
            raise UnorderedInput(f"mitigation of row {m.aggressor_row} references event {m.event_index}")
        if m.event_index <= last_i or (last_t is not None and m.time_ns < last_t):
            raise UnorderedInput("mitigations are not in event order")
        if events[m.event_index].time_ns != m.time_ns:
            raise UnorderedInput(f"mitigation at event {m.event_index} has a mismatched timestamp")
        last_i, last_t = m.event_index, m.time_ns
        by_index[m.event_index] = m.aggressor_row
    return by_index


def _check_ordered(events: Sequence[ActivationEvent]) -> None:
    last = None
    for i, e in enumerate(events):
        if last is not None and e.time_ns < last:
            raise UnorderedInput(f"event {i} at {e.time_ns}ns precedes {last}ns")
        last = e.time_ns


def check_mitigation_timing(
    events: Sequence[ActivationEvent],
    mitigations: Sequence[MitigationRecord],
    t_rh: int,
    window_ns: Optional[int] = None,
    strict: bool = True,
) -> list[Violation]:
    """Every row must be mitigated on the activation that brings its count,
    since window start or its last mitigation, to ``t_rh // 2``. In strict
    mode a mitigation at any other count is also a violation.
    """
    _check_ordered(events)
    by_index = _mitigation_map(events, mitigations)
    truth = TruthState(t_rh, window_ns)
    out: list[Violation] = []
    for i, e in enumerate(events):
        out.extend(truth.step(i, e, by_index.get(i), strict))
    return out


def check_refresh_window(
    events: Sequence[ActivationEvent],
    mitigations: Sequence[MitigationRecord],
    t_rh: int,
    refresh_ns: int,
) -> list[Violation]:
    """No row may take ``t_rh`` activations inside any ``refresh_ns`` interval
    (of any alignment) without being mitigated in between.

    Activations are split into mitigation-free spans per row; the activation
    that triggers a mitigation closes its span.
    """
    _check_ordered(events)
    by_index = _mitigation_map(events, mitigations)
    spans: dict[int, list[int]] = defaultdict(list)
    out: list[Violation] = []

    def scan(row: int, times: list[int], last_index: int) -> None:
        j = 0
        for i in range(len(times)):
            while times[i] - times[j] >= refresh_ns:
                j += 1
            n = i - j + 1
            if n >= t_rh:
                out.append(
                    Violation(
                        "refresh_window",
                        row,
                        last_index,
                        times[i],
                        n,
                        f"{n} unmitigated activations within {refresh_ns}ns",
                    )
                )
                return

    for i, e in enumerate(events):
        times = spans[e.row_id]
        times.append(e.time_ns)
        if by_index.get(i) == e.row_id:
            scan(e.row_id, times, i)
            spans[e.row_id] = []
    for row, times in spans.items():
        if times:
            scan(row, times, len(events) - 1)
    return out


def check_exactness(tracker_snapshot: Mapping[int, int], truth: Mapping[int, int] | TruthState) -> list[tuple[int, int, int]]:
    """Rows whose tracked count differs from the truth, as (row, tracked, true)."""
    if isinstance(truth, TruthState):
        truth = truth.snapshot()
    rows = set(k for k, v in tracker_snapshot.items() if v) | set(k for k, v in truth.items() if v)
    return sorted(
        (r, tracker_snapshot.get(r, 0), truth.get(r, 0))
        for r in rows
        if tracker_snapshot.get(r, 0) != truth.get(r, 0)
    )
