"""Run statistics, capacity accounting and report serialization.

JSON report schema (keys in this order):

=========================  ==================================================
config                     geometry and tracker settings of the run
variant, t_rh, blast_radius
events                     activations processed, all causes
demand_acts / victim_refresh_acts / metadata_acts
mitigations, victim_refreshes
llc_hits, llc_misses       demand path (0 in tracker-only runs)
baseline_misses            reservation-free reference, when computed
forced_evictions, writebacks
mtt_reads, mtt_writes, mtt_resets
mean_capacity              time-weighted reserved fraction of the LLC
mean_capacity_events       same, sampled once per activation
peak_capacity              largest reserved fraction seen
peak_set_fraction          largest reserved fraction of any single set
window_end_capacity        reserved fraction just before each window reset
unique_rows_per_window     distinct rows activated in each window
sac_histograms             per window, number of sets in S0..S3
max_cascade_depth
violations
timestamp                  wall-clock time of emission (excluded from equality)
=========================  ==================================================

CSV output holds one row per run with the scalar columns of ``CSV_FIELDS``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional


@dataclass
class RunReport:
    config: dict = field(default_factory=dict)
    variant: str = ""
    t_rh: int = 0
    blast_radius: int = 1
    events: int = 0
    demand_acts: int = 0
    victim_refresh_acts: int = 0
    metadata_acts: int = 0
    mitigations: int = 0
    victim_refreshes: int = 0
    llc_hits: int = 0
    llc_misses: int = 0
    baseline_misses: Optional[int] = None
    forced_evictions: int = 0
    writebacks: int = 0
    mtt_reads: int = 0
    mtt_writes: int = 0
    mtt_resets: int = 0
    mean_capacity: float = 0.0
    mean_capacity_events: float = 0.0
    peak_capacity: float = 0.0
    peak_set_fraction: float = 0.0
    window_end_capacity: list = field(default_factory=list)
    unique_rows_per_window: list = field(default_factory=list)
    sac_histograms: list = field(default_factory=list)
    max_cascade_depth: int = 0
    violations: int = 0
    timestamp: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**d)

    @property
    def miss_increase_pct(self) -> Optional[float]:
        if self.baseline_misses is None:
            return None
        return pct_increase(self.baseline_misses, self.llc_misses)


CSV_FIELDS = (
    "variant",
    "t_rh",
    "blast_radius",
    "row_count",
    "llc_sets",
    "llc_ways",
    "events",
    "demand_acts",
    "victim_refresh_acts",
    "metadata_acts",
    "mitigations",
    "victim_refreshes",
    "llc_hits",
    "llc_misses",
    "baseline_misses",
    "forced_evictions",
    "writebacks",
    "mtt_reads",
    "mtt_writes",
    "mtt_resets",
    "mean_capacity",
    "mean_capacity_events",
    "peak_capacity",
    "peak_set_fraction",
    "max_cascade_depth",
    "violations",
)


def pct_increase(base: int, new: int) -> float:
    if base == 0:
        return 0.0 if new == 0 else float("inf")
    return 100.0 * (new - base) / base


class CapacityMeter:
    """Integrates the number of reserved LLC ways over time and over events."""

    def __init__(self, sets: int, ways: int):
        self.total = sets * ways
        self.ways = ways
        self.reserved = 0
        self.t0: Optional[int] = None
        self.t_last = 0
        self.area = 0.0
        self.samples = 0
        self.sample_sum = 0
        self.peak = 0
        self.peak_set = 0

    def start(self, time_ns: int, reserved: int) -> None:
        self.t0 = self.t_last = time_ns
        self.reserved = reserved
        self.peak = max(self.peak, reserved)

    def update(self, time_ns: int, reserved: int) -> None:
        if self.t0 is None:
            self.start(time_ns, reserved)
            return
        self.area += self.reserved * (time_ns - self.t_last)
        self.t_last = time_ns
        self.reserved = reserved
        self.peak = max(self.peak, reserved)

    def sample(self) -> None:
        self.samples += 1
        self.sample_sum += self.reserved

    def note_set(self, ways_in_set: int) -> None:
        self.peak_set = max(self.peak_set, ways_in_set)

    def fraction(self, reserved: Optional[int] = None) -> float:
        return (self.reserved if reserved is None else reserved) / self.total

    def mean(self, t_end: Optional[int] = None) -> float:
        if self.t0 is None:
            return 0.0
        t_end = self.t_last if t_end is None else t_end
        area = self.area + self.reserved * (t_end - self.t_last)
        span = t_end - self.t0
        if span <= 0:
            return self.fraction()
        return area / span / self.total

    def mean_events(self) -> float:
        return self.sample_sum / self.samples / self.total if self.samples else 0.0


def _csv_row(report: RunReport) -> dict:
    d = report.to_dict()
    cfg = report.config.get("geometry", {})
    row = {}
    for k in CSV_FIELDS:
        row[k] = cfg.get(k) if k in ("row_count", "llc_sets", "llc_ways") else d.get(k)
        if row[k] is None:
            row[k] = ""
    return row


def to_json(report: RunReport, stamp: bool = True) -> str:
    d = report.to_dict()
    d["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S") if stamp else ""
    return json.dumps(d, indent=2) + "\n"


def to_csv(reports: Iterable[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(_csv_row(r))
    return buf.getvalue()


def emit(report, fmt: str = "json", path=None) -> str:
    """Serialize one report (json) or a list of reports (csv); write to ``path`` if given."""
    if fmt == "json":
        text = to_json(report)
    elif fmt == "csv":
        text = to_csv(report if isinstance(report, (list, tuple)) else [report])
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def load_report(path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text()))


def mitigation_log_lines(records, variant: str) -> str:
    return "".join(json.dumps(r.log_line(variant)) + "\n" for r in records)


def write_mitigation_log(records, variant: str, path) -> None:
    Path(path).write_text(mitigation_log_lines(records, variant))
