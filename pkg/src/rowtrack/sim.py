"""End-to-end pipeline: trace -> LLC/row buffer -> tracker -> mitigation -> oracle -> metrics."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict
from typing import Iterable, Optional, Sequence, Union

from .errors import CascadeLimitExceeded, ConfigError
from .frontend import MemoryFrontend
from .geometry import Geometry, GeometryConfig, TrackerConfig, Variant
from .metrics import CapacityMeter, RunReport, pct_increase
from .mitigation import Mitigator, cascade_gain, drain_cascade
from .oracle import TruthState, Violation, check_exactness, check_refresh_window, check_mitigation_timing
from .sac import SacState
from .trace import ActivationEvent, Cause, MemoryAccess
from .tracker import make_tracker

log = logging.getLogger("rowtrack")

ORACLE_MODES = ("inline", "post", "off")


class Simulation:
    """One isolated simulation instance.

    Feed it ``MemoryAccess`` items (full path, needs ``frontend=True``) or
    ``ActivationEvent`` items (tracker-only); mixing is allowed. Cascades of
    victim refreshes and table traffic are drained before the next input.
    """

    def __init__(
        self,
        geometry: Geometry,
        frontend: bool = True,
        oracle: str = "post",
        policy: str = "srrip",
        count_writeback_acts: bool = False,
        record: bool = True,
        record_hits: bool = False,
        check_reservations: bool = False,
        cascade_cap: int = 1_000_000,
    ):
        if oracle not in ORACLE_MODES:
            raise ConfigError(f"oracle must be one of {ORACLE_MODES}")
        if geometry.tracker is None:
            raise ConfigError("simulation needs a tracker configuration")
        if oracle == "post" and not record:
            raise ConfigError("post-pass oracle needs the recorded activation log")
        self.geometry = geometry
        cfg = geometry.config
        self.tcfg = geometry.tracker
        self.tracker = make_tracker(geometry)
        self.mitigator = Mitigator(geometry, self.tcfg.blast_radius)
        self.frontend = (
            MemoryFrontend(geometry, policy, count_writeback_acts, check_reservations) if frontend else None
        )
        self.oracle = oracle
        self.record = record
        self.log: list[ActivationEvent] = []
        self.hit_log: Optional[list[bool]] = [] if record_hits else None
        self.reservation_log: list[tuple] = []
        self.accesses = 0
        self.events = 0
        self.by_cause: Counter = Counter()
        self.violations: list[Violation] = []
        self.truth = TruthState(self.tcfg.t_rh, cfg.window_ns) if oracle == "inline" else None
        self.window_ns = cfg.window_ns
        self.next_boundary = cfg.window_ns
        self.meter = CapacityMeter(cfg.llc_sets, cfg.llc_ways)
        self.window_end_capacity: list[float] = []
        self.sac_histograms: list[list[int]] = []
        self.unique_rows: set[int] = set()
        self.unique_per_window: list[int] = []
        self.max_depth = 0
        self.cascade_cap = cascade_cap
        self.last_time = 0
        self._static = self.tcfg.variant is Variant.START_S
        if self._static:
            self.meter.note_set(8)
            if self.frontend is not None:
                for s in range(cfg.llc_sets):
                    for w in SacState.S3.reserved_way_indices:
                        self.frontend.reserve_way(s, w)
        self.meter.start(0, self.tracker.reserved_ways)
        self.gain = cascade_gain(self.tcfg.t_rh, self.tcfg.blast_radius, self.tcfg.backing == "mtt")
        if self.gain >= 1:
            log.warning("cascade gain %.2f >= 1: victim-refresh cascades may not settle", self.gain)

    # -- time ------------------------------------------------------------------

    def _advance(self, time_ns: int) -> None:
        if time_ns < self.last_time:
            raise ValueError(f"input time {time_ns} precedes {self.last_time}")
        self.last_time = time_ns
        while time_ns >= self.next_boundary:
            self._close_window(self.next_boundary)
            self.next_boundary += self.window_ns

    def _close_window(self, boundary: int) -> None:
        self.meter.update(boundary, self.tracker.reserved_ways)
        self.window_end_capacity.append(self.meter.fraction())
        self.sac_histograms.append(self.tracker.sac_histogram())
        self.unique_per_window.append(len(self.unique_rows))
        self.unique_rows = set()
        if self.truth is not None:
            self._inline_snapshot_check()
        self.tracker.window_reset(boundary)
        if self.frontend is not None and not self._static:
            self.frontend.release_all_reservations()
            self.reservation_log.append((self.accesses, "release"))
        self.meter.update(boundary, self.tracker.reserved_ways)
        log.debug("window closed at %dns", boundary)

    # -- inputs ------------------------------------------------------------------

    def feed(self, item: Union[MemoryAccess, ActivationEvent]) -> None:
        if isinstance(item, ActivationEvent):
            self.feed_activation(item)
        else:
            self.feed_access(item)

    def feed_access(self, a: MemoryAccess) -> None:
        if self.frontend is None:
            raise ConfigError("memory accesses need the LLC frontend")
        self._advance(a.time_ns)
        out = self.frontend.access(a)
        self.accesses += 1
        if self.hit_log is not None:
            self.hit_log.append(out.hit)
        if out.writeback is not None:
            self._process(out.writeback)
        if out.activation is not None:
            self._process(out.activation)

    def warm(self, accesses: Iterable[MemoryAccess]) -> None:
        """Pre-load the LLC with tracking off; nothing is counted or timed."""
        if self.frontend is None:
            raise ConfigError("warming needs the LLC frontend")
        for a in accesses:
            self.frontend.access(a)
        self.frontend.stats = type(self.frontend.stats)()
        self.frontend.open_rows = [None] * len(self.frontend.open_rows)

    def feed_activation(self, e: ActivationEvent) -> None:
        self._advance(e.time_ns)
        self._process(e)

    def run(self, items: Iterable) -> RunReport:
        for item in items:
            self.feed(item)
        return self.finish()

    # -- the cascade -------------------------------------------------------------

    def _handle(self, e: ActivationEvent):
        idx = self.events
        self.events += 1
        if self.record:
            self.log.append(e)
        self.by_cause[Cause(e.cause)] += 1
        self.unique_rows.add(e.row_id)
        out = self.tracker.on_activation(e)
        if out.escalations:
            for esc in out.escalations:
                self.meter.note_set(esc.state.ways)
                if self.frontend is not None:
                    for w in esc.ways_added:
                        self.frontend.reserve_way(esc.set_index, w)
                        self.reservation_log.append((self.accesses, "reserve", esc.set_index, w))
            self.meter.update(e.time_ns, self.tracker.reserved_ways)
        self.meter.sample()
        mitigated = bool(out.mitigations)
        victims = self.mitigator.execute(e.row_id, e.time_ns, idx) if mitigated else []
        if self.truth is not None:
            self.violations.extend(self.truth.step(idx, e, e.row_id if mitigated else None))
            tracked = self.tracker.count_of(e.row_id)
            true = self.truth.count(e.row_id)
            if tracked != true:
                self.violations.append(
                    Violation("exactness", e.row_id, idx, e.time_ns, tracked, f"tracker {tracked} != truth {true}")
                )
        return mitigated, victims, list(out.metadata)

    def _process(self, e: ActivationEvent) -> None:
        try:
            res = drain_cascade([e], self._handle, self.cascade_cap)
        except CascadeLimitExceeded as exc:
            raise CascadeLimitExceeded(
                f"{exc} (t_rh={self.tcfg.t_rh}, blast_radius={self.tcfg.blast_radius}, "
                f"cascade gain {self.gain:.2f}; gain >= 1 can feed itself indefinitely)"
            ) from None
        self.max_depth = max(self.max_depth, res.depth)

    def _inline_snapshot_check(self) -> None:
        for row, tracked, true in check_exactness(self.tracker.snapshot(), self.truth):
            self.violations.append(
                Violation("exactness", row, self.events - 1, self.last_time, tracked, f"snapshot: truth {true}")
            )

    # -- results -------------------------------------------------------------------

    @property
    def mitigations(self):
        return self.mitigator.records

    def capacity_fraction(self) -> float:
        return self.tracker.reserved_ways / self.meter.total

    def finish(self) -> RunReport:
        if self.truth is not None:
            self._inline_snapshot_check()
        if self.oracle in ("inline", "post") and self.record:
            if self.oracle == "post":
                self.violations.extend(
                    check_mitigation_timing(self.log, self.mitigations, self.tcfg.t_rh, self.window_ns)
                )
            self.violations.extend(
                check_refresh_window(self.log, self.mitigations, self.tcfg.t_rh, self.window_ns)
            )
        if self.violations:
            log.warning("%d oracle violations, first: %s", len(self.violations), self.violations[0])
        return self.report()

    def report(self) -> RunReport:
        fe = self.frontend.stats if self.frontend is not None else None
        mtt = getattr(self.tracker, "mtt", None)
        return RunReport(
            config={"geometry": asdict(self.geometry.config), "tracker": _tracker_dict(self.tcfg)},
            variant=self.tcfg.variant.value,
            t_rh=self.tcfg.t_rh,
            blast_radius=self.tcfg.blast_radius,
            events=self.events,
            demand_acts=self.by_cause[Cause.DEMAND],
            victim_refresh_acts=self.by_cause[Cause.VICTIM_REFRESH],
            metadata_acts=self.by_cause[Cause.METADATA],
            mitigations=len(self.mitigator.records),
            victim_refreshes=self.mitigator.victim_refreshes,
            llc_hits=fe.hits if fe else 0,
            llc_misses=fe.misses if fe else 0,
            forced_evictions=fe.forced_evictions if fe else 0,
            writebacks=fe.writebacks if fe else 0,
            mtt_reads=mtt.stats.reads if mtt else 0,
            mtt_writes=mtt.stats.writes if mtt else 0,
            mtt_resets=mtt.stats.resets if mtt else 0,
            mean_capacity=self.meter.mean(max(self.last_time, self.meter.t_last)),
            mean_capacity_events=self.meter.mean_events(),
            peak_capacity=self.meter.peak / self.meter.total,
            peak_set_fraction=self.meter.peak_set / self.geometry.config.llc_ways,
            window_end_capacity=self.window_end_capacity + [self.capacity_fraction()],
            unique_rows_per_window=self.unique_per_window + [len(self.unique_rows)],
            sac_histograms=self.sac_histograms + [self.tracker.sac_histogram()],
            max_cascade_depth=self.max_depth,
            violations=len(self.violations),
        )


def _tracker_dict(t: TrackerConfig) -> dict:
    return {
        "variant": t.variant.value,
        "t_rh": t.t_rh,
        "counter_bits": t.resolved_counter_bits,
        "blast_radius": t.blast_radius,
        "max_state": t.resolved_max_state,
        "free_on_mitigate": t.free_on_mitigate,
        "mtt_reset_mode": t.mtt_reset_mode,
    }


def simulate(
    config: GeometryConfig,
    tracker: TrackerConfig,
    items: Iterable,
    frontend: Optional[bool] = None,
    oracle: str = "post",
    **kwargs,
) -> Simulation:
    """Build a simulation, run ``items`` through it and return the finished instance.

    ``frontend`` defaults to on when the first item is a memory access.
    """
    items = list(items)
    if frontend is None:
        frontend = bool(items) and isinstance(items[0], MemoryAccess)
    sim = Simulation(Geometry(config, tracker), frontend=frontend, oracle=oracle, **kwargs)
    sim.run(items)
    return sim


def miss_delta(
    accesses: Sequence[MemoryAccess],
    config: GeometryConfig,
    tracker: TrackerConfig,
    policy: str = "srrip",
    warmup: Sequence[MemoryAccess] = (),
) -> tuple[int, int, float]:
    """LLC misses without any reservations vs. with ``tracker``, and the % increase."""
    geo = Geometry(config, tracker)
    base = MemoryFrontend(geo, policy)
    for a in warmup:
        base.access(a)
    base.stats.misses = 0
    for a in accesses:
        base.access(a)
    sim = Simulation(geo, frontend=True, oracle="off", policy=policy, record=False)
    sim.warm(warmup)
    sim.run(accesses)
    tracked = sim.frontend.stats.misses
    return base.stats.misses, tracked, pct_increase(base.stats.misses, tracked)


def replay_reservations(
    geometry: Geometry, accesses: Sequence[MemoryAccess], schedule: Sequence[tuple], policy: str = "srrip"
) -> list[bool]:
    """Hit/miss sequence of ``accesses`` with reservations applied from ``schedule``
    alone (no tracker). Schedule entries are ``(access_count, "reserve", set, way)``
    or ``(access_count, "release")``, applied once ``access_count`` accesses ran.
    """
    fe = MemoryFrontend(geometry, policy)
    if geometry.tracker is not None and geometry.tracker.variant is Variant.START_S:
        for s in range(geometry.config.llc_sets):
            for w in SacState.S3.reserved_way_indices:
                fe.reserve_way(s, w)
    hits = []
    j = 0
    for i, a in enumerate(accesses):
        while j < len(schedule) and schedule[j][0] <= i:
            _apply(fe, schedule[j])
            j += 1
        hits.append(fe.access(a).hit)
    return hits


def _apply(fe: MemoryFrontend, op: tuple) -> None:
    if op[1] == "reserve":
        fe.reserve_way(op[2], op[3])
    else:
        fe.release_all_reservations()
