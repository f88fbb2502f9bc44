"""Randomized differential campaigns over every tracker variant.

Each case draws a desk-scale geometry, threshold, blast radius, pattern and
seed, runs the same input through all variants and checks the results with
the oracle. Mitigation logs must equal the ideal tracker's log for the same
input. Two things make a variant's activation stream differ from the
ideal's: table traffic (memory-mapped variants) and, for memory accesses,
reserved ways changing which accesses miss. Such runs are compared with the
ideal tracker replaying the variant's own processed stream instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Geometry, GeometryConfig, TrackerConfig, Variant
from .mitigation import cascade_gain
from .oracle import check_refresh_window, check_mitigation_timing
from .sim import Simulation
from .trace import PATTERNS, MemoryAccess, PatternSpec, generate, generate_activations
from .tracker import IdealTracker

# (row_count, llc_sets): 32K-256K rows, 64-1024 sets, all with <= 512 rows per set
DESK_GEOMETRIES = (
    (32768, 64),
    (65536, 128),
    (65536, 512),
    (131072, 256),
    (262144, 512),
    (262144, 1024),
    (32768, 1024),
)
THRESHOLDS = (16, 64, 256)
START_VARIANTS = (Variant.START_S, Variant.START_D, Variant.START_M, Variant.START_LITE)
TRC = 45


@dataclass
class FuzzCase:
    index: int
    row_count: int
    llc_sets: int
    t_rh: int
    blast_radius: int
    pattern: str
    seed: int
    count: int
    window_ns: int
    pool: Optional[int]
    access: bool = False

    def geometry_config(self) -> GeometryConfig:
        return GeometryConfig(row_count=self.row_count, llc_sets=self.llc_sets, window_ns=self.window_ns)

    def tracker_config(self, variant: Variant) -> TrackerConfig:
        return TrackerConfig(variant=variant, t_rh=self.t_rh, blast_radius=self.blast_radius)


@dataclass
class CaseResult:
    case: FuzzCase
    events: int
    violations: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)
    replay_match: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def total_violations(self) -> int:
        return sum(len(v) for v in self.violations.values())

    def strict(self, v: Variant) -> bool:
        return not self.case.access and self.metadata.get(v, 0) == 0

    def log_mismatches(self) -> list[str]:
        """Variants whose mitigation log differs from the reference it must equal."""
        ref = self.logs[Variant.IDEAL]
        bad = []
        for v, log in self.logs.items():
            if self.strict(v):
                if log != ref:
                    bad.append(v.value)
            elif not self.replay_match[v]:
                bad.append(v.value + " (replay)")
        return bad


def settling_radii(t_rh: int) -> list[int]:
    """Blast radii whose cascades are guaranteed to settle for every variant."""
    return [r for r in range(1, 5) if cascade_gain(t_rh, r, True) < 1] or [1]


def make_case(index: int, rng: np.random.Generator, access_share: float = 0.1) -> FuzzCase:
    rows, sets = DESK_GEOMETRIES[int(rng.integers(len(DESK_GEOMETRIES)))]
    count = int(rng.integers(1500, 4000))
    span = count * TRC
    # 2-8 windows per trace so every case crosses resets at arbitrary phases
    window = int(span / rng.uniform(2.0, 8.0)) + 1
    pool = [None, 64, 512, 4096][int(rng.integers(4))]
    t_rh = int(THRESHOLDS[int(rng.integers(len(THRESHOLDS)))])
    radius = int(rng.choice(settling_radii(t_rh)))
    return FuzzCase(
        index=index,
        row_count=rows,
        llc_sets=sets,
        t_rh=t_rh,
        blast_radius=radius,
        pattern=PATTERNS[index % len(PATTERNS)],
        seed=int(rng.integers(2**31)),
        count=count,
        window_ns=window,
        pool=pool,
        access=bool(rng.random() < access_share),
    )


def case_events(case: FuzzCase) -> list:
    # the pool is drawn below the table region of the memory-mapped variants
    geo = Geometry(case.geometry_config(), case.tracker_config(Variant.START_M))
    limit = geo.layout.mtt_row_base
    pool = None
    if case.pool is not None and case.pattern != "mtt_thrash":
        prng = np.random.default_rng(case.seed ^ 0xC0FFEE)
        start = int(prng.integers(0, limit - case.pool))
        pool = range(start, start + case.pool)
    extra = {}
    if case.pattern == "mtt_thrash":
        # confine the sweep to a few sets so a short trace makes several passes
        per_set = 2 * 8 * geo.layout.entries_per_line
        extra["sets"] = max(1, case.count // (3 * per_set))
    spec = PatternSpec(
        pattern=case.pattern,
        row_pool=pool,
        extra=extra,
        count=case.count,
        duration_ns=case.count * (TRC + 1) + case.window_ns,
        seed=case.seed,
    )
    gen = generate if case.access else generate_activations
    return list(gen(spec, geo))


def ideal_replay(events: Sequence, geometry: Geometry) -> list[tuple[int, int]]:
    """Mitigations the ideal tracker issues over an already-processed stream."""
    ideal = IdealTracker(geometry)
    window = geometry.config.window_ns
    current = 0
    out = []
    for e in events:
        w = e.time_ns // window
        if w != current:
            ideal.window_reset()
            current = w
        if ideal.on_activation(e).mitigations:
            out.append((e.time_ns, e.row_id))
    return out


def run_case(case: FuzzCase, variants: Sequence[Variant] = START_VARIANTS + (Variant.IDEAL,)) -> CaseResult:
    events = case_events(case)
    gcfg = case.geometry_config()
    res = CaseResult(case, len(events))
    for v in variants:
        geo = Geometry(gcfg, case.tracker_config(v))
        sim = Simulation(geo, frontend=case.access, oracle="off")
        sim.run(events)
        viol = check_mitigation_timing(sim.log, sim.mitigations, case.t_rh, case.window_ns)
        viol += check_refresh_window(sim.log, sim.mitigations, case.t_rh, case.window_ns)
        res.violations[v] = viol
        log = [(m.time_ns, m.aggressor_row) for m in sim.mitigations]
        res.logs[v] = log
        res.metadata[v] = sim.by_cause.get("metadata", 0)
        if not res.strict(v):
            res.replay_match[v] = ideal_replay(sim.log, geo) == log
    return res


def campaign(n: int, seed: int = 0, access_share: float = 0.1) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    return [run_case(make_case(i, rng, access_share)) for i in range(n)]
