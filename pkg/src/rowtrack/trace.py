"""Event types, trace files and synthetic workload generators.

Two kinds of stream feed the simulator:

* ``MemoryAccess`` streams go through the LLC and row-buffer model;
* ``ActivationEvent`` streams drive a tracker directly (no cache effects).

Trace files hold one event per line, ``<time_ns> <hex addr> <R|W>`` for
accesses or ``<time_ns> <row_id> <D|V|M>`` for activations. Files ending in
``.gz`` are transparently compressed.
"""

from __future__ import annotations

import gzip
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import EmptyPool, InfeasibleRate, MalformedTrace, NonMonotonicTime
from .geometry import Geometry

# DDR4-class 8Gb refresh: tRFC 350ns every tREFI 7.8us. Removing that share of
# a 64ms window at tRC 45ns leaves ~1.36M activations per bank.
DEFAULT_TRFC_NS = 350.0
DEFAULT_TREFI_NS = 7800.0


class Cause(str, Enum):
    DEMAND = "demand"
    VICTIM_REFRESH = "victim_refresh"
    METADATA = "metadata"

    @property
    def code(self) -> str:
        return _CAUSE_CODE[self]


_CAUSE_CODE = {Cause.DEMAND: "D", Cause.VICTIM_REFRESH: "V", Cause.METADATA: "M"}
_CODE_CAUSE = {v: k for k, v in _CAUSE_CODE.items()}


class MemoryAccess(NamedTuple):
    time_ns: int
    addr: int
    kind: str = "R"


class ActivationEvent(NamedTuple):
    time_ns: int
    row_id: int
    cause: Cause = Cause.DEMAND


PATTERNS = (
    "uniform",
    "zipf",
    "stream",
    "single_sided",
    "double_sided",
    "many_sided",
    "decoy_rotation",
    "mtt_thrash",
)


@dataclass
class PatternSpec:
    pattern: str = "uniform"
    row_pool: Optional[Sequence[int]] = None
    duration_ns: Optional[int] = None
    count: Optional[int] = None
    zipf_s: float = 1.0
    aggressor_rows: Optional[Sequence[int]] = None
    decoy_count: int = 16
    burst: int = 8
    sides: int = 8
    write_fraction: float = 0.0
    refresh_discount: bool = False
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pattern = self.pattern.replace("-", "_")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; choose from {PATTERNS}")


def act_max(geometry: Geometry, trfc_ns: float = DEFAULT_TRFC_NS, trefi_ns: float = DEFAULT_TREFI_NS) -> int:
    """Activations one bank can take in a window once refresh time is removed."""
    cfg = geometry.config
    return int(cfg.window_ns * (1.0 - trfc_ns / trefi_ns) // cfg.trc_ns)


def thrash_pool_size(geometry: Geometry, factor: float = 2.0) -> int:
    """Distinct rows needed to exceed the 8-way tagged capacity ``factor`` times."""
    lay = geometry.layout
    return int(factor * geometry.config.llc_sets * 8 * lay.entries_per_line)


def data_rows(geometry: Geometry) -> int:
    """Rows usable for workload data (the memory-mapped table sits above them)."""
    lay = geometry.layout
    return lay.mtt_row_base if lay.mtt_row_base is not None else geometry.row_count


# -- row-sequence generators -----------------------------------------------------


def _neighbors_ok(geometry: Geometry, a: int, b: int) -> bool:
    return 0 <= b < geometry.row_count and geometry.bank_of_row(a) == geometry.bank_of_row(b)


def _pool(spec: PatternSpec, geometry: Geometry) -> np.ndarray:
    if spec.row_pool is None:
        pool = np.arange(data_rows(geometry), dtype=np.int64)
    else:
        pool = np.asarray(list(spec.row_pool), dtype=np.int64)
    if pool.size == 0:
        raise EmptyPool(f"pattern {spec.pattern} got an empty row pool")
    if pool.min() < 0 or pool.max() >= geometry.row_count:
        raise ValueError("row pool contains rows outside the geometry")
    return pool


def _batched(draw, batch=4096) -> Iterator[int]:
    while True:
        yield from draw(batch).tolist()


def _row_sequence(spec: PatternSpec, geometry: Geometry, rng: np.random.Generator) -> Iterator[int]:
    p = spec.pattern
    if p in ("single_sided", "double_sided", "many_sided", "decoy_rotation"):
        aggressors = _aggressors(spec, geometry)
    elif p == "mtt_thrash" and spec.row_pool is None and geometry.layout.entries_per_line:
        pool = thrash_pool(geometry, spec.extra.get("factor", 2.0), spec.seed, spec.extra.get("sets"))
    else:
        pool = _pool(spec, geometry)

    if p == "uniform":
        return _batched(lambda n: rng.choice(pool, size=n))
    if p == "zipf":
        weights = 1.0 / np.power(np.arange(1, pool.size + 1, dtype=float), spec.zipf_s)
        weights /= weights.sum()
        return _batched(lambda n: rng.choice(pool, size=n, p=weights))
    if p == "stream":
        return _cycle(pool.tolist())
    if p in ("single_sided", "double_sided", "many_sided"):
        return _cycle(aggressors)
    if p == "decoy_rotation":
        return _decoy_rotation(spec, geometry, aggressors, rng)
    if p == "mtt_thrash":
        return _thrash(pool, geometry, rng)
    raise AssertionError(p)


def _cycle(items: list) -> Iterator[int]:
    while True:
        yield from items


def _aggressors(spec: PatternSpec, geometry: Geometry) -> list[int]:
    if spec.aggressor_rows:
        rows = [int(r) for r in spec.aggressor_rows]
        for r in rows:
            if not 0 <= r < geometry.row_count:
                raise ValueError(f"aggressor row {r} outside the geometry")
        return rows
    pool = _pool(spec, geometry)
    mid = len(pool) // 2
    v = int(pool[mid])
    if spec.pattern == "single_sided":
        return [v]
    if spec.pattern == "double_sided":
        # nearest pool row to the middle with both neighbours in its bank
        for k in sorted(range(len(pool)), key=lambda i: (abs(i - mid), i)):
            c = int(pool[k])
            if _neighbors_ok(geometry, c, c - 1) and _neighbors_ok(geometry, c, c + 1):
                return [c - 1, c + 1]
        raise EmptyPool("no pool row has in-bank neighbours on both sides")
    # many-sided / decoy: aggressors every other row around v, inside v's bank
    rows = [v + 2 * k for k in range(spec.sides) if _neighbors_ok(geometry, v, v + 2 * k)]
    return rows or [v]


def _decoy_rotation(spec, geometry, aggressors, rng) -> Iterator[int]:
    pool = _pool(spec, geometry)
    hot = set(aggressors)
    while True:
        for _ in range(spec.burst):
            yield from aggressors
        decoys = rng.choice(pool, size=spec.decoy_count).tolist()
        yield from (d for d in decoys if d not in hot)


def thrash_halves(pool: np.ndarray, geometry: Geometry, rng) -> tuple[list[int], list[int]]:
    """Split ``pool`` into two halves balanced within every (set, hashed way) bucket.

    The bucket is the way a row hashes to in an 8-way tagged set (top three
    tag bits), so each half fills exactly half of every bucket it touches.
    """
    tag_bits = geometry.layout.tag_bits
    shift = max(tag_bits - 3, 0)
    rows = rng.permutation(pool)
    sets = rows >> tag_bits
    buckets = (rows & ((1 << tag_bits) - 1)) >> shift
    key = sets * 8 + buckets
    order = np.argsort(key, kind="stable")
    rows, key = rows[order], key[order]
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    rank = np.arange(rows.size) - np.repeat(starts, np.diff(np.r_[starts, rows.size]))
    first = rows[rank % 2 == 0]
    second = rows[rank % 2 == 1]
    return rng.permutation(first).tolist(), rng.permutation(second).tolist()


def thrash_pool(geometry: Geometry, factor: float = 2.0, seed: int = 0, sets: Optional[int] = None) -> np.ndarray:
    """Rows spread evenly over every (set, hashed way) bucket, ``factor`` times
    the 8-way tagged capacity in total (capped by the rows each bucket has).

    ``sets`` confines the pool to that many sets, spread over the index range.
    """
    lay = geometry.layout
    per_bucket = int(factor * lay.entries_per_line)
    rng = np.random.default_rng(seed)
    limit = data_rows(geometry)
    bucket_rows = max(lay.rows_per_set // 8, 1)
    n_sets = geometry.config.llc_sets
    chosen = range(n_sets) if sets is None else np.linspace(0, n_sets - 1, min(sets, n_sets)).astype(int).tolist()
    out = []
    for s in chosen:
        base = geometry.rows_of_set(s)
        for b in range(8):
            cand = base[b * bucket_rows : (b + 1) * bucket_rows]
            cand = cand[cand < limit]
            if cand.size:
                out.append(rng.choice(cand, size=min(per_bucket, cand.size), replace=False))
    return np.concatenate(out)


def _thrash(pool: np.ndarray, geometry: Geometry, rng) -> Iterator[int]:
    # Each pass visits the half that was evicted last first. With
    # smallest-counter replacement the untouched residents are exactly the
    # rows of the other half, so they are gone before their turn comes.
    first, second = thrash_halves(pool, geometry, rng)
    while True:
        yield from first
        yield from second
        yield from second
        yield from first


# -- pacing ------------------------------------------------------------------------


def _paced(spec: PatternSpec, geometry: Geometry, rows: Iterator[int]) -> Iterator[tuple[int, int]]:
    """Attach timestamps so each bank sees at most one activation per tRC."""
    cfg = geometry.config
    trc = int(math.ceil(cfg.trc_ns))
    duration = spec.duration_ns if spec.duration_ns is not None else cfg.window_ns
    window = cfg.window_ns
    cap = act_max(geometry) if spec.refresh_discount else None
    ready: dict[int, int] = {}
    used: dict[int, tuple[int, int]] = {}
    now = 0
    emitted = 0
    for row in rows:
        if spec.count is not None and emitted >= spec.count:
            return
        bank = geometry.bank_of_row(row)
        t = max(now, ready.get(bank, 0))
        if cap is not None:
            w, n = used.get(bank, (t // window, 0))
            if t // window != w:
                w, n = t // window, 0
            if n >= cap:
                w += 1
                t = max(t, w * window)
                n = 0
            used[bank] = (w, n + 1)
        if t + trc > duration:
            if spec.count is not None:
                raise InfeasibleRate(
                    f"{spec.count} activations do not fit in {duration}ns at tRC={cfg.trc_ns}ns"
                    + (" with refresh discount" if cap else "")
                )
            return
        ready[bank] = t + trc
        now = t
        emitted += 1
        yield t, row


def generate_activations(spec: PatternSpec, geometry: Geometry) -> Iterator[ActivationEvent]:
    """Row-level demand activation stream for tracker-only runs."""
    rng = np.random.default_rng(spec.seed)
    for t, row in _paced(spec, geometry, _row_sequence(spec, geometry, rng)):
        yield ActivationEvent(t, row, Cause.DEMAND)


def generate(spec: PatternSpec, geometry: Geometry) -> Iterator[MemoryAccess]:
    """Memory access stream; successive touches of a row walk its columns."""
    rng = np.random.default_rng(spec.seed)
    wrng = np.random.default_rng(spec.seed + 0x5EED)
    cols: dict[int, int] = {}
    for t, row in _paced(spec, geometry, _row_sequence(spec, geometry, rng)):
        c = cols.get(row, 0)
        cols[row] = c + 1
        kind = "W" if spec.write_fraction and wrng.random() < spec.write_fraction else "R"
        yield MemoryAccess(t, geometry.row_address(row, c), kind)


# -- files -------------------------------------------------------------------------

TraceEvent = Union[MemoryAccess, ActivationEvent]


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, mode + "b"), encoding="ascii", newline="\n")
    return open(path, mode, encoding="ascii", newline="\n")


def format_event(ev: TraceEvent) -> str:
    if isinstance(ev, ActivationEvent):
        return f"{ev.time_ns} {ev.row_id} {Cause(ev.cause).code}"
    return f"{ev.time_ns} {ev.addr:#x} {ev.kind}"


def parse_line(line: str, lineno: int = 0) -> TraceEvent:
    parts = line.split()
    if len(parts) != 3:
        raise MalformedTrace(lineno, line, "expected 3 fields")
    t_s, what, code = parts
    try:
        t = int(t_s)
    except ValueError:
        raise MalformedTrace(lineno, line, "bad timestamp") from None
    if t < 0:
        raise MalformedTrace(lineno, line, "negative timestamp")
    try:
        if code in ("R", "W"):
            if not what.lower().startswith("0x"):
                raise ValueError
            return MemoryAccess(t, int(what, 16), code)
        if code in _CODE_CAUSE:
            return ActivationEvent(t, int(what, 10), _CODE_CAUSE[code])
    except ValueError:
        raise MalformedTrace(lineno, line, "bad address/row field") from None
    raise MalformedTrace(lineno, line, f"unknown kind {code!r}")


def read_trace(path) -> Iterator[TraceEvent]:
    """Parse a trace file lazily. Blank lines and ``#`` comments are skipped."""
    last = -1
    kind = None
    with _open(path, "r") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            ev = parse_line(line, lineno)
            if kind is None:
                kind = type(ev)
            elif type(ev) is not kind:
                raise MalformedTrace(lineno, line, "mixes access and activation records")
            if ev.time_ns < last:
                raise NonMonotonicTime(f"line {lineno}: time {ev.time_ns} < previous {last}")
            last = ev.time_ns
            yield ev


def write_trace(events: Iterable[TraceEvent], path) -> int:
    n = 0
    last = -1
    with _open(path, "w") as fh:
        for ev in events:
            if ev.time_ns < last:
                raise NonMonotonicTime(f"event {n}: time {ev.time_ns} < previous {last}")
            last = ev.time_ns
            fh.write(format_event(ev))
            fh.write("\n")
            n += 1
    return n
