"""DRAM/LLC geometry, tracker configuration and address-mapping arithmetic.

Bit layout of a row id (MSB to LSB)::

    | set index (set_bits) | row tag (tag_bits) |
                           | way (3) | byte (tag_bits - 3) |   <- untagged view

Bit layout of a physical byte address (MSB to LSB)::

    | in-bank row | column | bank | line offset |

Banks interleave at line granularity. The global row id is bank-major,
``bank * rows_per_bank + in_bank_row``, so numerically adjacent row ids in the
same bank are physically adjacent rows.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    AddressOutOfRange,
    ConfigError,
    CounterTooNarrow,
    NonPowerOfTwo,
    RowOutOfRange,
    UntaggedModeInfeasible,
    WaysInsufficient,
)

UNTAGGED_WAYS = 8
UNTAGGED_WAY_BITS = 3

PAGE_POLICIES = ("open-row", "close-row")
SET_HASHES = ("identity", "xor")


def is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def log2i(n: int) -> int:
    return n.bit_length() - 1


class Variant(str, Enum):
    START_S = "start_s"
    START_D = "start_d"
    START_M = "start_m"
    START_LITE = "start_lite"
    IDEAL = "ideal"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower().replace("-", "_"))

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")


@dataclass(frozen=True)
class GeometryConfig:
    row_count: int = 32768
    row_size_bytes: int = 8192
    bank_count: int = 16
    line_bytes: int = 64
    llc_sets: int = 64
    llc_ways: int = 16
    trc_ns: float = 45.0
    window_ns: int = 64_000_000
    page_policy: str = "open-row"
    set_hash: str = "identity"

    @property
    def rows_per_bank(self) -> int:
        return self.row_count // self.bank_count

    @property
    def memory_bytes(self) -> int:
        return self.row_count * self.row_size_bytes

    @property
    def llc_bytes(self) -> int:
        return self.llc_sets * self.llc_ways * self.line_bytes

    def replace(self, **changes) -> "GeometryConfig":
        d = asdict(self)
        d.update(changes)
        return GeometryConfig(**d)


# Baseline system: 64GB memory of 8KB rows, 16MB 16-way LLC.
BASELINE = GeometryConfig(
    row_count=8 * 1024 * 1024,
    row_size_bytes=8192,
    bank_count=128,
    line_bytes=64,
    llc_sets=16384,
    llc_ways=16,
)

# 512GB memory variant used for the memory-mapped table.
BASELINE_512GB = BASELINE.replace(row_count=64 * 1024 * 1024, bank_count=1024)

DESK = GeometryConfig()


@dataclass(frozen=True)
class TrackerConfig:
    variant: Variant = Variant.START_D
    t_rh: int = 256
    counter_bits: Optional[int] = None
    blast_radius: int = 1
    max_state: Optional[int] = None
    free_on_mitigate: bool = False
    mtt_reset_mode: str = "bulk"

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))

    @property
    def effective_threshold(self) -> int:
        return self.t_rh // 2

    @property
    def resolved_counter_bits(self) -> int:
        if self.counter_bits is not None:
            return self.counter_bits
        # stored counts never exceed effective_threshold - 1
        return max(1, (self.effective_threshold - 1).bit_length())

    @property
    def resolved_max_state(self) -> int:
        if self.max_state is not None:
            return self.max_state
        return 1 if self.variant is Variant.START_LITE else 3

    @property
    def backing(self) -> str:
        return "mtt" if self.variant in (Variant.START_M, Variant.START_LITE) else "none"

    @property
    def untagged_terminal(self) -> bool:
        return self.variant in (Variant.START_S, Variant.START_D)

    def replace(self, **changes) -> "TrackerConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return TrackerConfig(**d)


@dataclass(frozen=True)
class DerivedLayout:
    row_bits: int
    set_bits: int
    tag_bits: int
    rows_per_set: int
    line_bytes: int
    counter_bits: Optional[int] = None
    valid_bits: int = 1
    tagged_entry_bits: Optional[int] = None
    tagged_entry_bytes: Optional[int] = None
    entries_per_line: Optional[int] = None
    untagged_feasible: bool = False
    counter_bytes: Optional[int] = None
    mtt_rows: Optional[int] = None
    mtt_row_base: Optional[int] = None

    @property
    def byte_bits(self) -> int:
        return max(self.tag_bits - UNTAGGED_WAY_BITS, 0)


class RowMapping(NamedTuple):
    set_index: int
    row_tag: int
    untagged_way: int
    untagged_byte: int


class AddressMapping(NamedTuple):
    bank: int
    row_id: int
    llc_set: int
    llc_tag: int


def _check_pow2(name, value, problems):
    if not is_pow2(value):
        problems.append(NonPowerOfTwo(f"{name} must be a power of two, got {value}"))


def validate(config: GeometryConfig, tracker: Optional[TrackerConfig] = None) -> DerivedLayout:
    """Check ``config`` (and ``tracker`` if given) and derive the bit layout.

    All violations are collected; the raised exception has the type of the
    first one and lists the rest in ``violations``.
    """
    problems: list[ConfigError] = []
    for name in ("row_count", "row_size_bytes", "bank_count", "line_bytes", "llc_sets"):
        _check_pow2(name, getattr(config, name), problems)
    if config.llc_ways < 1:
        problems.append(WaysInsufficient(f"llc_ways must be >= 1, got {config.llc_ways}"))
    if config.trc_ns <= 0:
        problems.append(ConfigError(f"trc_ns must be > 0, got {config.trc_ns}"))
    if config.window_ns <= 0:
        problems.append(ConfigError(f"window_ns must be > 0, got {config.window_ns}"))
    if config.page_policy not in PAGE_POLICIES:
        problems.append(ConfigError(f"page_policy must be one of {PAGE_POLICIES}, got {config.page_policy!r}"))
    if config.set_hash not in SET_HASHES:
        problems.append(ConfigError(f"set_hash must be one of {SET_HASHES}, got {config.set_hash!r}"))
    if problems:
        _raise(problems)

    if config.row_count < config.llc_sets:
        problems.append(ConfigError("row_count must be >= llc_sets (every set needs a row)"))
    if config.bank_count > config.row_count:
        problems.append(ConfigError("bank_count must be <= row_count"))
    if config.row_size_bytes < config.line_bytes:
        problems.append(ConfigError("row_size_bytes must be >= line_bytes"))

    row_bits = log2i(config.row_count)
    set_bits = log2i(config.llc_sets)
    tag_bits = max(row_bits - set_bits, 0)
    base = dict(
        row_bits=row_bits,
        set_bits=set_bits,
        tag_bits=tag_bits,
        rows_per_set=1 << tag_bits,
        line_bytes=config.line_bytes,
    )
    if tracker is None:
        if problems:
            _raise(problems)
        return DerivedLayout(**base)

    t_eff = tracker.effective_threshold
    cbits = tracker.resolved_counter_bits
    if t_eff < 1:
        problems.append(ConfigError(f"t_rh must be >= 2, got {tracker.t_rh}"))
    if not 1 <= tracker.blast_radius <= 4:
        problems.append(ConfigError(f"blast_radius must be in [1, 4], got {tracker.blast_radius}"))
    if tracker.mtt_reset_mode not in ("bulk", "per_line"):
        problems.append(ConfigError(f"mtt_reset_mode must be bulk or per_line, got {tracker.mtt_reset_mode!r}"))
    if cbits < 1 or (1 << cbits) < t_eff:
        problems.append(
            CounterTooNarrow(
                f"{cbits}-bit counter cannot hold counts up to effective threshold - 1 = {t_eff - 1}"
            )
        )

    variant = tracker.variant
    max_state = tracker.resolved_max_state
    if variant is not Variant.IDEAL:
        if max_state not in (1, 2, 3):
            problems.append(ConfigError(f"max_state must be 1, 2 or 3, got {max_state}"))
        needed = 8 if (variant is Variant.START_S or max_state == 3) else max_state
        if config.llc_ways < needed:
            problems.append(WaysInsufficient(f"{variant.value} needs >= {needed} LLC ways, got {config.llc_ways}"))
    if variant is Variant.START_S and max_state != 3:
        problems.append(ConfigError("start_s is always fully reserved (max_state 3)"))

    untagged_feasible = (
        tag_bits >= UNTAGGED_WAY_BITS
        and (1 << tag_bits) <= UNTAGGED_WAYS * config.line_bytes
        and cbits <= 8
    )
    if tracker.untagged_terminal and variant is not Variant.IDEAL and not untagged_feasible:
        if variant is Variant.START_S or max_state == 3:
            problems.append(
                UntaggedModeInfeasible(
                    f"{1 << tag_bits} rows/set with {cbits}-bit counters do not fit one byte each "
                    f"in {UNTAGGED_WAYS} lines of {config.line_bytes}B"
                )
            )

    # free_on_mitigate lets a zero counter mark a free slot, so no valid bit
    valid_bits = 0 if tracker.free_on_mitigate else 1
    entry_bits = tag_bits + cbits + valid_bits
    entry_bytes = math.ceil(entry_bits / 8)
    per_line = config.line_bytes // entry_bytes
    if per_line < 1:
        problems.append(ConfigError(f"{entry_bytes}B tagged entry does not fit a {config.line_bytes}B line"))

    counter_bytes = math.ceil(cbits / 8)
    mtt_rows = mtt_base = None
    if tracker.backing == "mtt":
        # one row of slack so the table also covers the rows it occupies
        mtt_rows = math.ceil(config.row_count * counter_bytes / config.row_size_bytes) + 1
        mtt_base = config.row_count - mtt_rows
        if mtt_base < 1:
            problems.append(ConfigError(f"memory-mapped table needs {mtt_rows} rows, memory has {config.row_count}"))

    if problems:
        _raise(problems)
    return DerivedLayout(
        **base,
        counter_bits=cbits,
        valid_bits=valid_bits,
        tagged_entry_bits=entry_bits,
        tagged_entry_bytes=entry_bytes,
        entries_per_line=per_line,
        untagged_feasible=untagged_feasible,
        counter_bytes=counter_bytes,
        mtt_rows=mtt_rows,
        mtt_row_base=mtt_base,
    )


def _raise(problems):
    first = problems[0]
    raise type(first)(str(first), [str(p) for p in problems])


class Geometry:
    """A validated configuration together with its mapping functions."""

    def __init__(self, config: GeometryConfig = DESK, tracker: Optional[TrackerConfig] = None):
        self.config = config
        self.tracker = tracker
        self.layout = validate(config, tracker)
        lay = self.layout
        self._tag_mask = (1 << lay.tag_bits) - 1
        self._set_mask = config.llc_sets - 1
        self._byte_mask = (1 << lay.byte_bits) - 1
        self._xor = config.set_hash == "xor"
        self.line_bits = log2i(config.line_bytes)
        self.bank_bits = log2i(config.bank_count)
        self.column_bits = log2i(config.row_size_bytes // config.line_bytes)
        self.bankrow_bits = log2i(config.rows_per_bank)

    def __repr__(self):
        return f"Geometry({self.config!r}, {self.tracker!r})"

    @property
    def row_count(self) -> int:
        return self.config.row_count

    # -- row -> LLC placement -------------------------------------------------

    def set_and_tag(self, row_id: int) -> tuple[int, int]:
        tag = row_id & self._tag_mask
        s = row_id >> self.layout.tag_bits
        if self._xor:
            s ^= tag & self._set_mask
        return s, tag

    def map_row(self, row_id: int) -> RowMapping:
        if not 0 <= row_id < self.config.row_count:
            raise RowOutOfRange(f"row {row_id} outside [0, {self.config.row_count})")
        s, tag = self.set_and_tag(row_id)
        way, byte = self.untagged_position(tag)
        return RowMapping(s, tag, way, byte)

    def untagged_position(self, tag: int) -> tuple[int, int]:
        bb = self.layout.byte_bits
        return tag >> bb, tag & self._byte_mask

    def row_of(self, set_index: int, row_tag: int) -> int:
        """Inverse of :meth:`map_row`."""
        if self._xor:
            set_index ^= row_tag & self._set_mask
        return (set_index << self.layout.tag_bits) | row_tag

    def rows_of_set(self, set_index: int) -> np.ndarray:
        tags = np.arange(self.layout.rows_per_set, dtype=np.int64)
        if self._xor:
            top = set_index ^ (tags & self._set_mask)
            return (top << self.layout.tag_bits) | tags
        return (set_index << self.layout.tag_bits) + tags

    # -- physical address ----------------------------------------------------

    def map_address(self, addr: int) -> AddressMapping:
        if not 0 <= addr < self.config.memory_bytes:
            raise AddressOutOfRange(f"address {addr:#x} outside memory of {self.config.memory_bytes:#x} bytes")
        line = addr >> self.line_bits
        bank = line & (self.config.bank_count - 1)
        in_bank_row = line >> (self.bank_bits + self.column_bits)
        row_id = bank * self.config.rows_per_bank + in_bank_row
        return AddressMapping(bank, row_id, line & self._set_mask, line >> log2i(self.config.llc_sets))

    def row_address(self, row_id: int, column: int = 0) -> int:
        """Byte address of line ``column`` of ``row_id`` (inverse of map_address)."""
        if not 0 <= row_id < self.config.row_count:
            raise RowOutOfRange(f"row {row_id} outside [0, {self.config.row_count})")
        bank, in_bank_row = divmod(row_id, self.config.rows_per_bank)
        column &= (1 << self.column_bits) - 1
        line = (((in_bank_row << self.column_bits) | column) << self.bank_bits) | bank
        return line << self.line_bits

    # -- capacity --------------------------------------------------------------

    def tagged_capacity(self, ways_per_set: int) -> int:
        """Tagged entries the LLC holds with ``ways_per_set`` ways leased in every set."""
        return self.config.llc_sets * ways_per_set * self.layout.entries_per_line

    def reservation_bytes(self, ways_per_set: int) -> int:
        return self.config.llc_sets * ways_per_set * self.config.line_bytes

    def bank_of_row(self, row_id: int) -> int:
        return row_id // self.config.rows_per_bank

    @property
    def columns_per_row(self) -> int:
        return 1 << self.column_bits
