"""Bit-packing of tracking entries into LLC line buffers.

A tagged entry occupies ``tagged_entry_bytes`` little-endian bytes::

    bit  [counter_bits + tag_bits]        valid (absent when valid_bits == 0)
    bits [counter_bits, +tag_bits)        row tag
    bits [0, counter_bits)                counter

Without a valid bit a zero counter marks a free slot. An untagged line is
simply ``line_bytes`` one-byte counters addressed by position.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

from .geometry import DerivedLayout


class TrackingEntry(NamedTuple):
    valid: bool
    tag: int
    counter: int


INVALID = TrackingEntry(False, 0, 0)


class LineCodec:
    TAGGED = "tagged"
    UNTAGGED = "untagged"

    def __init__(self, layout: DerivedLayout, fmt: str = TAGGED):
        if fmt not in (self.TAGGED, self.UNTAGGED):
            raise ValueError(f"unknown line format {fmt!r}")
        self.format = fmt
        self.line_bytes = layout.line_bytes
        self.tag_bits = layout.tag_bits
        self.counter_bits = layout.counter_bits
        self.valid_bits = layout.valid_bits
        if fmt == self.TAGGED:
            self.entry_bytes = layout.tagged_entry_bytes
            self.slots = layout.entries_per_line
        else:
            self.entry_bytes = 1
            self.slots = layout.line_bytes
        self._cmask = (1 << self.counter_bits) - 1
        self._tmask = (1 << self.tag_bits) - 1
        self._vshift = self.counter_bits + self.tag_bits

    def new_line(self) -> bytearray:
        return bytearray(self.line_bytes)

    # -- single entries --------------------------------------------------

    def pack(self, entry: TrackingEntry) -> int:
        if self.format == self.UNTAGGED:
            return entry.counter
        if not entry.valid:
            return 0
        word = (entry.tag << self.counter_bits) | entry.counter
        if self.valid_bits:
            word |= 1 << self._vshift
        return word

    def unpack(self, word: int) -> TrackingEntry:
        if self.format == self.UNTAGGED:
            return TrackingEntry(True, 0, word)
        counter = word & self._cmask
        tag = (word >> self.counter_bits) & self._tmask
        valid = bool(word >> self._vshift) if self.valid_bits else counter != 0
        if not valid:
            return INVALID
        return TrackingEntry(True, tag, counter)

    def read(self, line: bytearray, slot: int) -> TrackingEntry:
        off = slot * self.entry_bytes
        return self.unpack(int.from_bytes(line[off : off + self.entry_bytes], "little"))

    def counter_at(self, line: bytearray, slot: int) -> int:
        """Counter bits of a slot without decoding the rest of the entry."""
        off = slot * self.entry_bytes
        return int.from_bytes(line[off : off + self.entry_bytes], "little") & self._cmask

    def write(self, line: bytearray, slot: int, entry: TrackingEntry) -> None:
        if entry.counter > self._cmask or entry.counter < 0:
            raise OverflowError(f"counter {entry.counter} exceeds {self.counter_bits} bits")
        if self.format == self.TAGGED and entry.valid and not 0 <= entry.tag <= self._tmask:
            raise OverflowError(f"tag {entry.tag} exceeds {self.tag_bits} bits")
        off = slot * self.entry_bytes
        line[off : off + self.entry_bytes] = self.pack(entry).to_bytes(self.entry_bytes, "little")

    # -- whole lines -----------------------------------------------------

    def decode(self, line: bytearray) -> list[TrackingEntry]:
        return [self.read(line, i) for i in range(self.slots)]

    def encode(self, entries: Iterable[TrackingEntry]) -> bytearray:
        line = self.new_line()
        for i, e in enumerate(entries):
            if i >= self.slots:
                raise ValueError(f"more than {self.slots} entries for one line")
            self.write(line, i, e)
        return line
