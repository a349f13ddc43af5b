"""Word-oriented bytecode for deduplicated pulse data.

Everything is 8-byte little-endian words.  A *gate data table* holds the
deduplicated pulse entries for a batch plus a string pool; a *unit* is
one subcircuit's playback order, stored as indices into a table.  The
split is the point: every run of a batch re-sends only units while the
table uploads once.

Table layout (words)::

    0           magic "QBGTBL01"
    1           n_entries << 32 | pool_word_count
    2 ..        string pool: per string, 1 length word then the UTF-8
                bytes zero-padded to a word boundary
    ..          entries, back to back

Entry layout (words)::

    0           header: kind_id:8 nqubits:8 ntones:8 nframes:8
                        nslots:8 nparams:8 pad:16   (low byte first)
    1           qubit indices, one byte each, low byte first
    2 ..        params            (nparams value words)
    ..          tones             (5 words each, see below)
    ..          frame offsets     (2 words each: qubit, value)
    ..          slots             (2 + 2*n_terms words each)

Tone layout: channel word (kind << 32 | qubit, qubit 0xffffffff for the
global beam), frequency string id, phase, amplitude, duration.

A *value word* is either raw IEEE-754 double bits or a NaN-boxed slot
reference: ``0x7ff8000000000000 | (slot_index + 1)``.  Real pulse data
never contains NaN, so the boxes are unambiguous; the +1 keeps them
distinct from the canonical quiet NaN.  Each slot stores one affine
let expression: constant, term count, then (name id, coefficient) pairs.
Decoding restores the exact double bits, so encode/decode round-trips
are lossless; only deduplication keys quantize.

Unit layout (words)::

    0           subcircuit_index << 32 | sequence_length
    1 ..        entry indices (one word each)
"""

from __future__ import annotations

import struct
import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence, TypeVar

from .errors import ValidationError
from .lang.ast import ResolvedGate
from .pulses import (
    Channel,
    ParamExpr,
    PulseLibrary,
    PulseProgram,
    Tone,
    Value,
    content_key,
    lower_sequence,
)

__all__ = [
    "WORD_BYTES",
    "TABLE_MAGIC",
    "GateDataTable",
    "BytecodeUnit",
    "compile_subcircuit",
    "decode_table",
    "decode_unit",
    "CompilationStream",
    "hexdump",
]

WORD_BYTES = 8
TABLE_MAGIC = b"QBGTBL01"

_QNAN = 0x7FF8000000000000
_BOX_TEST_MASK = 0xFFF8000000000000
_BOX_PAYLOAD_MASK = 0x0007FFFFFFFFFFFF
_GLOBAL_QUBIT = 0xFFFFFFFF


def _pack_u64(x: int) -> bytes:
    return struct.pack("<Q", x)


def _pack_f64(x: float) -> bytes:
    return struct.pack("<d", x)


def _unpack_u64(data: bytes, word: int) -> int:
    return struct.unpack_from("<Q", data, word * WORD_BYTES)[0]


def _unpack_f64(data: bytes, word: int) -> float:
    return struct.unpack_from("<d", data, word * WORD_BYTES)[0]


def _value_word(value: Value, slot_index: dict[ParamExpr, int]) -> bytes:
    if isinstance(value, ParamExpr):
        return _pack_u64(_QNAN | (slot_index[value] + 1))
    if value != value:  # NaN would collide with the box encoding
        raise ValidationError("pulse data contains NaN; refusing to serialize")
    return _pack_f64(value)


def _read_value(data: bytes, word: int, slots: Sequence[ParamExpr]) -> Value:
    bits = _unpack_u64(data, word)
    if bits & _BOX_TEST_MASK == _QNAN and bits & _BOX_PAYLOAD_MASK:
        index = (bits & _BOX_PAYLOAD_MASK) - 1
        if index >= len(slots):
            raise ValidationError(f"value word references slot {index} of {len(slots)}")
        return slots[index]
    return _unpack_f64(data, word)


class _StringPool:
    """Order-preserving interning of the strings an encoded table needs."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._strings: list[str] = []

    def intern(self, s: str) -> int:
        got = self._ids.get(s)
        if got is None:
            got = len(self._strings)
            self._ids[s] = got
            self._strings.append(s)
        return got

    def lookup(self, index: int) -> str:
        try:
            return self._strings[index]
        except IndexError:
            raise ValidationError(f"string id {index} outside pool of {len(self._strings)}") from None

    def __len__(self) -> int:
        return len(self._strings)

    def word_count(self) -> int:
        total = 0
        for s in self._strings:
            raw = s.encode("utf-8")
            total += 1 + (len(raw) + WORD_BYTES - 1) // WORD_BYTES
        return total

    def to_bytes(self) -> bytes:
        chunks: list[bytes] = []
        for s in self._strings:
            raw = s.encode("utf-8")
            padded = raw + b"\0" * (-len(raw) % WORD_BYTES)
            chunks.append(_pack_u64(len(raw)) + padded)
        return b"".join(chunks)

    @staticmethod
    def from_bytes(data: bytes) -> "_StringPool":
        pool = _StringPool()
        word = 0
        total_words = len(data) // WORD_BYTES
        while word < total_words:
            length = _unpack_u64(data, word)
            word += 1
            n_words = (length + WORD_BYTES - 1) // WORD_BYTES
            start = word * WORD_BYTES
            raw = data[start : start + length]
            if len(raw) != length:
                raise ValidationError("string pool truncated")
            pool.intern(raw.decode("utf-8"))
            word += n_words
        return pool


def _collect_slots(pulse: PulseProgram) -> list[ParamExpr]:
    """Distinct affine expressions in field-scan order."""
    slots: list[ParamExpr] = []
    seen: set[ParamExpr] = set()

    def visit(v: Value) -> None:
        if isinstance(v, ParamExpr) and v not in seen:
            seen.add(v)
            slots.append(v)

    for p in pulse.params:
        visit(p)
    for tone in pulse.tones:
        visit(tone.phase)
        visit(tone.amplitude)
        visit(tone.duration_us)
    for _, offset in pulse.frame_offsets:
        visit(offset)
    return slots


def _entry_word_count(pulse: PulseProgram) -> int:
    slots = _collect_slots(pulse)
    slot_words = sum(2 + 2 * len(s.terms) for s in slots)
    return 2 + len(pulse.params) + 5 * len(pulse.tones) + 2 * len(pulse.frame_offsets) + slot_words


def _encode_entry(pulse: PulseProgram, pool: _StringPool) -> bytes:
    kind_id = pool.intern(pulse.kind)
    if kind_id > 0xFF:
        raise ValidationError("gate name interned too late for the 8-bit header field")
    slots = _collect_slots(pulse)
    if len(slots) > 0xFF:
        raise ValidationError(f"entry needs {len(slots)} slots, limit is 255")
    if len(pulse.qubits) > 8 or any(not 0 <= q <= 0xFF for q in pulse.qubits):
        raise ValidationError(f"cannot pack qubit tuple {pulse.qubits}")
    for count, label in (
        (len(pulse.tones), "tones"),
        (len(pulse.frame_offsets), "frames"),
        (len(pulse.params), "params"),
    ):
        if count > 0xFF:
            raise ValidationError(f"entry has too many {label} ({count})")
    slot_index = {expr: i for i, expr in enumerate(slots)}

    header = (
        kind_id
        | len(pulse.qubits) << 8
        | len(pulse.tones) << 16
        | len(pulse.frame_offsets) << 24
        | len(slots) << 32
        | len(pulse.params) << 40
    )
    qubits_word = 0
    for i, q in enumerate(pulse.qubits):
        qubits_word |= q << (8 * i)

    out = [_pack_u64(header), _pack_u64(qubits_word)]
    for p in pulse.params:
        out.append(_value_word(p, slot_index))
    for tone in pulse.tones:
        kind_code = 0 if tone.channel.kind == "global" else 1
        qubit = _GLOBAL_QUBIT if tone.channel.qubit is None else tone.channel.qubit
        out.append(_pack_u64(kind_code << 32 | qubit))
        out.append(_pack_u64(pool.intern(tone.frequency)))
        out.append(_value_word(tone.phase, slot_index))
        out.append(_value_word(tone.amplitude, slot_index))
        out.append(_value_word(tone.duration_us, slot_index))
    for qubit, offset in pulse.frame_offsets:
        out.append(_pack_u64(qubit))
        out.append(_value_word(offset, slot_index))
    for expr in slots:
        out.append(_pack_f64(expr.const))
        out.append(_pack_u64(len(expr.terms)))
        for name, coeff in expr.terms:
            out.append(_pack_u64(pool.intern(name)))
            out.append(_pack_f64(coeff))
    return b"".join(out)


def _decode_entry(data: bytes, word: int, pool: _StringPool) -> tuple[PulseProgram, int]:
    header = _unpack_u64(data, word)
    kind_id = header & 0xFF
    n_qubits = header >> 8 & 0xFF
    n_tones = header >> 16 & 0xFF
    n_frames = header >> 24 & 0xFF
    n_slots = header >> 32 & 0xFF
    n_params = header >> 40 & 0xFF
    kind = pool.lookup(kind_id)
    qubits_word = _unpack_u64(data, word + 1)
    qubits = tuple(qubits_word >> (8 * i) & 0xFF for i in range(n_qubits))

    # Slots sit after the value sections but values reference them, so
    # locate and decode the slot table first.
    params_at = word + 2
    tones_at = params_at + n_params
    frames_at = tones_at + 5 * n_tones
    slots_at = frames_at + 2 * n_frames

    slots: list[ParamExpr] = []
    cursor = slots_at
    for _ in range(n_slots):
        const = _unpack_f64(data, cursor)
        n_terms = _unpack_u64(data, cursor + 1)
        cursor += 2
        terms = []
        for _ in range(n_terms):
            terms.append((pool.lookup(_unpack_u64(data, cursor)), _unpack_f64(data, cursor + 1)))
            cursor += 2
        slots.append(ParamExpr(const, tuple(terms)))

    params = tuple(_read_value(data, params_at + i, slots) for i in range(n_params))
    tones = []
    for i in range(n_tones):
        at = tones_at + 5 * i
        channel_word = _unpack_u64(data, at)
        kind_code = channel_word >> 32
        qubit = channel_word & 0xFFFFFFFF
        channel = (
            Channel.global_beam()
            if kind_code == 0
            else Channel.individual(qubit)
        )
        tones.append(
            Tone(
                channel=channel,
                frequency=pool.lookup(_unpack_u64(data, at + 1)),
                phase=_read_value(data, at + 2, slots),
                amplitude=_read_value(data, at + 3, slots),
                duration_us=_read_value(data, at + 4, slots),
            )
        )
    frames = []
    for i in range(n_frames):
        at = frames_at + 2 * i
        frames.append((_unpack_u64(data, at), _read_value(data, at + 1, slots)))

    pulse = PulseProgram(
        kind=kind,
        qubits=qubits,
        params=params,
        tones=tuple(tones),
        frame_offsets=tuple(frames),
    )
    return pulse, cursor


class GateDataTable:
    """Deduplicated pulse entries plus the string pool they share.

    ``insert`` keys on :func:`content_key`, so pulses that differ only by
    float noise below the key quantum merge while anything semantically
    distinct (including a bare frame-offset difference) gets its own
    entry.  Strings intern at insert time, which keeps gate names at low
    pool ids and makes word counts exact without serializing.
    """

    def __init__(self) -> None:
        self._entries: list[PulseProgram] = []
        self._keys: dict[str, int] = {}
        self._pool = _StringPool()

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[PulseProgram, ...]:
        return tuple(self._entries)

    def insert(self, pulse: PulseProgram) -> int:
        key = content_key(pulse)
        got = self._keys.get(key)
        if got is not None:
            return got
        index = len(self._entries)
        self._entries.append(pulse)
        self._keys[key] = index
        self._pool.intern(pulse.kind)
        for tone in pulse.tones:
            self._pool.intern(tone.frequency)
        for expr in _collect_slots(pulse):
            for name, _ in expr.terms:
                self._pool.intern(name)
        return index

    def entry(self, index: int) -> PulseProgram:
        return self._entries[index]

    def word_count(self) -> int:
        return 2 + self._pool.word_count() + sum(_entry_word_count(p) for p in self._entries)

    def to_bytes(self) -> bytes:
        if len(self._entries) > 0xFFFFFFFF:
            raise ValidationError("table entry count exceeds the 32-bit header field")
        pool_bytes = self._pool.to_bytes()
        chunks = [
            TABLE_MAGIC,
            _pack_u64(len(self._entries) << 32 | len(pool_bytes) // WORD_BYTES),
            pool_bytes,
        ]
        for pulse in self._entries:
            chunks.append(_encode_entry(pulse, self._pool))
        blob = b"".join(chunks)
        assert len(blob) == self.word_count() * WORD_BYTES
        return blob


def decode_table(data: bytes) -> GateDataTable:
    if len(data) % WORD_BYTES:
        raise ValidationError("table length is not word aligned")
    if data[:WORD_BYTES] != TABLE_MAGIC:
        raise ValidationError("bad table magic")
    counts = _unpack_u64(data, 1)
    n_entries = counts >> 32
    pool_words = counts & 0xFFFFFFFF
    pool_start = 2 * WORD_BYTES
    pool = _StringPool.from_bytes(data[pool_start : pool_start + pool_words * WORD_BYTES])
    table = GateDataTable()
    word = 2 + pool_words
    for _ in range(n_entries):
        pulse, word = _decode_entry(data, word, pool)
        table.insert(pulse)
    if word * WORD_BYTES != len(data):
        raise ValidationError("trailing bytes after last table entry")
    return table


@dataclass(frozen=True)
class BytecodeUnit:
    """One subcircuit's playback order over a table's entries."""

    subcircuit_index: int
    entry_refs: tuple[int, ...]

    def word_count(self) -> int:
        return 1 + len(self.entry_refs)

    def to_bytes(self) -> bytes:
        if len(self.entry_refs) > 0xFFFFFFFF or self.subcircuit_index > 0xFFFFFFFF:
            raise ValidationError("unit header fields exceed 32 bits")
        chunks = [_pack_u64(self.subcircuit_index << 32 | len(self.entry_refs))]
        chunks.extend(_pack_u64(ref) for ref in self.entry_refs)
        return b"".join(chunks)


def decode_unit(data: bytes) -> BytecodeUnit:
    if len(data) % WORD_BYTES or not data:
        raise ValidationError("unit length is not word aligned")
    header = _unpack_u64(data, 0)
    index = header >> 32
    length = header & 0xFFFFFFFF
    if len(data) != (1 + length) * WORD_BYTES:
        raise ValidationError(f"unit declares {length} refs but carries {len(data) // 8 - 1}")
    refs = tuple(_unpack_u64(data, 1 + i) for i in range(length))
    return BytecodeUnit(index, refs)


def compile_subcircuit(
    index: int,
    gates: Sequence[ResolvedGate],
    n_qubits: int,
    table: GateDataTable,
    library: PulseLibrary | None = None,
) -> BytecodeUnit:
    """Lower one subcircuit and intern its pulses into the shared table."""
    pulses = lower_sequence(gates, n_qubits, library)
    refs = tuple(table.insert(p) for p in pulses)
    return BytecodeUnit(index, refs)


T = TypeVar("T")


class CompilationStream(Iterator[T]):
    """Pull-driven compilation with a bounded number of resident results.

    The consumer's pace throttles the producer: after every pull the
    stream refills its buffer up to ``capacity``, so consuming N items
    never triggers more than N + capacity compilations and at most
    ``capacity`` compiled-but-unconsumed results exist at once
    (``resident_high_water`` proves it).

    A compilation error is captured where it happened and raised at the
    pull that would have returned that item; the stream is terminal from
    then on.  ``drain`` abandons backpressure and compiles everything
    left, for callers that want a batch in memory; drained items are
    exempt from the high-water statistic since nothing was resident.
    """

    def __init__(self, sources: Iterable[Callable[[], T]], capacity: int):
        if capacity < 1:
            raise ValueError(f"stream capacity must be at least 1, got {capacity}")
        self.capacity = capacity
        self._sources = iter(sources)
        self._ready: deque[tuple[str, object]] = deque()
        self._lock = threading.Lock()
        self._failure: BaseException | None = None
        self._draining = False
        self.compiled_count = 0
        self.resident_high_water = 0
        with self._lock:
            self._refill()

    def _compile_next(self) -> bool:
        """Compile one source item onto the ready queue.  Lock held."""
        try:
            thunk = next(self._sources)
        except StopIteration:
            return False
        try:
            item = thunk()
        except Exception as exc:  # surfaced at the matching pull
            self._ready.append(("err", exc))
            self.compiled_count += 1
            return True
        self._ready.append(("ok", item))
        self.compiled_count += 1
        if not self._draining:
            self.resident_high_water = max(self.resident_high_water, len(self._ready))
        return True

    def _refill(self) -> None:
        while len(self._ready) < self.capacity:
            if not self._compile_next():
                break

    def pull(self) -> T:
        with self._lock:
            if self._failure is not None:
                raise self._failure
            if not self._ready:
                raise StopIteration
            status, payload = self._ready.popleft()
            if status == "err":
                self._failure = payload  # type: ignore[assignment]
                raise payload  # type: ignore[misc]
            self._refill()
            return payload  # type: ignore[return-value]

    def drain(self) -> list[T]:
        """Compile and return everything remaining, in order."""
        with self._lock:
            if self._failure is not None:
                raise self._failure
            self._draining = True
            while self._compile_next():
                pass
            out: list[T] = []
            while self._ready:
                status, payload = self._ready.popleft()
                if status == "err":
                    self._failure = payload  # type: ignore[assignment]
                    raise payload  # type: ignore[misc]
                out.append(payload)  # type: ignore[arg-type]
            return out

    def __next__(self) -> T:
        return self.pull()

    def __iter__(self) -> "CompilationStream[T]":
        return self

    @property
    def pending(self) -> int:
        with self._lock:
            return len(self._ready)


def hexdump(data: bytes, max_words: int | None = None) -> str:
    """One word per line: offset, hex bytes (little-endian order), ASCII."""
    lines = []
    n_words = len(data) // WORD_BYTES
    shown = n_words if max_words is None else min(n_words, max_words)
    for w in range(shown):
        chunk = data[w * WORD_BYTES : (w + 1) * WORD_BYTES]
        hexpart = " ".join(f"{b:02x}" for b in chunk)
        ascii_part = "".join(chr(b) if 32 <= b < 127 else "." for b in chunk)
        lines.append(f"{w * WORD_BYTES:#08x}  {hexpart}  |{ascii_part}|")
    if shown < n_words:
        lines.append(f"... {n_words - shown} more words")
    return "\n".join(lines)
