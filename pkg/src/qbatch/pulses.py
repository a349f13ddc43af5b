"""Gate-to-pulse lowering and the per-qubit software phase frame.

Conventions, fixed here and relied on everywhere downstream:

* A single-qubit rotation ``R q phi theta`` emits exactly two tones on
  the qubit's individual channel.  Its duration scales linearly with the
  rotation angle: ``|theta| / pi`` times the library's unit time.
* ``Rz q theta`` is virtual.  It emits no pulse and instead advances the
  qubit's phase frame by theta; later pulses on that qubit pick up the
  accumulated offset.  Frames reset to zero at every prepare boundary,
  which is why lowering works per subcircuit.
* ``MS a b phi theta`` emits two tones on each ion's individual channel
  plus one shared tone on the global channel, with a fixed duration.
  The rotation angle is folded into ``(-2pi, 2pi]`` and encoded in the
  individual-tone amplitudes; a negative folded angle is played as the
  positive-angle pulse with the tones addressing ion ``a`` shifted by pi.
* Zero-angle rotations are rejected at lowering (``DegenerateGate``)
  rather than emitting zero-duration pulses.  A *symbolic* angle that
  resolves to zero later simply resolves to an empty tone list, i.e. the
  pulse is elided at playback.

Parameters that reference lets stay symbolic: tone fields and frame
offsets may hold :class:`ParamExpr`, an affine expression over let
names.  Resolution substitutes numbers, refolds signs, and reduces
phases, using exactly the same arithmetic as numeric lowering, so a
symbolic pulse resolved with value v equals the pulse lowered with v
directly.

Frequencies are symbolic labels (strings), not physical values; only
their identity matters for deduplication and round trips.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from typing import Mapping, Sequence, Union

from .errors import (
    DegenerateGate,
    MissingSlotValue,
    SameQubitMS,
    UnknownGate,
    ValidationError,
)
from .lang.ast import GateSignature, LetRef, ParamKind, ResolvedGate, SignatureTable

__all__ = [
    "TWO_PI",
    "ParamExpr",
    "Value",
    "Channel",
    "Tone",
    "Slot",
    "PulseProgram",
    "VirtualUpdate",
    "PhaseFrame",
    "PulseLibrary",
    "lower",
    "lower_sequence",
    "degenerate_angle",
    "content_key",
    "resolve_pulse",
    "evaluate",
    "value_add",
    "value_scale",
    "fold_angle",
]

TWO_PI = 2.0 * math.pi

KEY_QUANTUM = 1e-12  # dedup keys treat values within this grid step as equal


# --------------------------------------------------------------------------
# symbolic values


@dataclass(frozen=True)
class ParamExpr:
    """Affine expression ``const + sum(coeff * let)`` over let names."""

    const: float = 0.0
    terms: tuple[tuple[str, float], ...] = ()

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.terms)


Value = Union[float, ParamExpr]


def _make_value(const: float, terms: Mapping[str, float]) -> Value:
    kept = tuple(sorted((n, c) for n, c in terms.items() if c != 0.0))
    if not kept:
        return float(const)
    return ParamExpr(float(const), kept)


def value_add(a: Value, b: Value) -> Value:
    if isinstance(a, float) and isinstance(b, float):
        return a + b
    const = (a.const if isinstance(a, ParamExpr) else a) + (
        b.const if isinstance(b, ParamExpr) else b
    )
    terms: dict[str, float] = {}
    for v in (a, b):
        if isinstance(v, ParamExpr):
            for name, coeff in v.terms:
                terms[name] = terms.get(name, 0.0) + coeff
    return _make_value(const, terms)


def value_scale(v: Value, k: float) -> Value:
    if isinstance(v, float):
        return v * k
    return _make_value(v.const * k, {name: coeff * k for name, coeff in v.terms})


def evaluate(v: Value, env: Mapping[str, Union[int, float]]) -> float:
    """Evaluate a possibly-symbolic value against a let environment."""
    if isinstance(v, float):
        return v
    total = v.const
    for name, coeff in v.terms:
        if name not in env:
            raise MissingSlotValue(f"no value supplied for let '{name}'")
        total += coeff * float(env[name])
    return total


def _as_value(param: Union[float, LetRef]) -> Value:
    if isinstance(param, LetRef):
        return ParamExpr(0.0, ((param.name, 1.0),))
    return float(param)


def fold_angle(theta: float) -> float:
    """Fold an angle into ``(-2pi, 2pi]``, preserving the unitary it names."""
    r = math.fmod(theta, 2.0 * TWO_PI)
    if r > TWO_PI:
        r -= 2.0 * TWO_PI
    elif r <= -TWO_PI:
        r += 2.0 * TWO_PI
    return r


def _reduce_phase(phi: float) -> float:
    r = math.fmod(phi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    return 0.0 if r == TWO_PI else r


# --------------------------------------------------------------------------
# pulse data


@dataclass(frozen=True)
class Channel:
    """An output channel: the shared global beam or one ion's beam."""

    kind: str  # "global" | "individual"
    qubit: int | None = None

    @staticmethod
    def global_beam() -> "Channel":
        return Channel("global", None)

    @staticmethod
    def individual(qubit: int) -> "Channel":
        return Channel("individual", qubit)


@dataclass(frozen=True)
class Tone:
    """One RF tone.  Phase, amplitude, and duration may be symbolic."""

    channel: Channel
    frequency: str
    phase: Value
    amplitude: Value
    duration_us: Value

    def validate_numeric(self) -> None:
        for field_name in ("phase", "amplitude", "duration_us"):
            v = getattr(self, field_name)
            if isinstance(v, ParamExpr):
                return  # symbolic tones are validated after resolution
        if not 0.0 <= self.phase < TWO_PI:
            raise ValidationError(f"tone phase {self.phase} outside [0, 2pi)")
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValidationError(f"tone amplitude {self.amplitude} outside [0, 1]")
        if self.duration_us <= 0.0:
            raise ValidationError(f"tone duration {self.duration_us} must be positive")


@dataclass(frozen=True)
class Slot:
    """Where a let parameter enters a pulse: (let name, location)."""

    name: str
    location: str  # e.g. "tone[0].phase", "frame[1]", "param[1]"


@dataclass(frozen=True)
class PulseProgram:
    """The pulse data for one gate.

    ``params`` records the semantic gate parameters (after sign folding
    for numeric input), ``tones`` the playable waveform data, and
    ``frame_offsets`` the per-channel phase-frame offsets captured at
    lowering time.  The offsets are kept separate from the programmed
    tone phases on purpose: two lowerings that differ only in frame
    offset are different pulse data even when the played phases would
    coincide, so they deduplicate separately.
    """

    kind: str
    qubits: tuple[int, ...]
    params: tuple[Value, ...]
    tones: tuple[Tone, ...]
    frame_offsets: tuple[tuple[int, Value], ...] = ()  # (qubit, offset)

    @property
    def duration_us(self) -> float:
        total = 0.0
        for tone_group in self._channel_durations():
            total = max(total, tone_group)
        return total

    def _channel_durations(self) -> list[float]:
        out = []
        for tone in self.tones:
            if isinstance(tone.duration_us, ParamExpr):
                raise ValueError("duration of a symbolic pulse is undefined; resolve first")
            out.append(tone.duration_us)
        return out or [0.0]

    @property
    def is_symbolic(self) -> bool:
        return bool(self.slots())

    def slots(self) -> tuple[Slot, ...]:
        found: list[Slot] = []
        for i, tone in enumerate(self.tones):
            for field_name in ("phase", "amplitude", "duration_us"):
                v = getattr(tone, field_name)
                if isinstance(v, ParamExpr):
                    for name in v.names():
                        found.append(Slot(name, f"tone[{i}].{field_name}"))
        for qubit, offset in self.frame_offsets:
            if isinstance(offset, ParamExpr):
                for name in offset.names():
                    found.append(Slot(name, f"frame[{qubit}]"))
        for i, p in enumerate(self.params):
            if isinstance(p, ParamExpr):
                for name in p.names():
                    found.append(Slot(name, f"param[{i}]"))
        return tuple(found)

    def let_names(self) -> frozenset[str]:
        return frozenset(s.name for s in self.slots())


@dataclass(frozen=True)
class VirtualUpdate:
    """The lowering of a virtual-z gate: a frame shift, no pulses."""

    qubit: int
    amount: Value


@dataclass(frozen=True)
class PhaseFrame:
    """Per-qubit accumulated phase offsets, threaded through lowering."""

    offsets: tuple[Value, ...]

    @staticmethod
    def zero(n_qubits: int) -> "PhaseFrame":
        return PhaseFrame((0.0,) * n_qubits)

    def offset(self, qubit: int) -> Value:
        return self.offsets[qubit]

    def shifted(self, qubit: int, amount: Value) -> "PhaseFrame":
        new = list(self.offsets)
        new[qubit] = value_add(new[qubit], amount)
        return PhaseFrame(tuple(new))


# --------------------------------------------------------------------------
# gate definitions


_KIND_SIGNATURES = {
    "boundary": (),
    "rotation": (ParamKind.QUBIT, ParamKind.ANGLE, ParamKind.ANGLE),
    "virtual_z": (ParamKind.QUBIT, ParamKind.ANGLE),
    "ms": (ParamKind.QUBIT, ParamKind.QUBIT, ParamKind.ANGLE, ParamKind.ANGLE),
}


@dataclass(frozen=True)
class _RotationDef:
    unit_time_us: float
    tones: tuple[tuple[str, float], ...]  # (frequency, amplitude); first carries axis phase


@dataclass(frozen=True)
class _MSDef:
    duration_us: float
    individual_frequencies: tuple[str, str]
    global_frequency: str
    global_amplitude: float
    amplitude_scale: float  # multiplies |theta| / 2pi


class PulseLibrary:
    """Named native gates and the constants their pulses are built from.

    Definitions load from a small JSON file so alternate calibrations or
    renamed gates are a data swap, not a code change.  The tone structure
    per gate kind is fixed by the conventions above; the file chooses
    frequencies, amplitudes, and durations.
    """

    def __init__(self, gates: Mapping[str, object], source_name: str = "<builtin>"):
        self._defs = dict(gates)
        self.source_name = source_name

    # -- construction ----------------------------------------------------

    @staticmethod
    def default() -> "PulseLibrary":
        global _DEFAULT_LIBRARY
        if _DEFAULT_LIBRARY is None:
            text = resources.files("qbatch.data").joinpath("gate_pulse_defaults.json").read_text()
            _DEFAULT_LIBRARY = PulseLibrary.from_json(text, source_name="gate_pulse_defaults.json")
        return _DEFAULT_LIBRARY

    @staticmethod
    def from_file(path: str) -> "PulseLibrary":
        with open(path, "r", encoding="utf-8") as fh:
            return PulseLibrary.from_json(fh.read(), source_name=path)

    @staticmethod
    def from_json(text: str, source_name: str = "<json>") -> "PulseLibrary":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"gate definition file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict) or not isinstance(doc.get("gates"), dict):
            raise ValidationError("gate definition file must be an object with a 'gates' table")
        defs: dict[str, object] = {}
        for name, cfg in doc["gates"].items():
            if not isinstance(cfg, dict) or "kind" not in cfg:
                raise ValidationError(f"gate '{name}': definition must be an object with a 'kind'")
            kind = cfg["kind"]
            if kind == "boundary":
                defs[name] = "boundary"
            elif kind == "virtual_z":
                defs[name] = "virtual_z"
            elif kind == "rotation":
                tones = cfg.get("tones")
                if not isinstance(tones, list) or len(tones) != 2:
                    raise ValidationError(
                        f"gate '{name}': a rotation needs exactly two tones on one channel"
                    )
                parsed = tuple(
                    (str(t.get("frequency", "")), float(t.get("amplitude", 1.0))) for t in tones
                )
                if any(not f for f, _ in parsed):
                    raise ValidationError(f"gate '{name}': every tone needs a frequency label")
                defs[name] = _RotationDef(float(cfg.get("unit_time_us", 10.0)), parsed)
            elif kind == "ms":
                ind = cfg.get("individual_tones")
                if not isinstance(ind, list) or len(ind) != 2:
                    raise ValidationError(
                        f"gate '{name}': an entangling gate needs two individual tones"
                    )
                freqs = tuple(
                    str(t["frequency"]) if isinstance(t, dict) else str(t) for t in ind
                )
                glob = cfg.get("global_tone", {})
                defs[name] = _MSDef(
                    duration_us=float(cfg.get("duration_us", 200.0)),
                    individual_frequencies=(freqs[0], freqs[1]),
                    global_frequency=str(glob.get("frequency", "global_carrier")),
                    global_amplitude=float(glob.get("amplitude", 1.0)),
                    amplitude_scale=float(cfg.get("amplitude_scale", 1.0)),
                )
            else:
                raise ValidationError(f"gate '{name}': unknown kind '{kind}'")
        lib = PulseLibrary(defs, source_name)
        for required in ("boundary",):
            if required not in {lib.kind_of(g) for g in lib.gate_names()}:
                raise ValidationError("gate definition file declares no boundary gates")
        return lib

    # -- queries -----------------------------------------------------------

    def gate_names(self) -> tuple[str, ...]:
        return tuple(self._defs)

    def kind_of(self, name: str) -> str:
        d = self._defs.get(name)
        if d is None:
            raise UnknownGate(f"pulse library defines no gate '{name}'")
        if isinstance(d, str):
            return d
        return "rotation" if isinstance(d, _RotationDef) else "ms"

    def signatures(self) -> SignatureTable:
        return {
            name: GateSignature(name, _KIND_SIGNATURES[self.kind_of(name)])
            for name in self._defs
        }

    def rotation_unit_time_us(self, name: str) -> float:
        d = self._defs[name]
        assert isinstance(d, _RotationDef)
        return d.unit_time_us

    def ms_amplitude_scale(self, name: str) -> float:
        d = self._defs[name]
        assert isinstance(d, _MSDef)
        return d.amplitude_scale

    def ms_duration_us(self, name: str) -> float:
        d = self._defs[name]
        assert isinstance(d, _MSDef)
        return d.duration_us

    # -- lowering ----------------------------------------------------------

    def lower(
        self, gate: ResolvedGate, frame: PhaseFrame
    ) -> tuple[Union[PulseProgram, VirtualUpdate, None], PhaseFrame]:
        """Lower one gate against the current phase frame.

        Returns the pulse data (or a frame update for virtual gates, or
        ``None`` for boundary markers) plus the frame to thread into the
        next gate.  Boundary markers never produce pulses here because
        segmentation strips them; accepting them keeps lowering total.
        """
        kind = self.kind_of(gate.name)
        if kind == "boundary":
            return None, frame
        if kind == "virtual_z":
            (qubit,) = gate.qubits
            amount = _as_value(gate.params[0])
            return VirtualUpdate(qubit, amount), frame.shifted(qubit, amount)
        if kind == "rotation":
            return self._lower_rotation(gate, frame), frame
        if kind == "ms":
            return self._lower_ms(gate, frame), frame
        raise UnknownGate(f"pulse library defines no gate '{gate.name}'")  # pragma: no cover

    def _lower_rotation(self, gate: ResolvedGate, frame: PhaseFrame) -> PulseProgram:
        d = self._defs[gate.name]
        assert isinstance(d, _RotationDef)
        (qubit,) = gate.qubits
        raw_phi = _as_value(gate.params[0])
        raw_theta = _as_value(gate.params[1])
        # Tones carry playback-folded values; params stay raw so that
        # resolution applies one canonical arithmetic to every pulse,
        # whether it was lowered numerically or symbolically.
        phi, theta = raw_phi, raw_theta
        if isinstance(theta, float):
            if theta == 0.0:
                raise DegenerateGate(f"{gate.name} with zero angle emits no pulse; drop the gate")
            if theta < 0.0:
                # R(phi, -t) plays as R(phi + pi, t).
                phi = value_add(phi, math.pi)
                theta = -theta
        if isinstance(phi, float):
            phi = _reduce_phase(phi)
        duration = value_scale(theta, d.unit_time_us / math.pi)
        channel = Channel.individual(qubit)
        (freq_a, amp_a), (freq_b, amp_b) = d.tones
        tones = (
            Tone(channel, freq_a, phi, amp_a, duration),
            Tone(channel, freq_b, 0.0, amp_b, duration),
        )
        for t in tones:
            t.validate_numeric()
        return PulseProgram(
            kind=gate.name,
            qubits=(qubit,),
            params=(raw_phi, raw_theta),
            tones=tones,
            frame_offsets=((qubit, frame.offset(qubit)),),
        )

    def _lower_ms(self, gate: ResolvedGate, frame: PhaseFrame) -> PulseProgram:
        d = self._defs[gate.name]
        assert isinstance(d, _MSDef)
        qa, qb = gate.qubits
        if qa == qb:
            raise SameQubitMS(f"{gate.name} requires two distinct qubits, got {qa} twice")
        raw_phi = _as_value(gate.params[0])
        raw_theta = _as_value(gate.params[1])
        phi, theta = raw_phi, raw_theta
        negative = False
        if isinstance(theta, float):
            theta = fold_angle(theta)
            if theta == 0.0:
                raise DegenerateGate(f"{gate.name} with zero angle emits no pulse; drop the gate")
            if theta < 0.0:
                negative = True
                theta = -theta
        if isinstance(phi, float):
            phi = _reduce_phase(phi)
        # Angle encoding: amplitude = scale * |theta| / 2pi, in [0, 1] after folding.
        amp = value_scale(theta, d.amplitude_scale / TWO_PI)
        # The sign trick lives in the programmed tone phases of ion a.
        phi_a = value_add(phi, math.pi) if negative else phi
        if isinstance(phi_a, float):
            phi_a = _reduce_phase(phi_a)
        chan_a = Channel.individual(qa)
        chan_b = Channel.individual(qb)
        f_red, f_blue = d.individual_frequencies
        tones = (
            Tone(chan_a, f_red, phi_a, amp, d.duration_us),
            Tone(chan_a, f_blue, phi_a, amp, d.duration_us),
            Tone(chan_b, f_red, phi, amp, d.duration_us),
            Tone(chan_b, f_blue, phi, amp, d.duration_us),
            Tone(Channel.global_beam(), d.global_frequency, 0.0, d.global_amplitude, d.duration_us),
        )
        for t in tones:
            t.validate_numeric()
        return PulseProgram(
            kind=gate.name,
            qubits=(qa, qb),
            params=(raw_phi, raw_theta),
            tones=tones,
            frame_offsets=((qa, frame.offset(qa)), (qb, frame.offset(qb))),
        )


_DEFAULT_LIBRARY: PulseLibrary | None = None


def lower(
    gate: ResolvedGate,
    frame: PhaseFrame,
    library: PulseLibrary | None = None,
) -> tuple[Union[PulseProgram, VirtualUpdate, None], PhaseFrame]:
    """Module-level convenience around :meth:`PulseLibrary.lower`."""
    return (library or PulseLibrary.default()).lower(gate, frame)


def degenerate_angle(gate: ResolvedGate, library: PulseLibrary | None = None) -> bool:
    """True when the gate's numeric angle would lower to an empty pulse.

    Symbolic angles are never degenerate here: binding decides later, at
    resolution time, where a zero angle resolves to zero tones.
    """
    lib = library or PulseLibrary.default()
    kind = lib.kind_of(gate.name)
    if kind not in ("rotation", "ms"):
        return False
    theta = _as_value(gate.params[1])
    if not isinstance(theta, float):
        return False
    if kind == "ms":
        theta = fold_angle(theta)
    return theta == 0.0


def lower_sequence(
    gates: Sequence[ResolvedGate],
    n_qubits: int,
    library: PulseLibrary | None = None,
) -> list[PulseProgram]:
    """Lower one subcircuit's gate sequence to pulse data.

    The phase frame starts at zero (a prepare boundary precedes every
    subcircuit) and threads through the whole sequence, so virtual-z
    gates vanish here: their effect lives entirely in the frame offsets
    captured by the pulses that follow them.  Zero-angle gates are
    elided rather than lowered; a bound parameter sweep may legitimately
    zero out an angle that is symbolic in the source program.
    """
    lib = library or PulseLibrary.default()
    frame = PhaseFrame.zero(n_qubits)
    out: list[PulseProgram] = []
    for gate in gates:
        if degenerate_angle(gate, lib):
            continue
        lowered, frame = lib.lower(gate, frame)
        if isinstance(lowered, PulseProgram):
            out.append(lowered)
    return out


# --------------------------------------------------------------------------
# keys and resolution


def _quantize(x: float) -> int:
    if x != x:
        raise ValidationError("pulse data contains NaN; no content key exists for it")
    return int(round(x / KEY_QUANTUM))


def _canonical_value(v: Value) -> object:
    if isinstance(v, ParamExpr):
        return ("expr", _quantize(v.const), tuple((n, _quantize(c)) for n, c in v.terms))
    return ("num", _quantize(v))


def content_key(pulse: PulseProgram) -> str:
    """Deterministic dedup key for pulse data.

    Keys are syntactic: they hash the tones, the captured frame offsets,
    and the symbolic structure, with floats quantized to a 1e-12 grid so
    round-trip noise merges while genuinely different parameters do not.
    Semantically equivalent but differently-expressed pulses keep
    distinct keys on purpose.
    """
    import hashlib

    fields: list[object] = [pulse.kind, pulse.qubits]
    for tone in pulse.tones:
        fields.append(
            (
                tone.channel.kind,
                tone.channel.qubit,
                tone.frequency,
                _canonical_value(tone.phase),
                _canonical_value(tone.amplitude),
                _canonical_value(tone.duration_us),
            )
        )
    fields.append(tuple((q, _canonical_value(v)) for q, v in pulse.frame_offsets))
    fields.append(tuple(_canonical_value(p) for p in pulse.params))
    blob = repr(fields).encode()
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


def resolve_pulse(
    pulse: PulseProgram,
    env: Mapping[str, Union[int, float]],
    library: PulseLibrary | None = None,
) -> PulseProgram:
    """Substitute let values into a pulse and fold it to playback form.

    The result is fully numeric: frame offsets are folded into the
    programmed tone phases and sign conventions are applied, using one
    canonical operation order regardless of whether the input pulse was
    lowered numerically or symbolically.  That shared arithmetic is what
    makes the batched and unbatched pipelines agree bit for bit.  A
    rotation angle that resolves to zero yields an empty tone list: the
    pulse is elided at playback, never recompiled.
    """
    lib = library or PulseLibrary.default()
    kind = lib.kind_of(pulse.kind)
    frame = {q: evaluate(v, env) for q, v in pulse.frame_offsets}

    if kind == "rotation":
        # The frame offset shifts the rotation axis, so it folds into the
        # axis-carrying tone only; the reference tone keeps its phase.
        phi = evaluate(pulse.params[0], env) + frame.get(pulse.qubits[0], 0.0)
        theta = evaluate(pulse.params[1], env)
        if theta < 0.0:
            phi = phi + math.pi
            theta = -theta
        if theta == 0.0:
            return replace(pulse, params=(_reduce_phase(phi), 0.0), tones=(), frame_offsets=())
        unit = lib.rotation_unit_time_us(pulse.kind)
        phi = _reduce_phase(phi)
        duration = theta * (unit / math.pi)
        tones = (
            replace(pulse.tones[0], phase=phi, duration_us=duration),
            replace(
                pulse.tones[1],
                phase=_reduce_phase(evaluate(pulse.tones[1].phase, env)),
                duration_us=duration,
            ),
        )
        for t in tones:
            t.validate_numeric()
        return replace(pulse, params=(phi, theta), tones=tones, frame_offsets=())

    if kind == "ms":
        scale = lib.ms_amplitude_scale(pulse.kind)
        qa, qb = pulse.qubits
        phi = evaluate(pulse.params[0], env)
        theta = fold_angle(evaluate(pulse.params[1], env))
        if theta == 0.0:
            return replace(pulse, params=(_reduce_phase(phi), 0.0), tones=(), frame_offsets=())
        negative = theta < 0.0
        mag = -theta if negative else theta
        base_a = phi + frame.get(qa, 0.0)
        base_b = phi + frame.get(qb, 0.0)
        phi_a = _reduce_phase(base_a + math.pi if negative else base_a)
        phi_b = _reduce_phase(base_b)
        amp = mag * (scale / TWO_PI)
        ta_red, ta_blue, tb_red, tb_blue, t_global = pulse.tones
        tones = (
            replace(ta_red, phase=phi_a, amplitude=amp),
            replace(ta_blue, phase=phi_a, amplitude=amp),
            replace(tb_red, phase=phi_b, amplitude=amp),
            replace(tb_blue, phase=phi_b, amplitude=amp),
            t_global,
        )
        for t in tones:
            t.validate_numeric()
        return replace(pulse, params=(_reduce_phase(phi), theta), tones=tones, frame_offsets=())

    raise UnknownGate(f"cannot resolve pulse of kind '{pulse.kind}'")
