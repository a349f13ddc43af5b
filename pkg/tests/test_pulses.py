"""Pulse lowering tests: symbolic values, conventions, canonical resolution."""

from __future__ import annotations

import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbatch.errors import (
    DegenerateGate,
    MissingSlotValue,
    SameQubitMS,
    UnknownGate,
    ValidationError,
)
from qbatch.lang import LetRef, ResolvedGate
from qbatch.pulses import (
    TWO_PI,
    Channel,
    ParamExpr,
    PhaseFrame,
    PulseLibrary,
    PulseProgram,
    Tone,
    VirtualUpdate,
    content_key,
    degenerate_angle,
    evaluate,
    fold_angle,
    lower,
    lower_sequence,
    resolve_pulse,
    value_add,
    value_scale,
)

angles = st.floats(min_value=-7.0, max_value=7.0, allow_nan=False).filter(
    lambda x: abs(x) > 1e-6
)
phases = st.floats(min_value=-7.0, max_value=7.0, allow_nan=False)


def bits(x: float) -> bytes:
    return struct.pack("<d", x)


def tone_bits(tone: Tone) -> tuple:
    return (
        tone.channel,
        tone.frequency,
        bits(tone.phase),
        bits(tone.amplitude),
        bits(tone.duration_us),
    )


class TestValues:
    def test_float_fast_path(self):
        assert value_add(1.5, 2.25) == 3.75
        assert value_scale(3.0, 0.5) == 1.5

    def test_letref_becomes_single_term_expr(self):
        v = value_add(ParamExpr(0.0, (("a", 1.0),)), 0.5)
        assert isinstance(v, ParamExpr)
        assert v.const == 0.5
        assert v.terms == (("a", 1.0),)

    def test_cancellation_collapses_to_float(self):
        a = ParamExpr(1.0, (("x", 2.0),))
        b = ParamExpr(0.5, (("x", -2.0),))
        v = value_add(a, b)
        assert isinstance(v, float)
        assert v == 1.5

    def test_scale_distributes(self):
        v = value_scale(ParamExpr(1.0, (("x", 2.0),)), 3.0)
        assert v == ParamExpr(3.0, (("x", 6.0),))

    def test_evaluate_single_term_is_exact(self):
        # 0.0 + 1.0 * v must reproduce v bit for bit; the canonical
        # resolution arithmetic relies on this.
        for v in (0.1, -2.7, 1e-300, math.pi):
            expr = ParamExpr(0.0, (("a", 1.0),))
            assert bits(evaluate(expr, {"a": v})) == bits(v)

    def test_evaluate_missing_name(self):
        with pytest.raises(MissingSlotValue):
            evaluate(ParamExpr(0.0, (("a", 1.0),)), {})

    def test_terms_sorted_and_zero_dropped(self):
        v = value_add(ParamExpr(0.0, (("b", 1.0),)), ParamExpr(0.0, (("a", 2.0),)))
        assert v.terms == (("a", 2.0), ("b", 1.0))


class TestFoldAngle:
    @given(st.floats(min_value=-50.0, max_value=50.0, allow_nan=False))
    def test_range(self, theta):
        folded = fold_angle(theta)
        assert -TWO_PI < folded <= TWO_PI

    def test_edges_exact(self):
        assert fold_angle(0.0) == 0.0
        assert fold_angle(TWO_PI) == TWO_PI
        assert fold_angle(-TWO_PI) == TWO_PI
        assert fold_angle(3.0 * math.pi) == -math.pi
        assert fold_angle(2.0 * TWO_PI) == 0.0
        assert fold_angle(math.pi) == math.pi

    @given(st.floats(min_value=-50.0, max_value=50.0, allow_nan=False))
    def test_preserves_entangling_unitary(self, theta):
        from qbatch.emulator import ms_unitary

        u = ms_unitary(0.3, 0.9, theta)
        v = ms_unitary(0.3, 0.9, fold_angle(theta))
        assert np.allclose(u, v, atol=1e-9)


class TestRotationLowering:
    def test_structure(self, library):
        gate = ResolvedGate("R", (1,), (0.5, 1.2))
        pulse, frame = library.lower(gate, PhaseFrame.zero(2))
        assert isinstance(pulse, PulseProgram)
        assert pulse.kind == "R"
        assert pulse.qubits == (1,)
        assert pulse.params == (0.5, 1.2)  # raw, pre-fold
        assert len(pulse.tones) == 2
        for tone in pulse.tones:
            assert tone.channel == Channel.individual(1)
            assert tone.duration_us == pytest.approx(1.2 / math.pi * 10.0)
        assert pulse.tones[0].phase == pytest.approx(0.5)
        assert pulse.tones[1].phase == 0.0
        assert frame == PhaseFrame.zero(2)  # rotations do not move the frame

    def test_negative_angle_plays_shifted_positive(self, library):
        gate = ResolvedGate("R", (0,), (0.5, -1.2))
        pulse, _ = library.lower(gate, PhaseFrame.zero(1))
        assert pulse.params == (0.5, -1.2)  # raw params keep the sign
        assert pulse.tones[0].phase == pytest.approx(0.5 + math.pi)
        assert pulse.tones[0].duration_us == pytest.approx(1.2 / math.pi * 10.0)

    def test_zero_angle_rejected(self, library):
        with pytest.raises(DegenerateGate):
            library.lower(ResolvedGate("R", (0,), (0.5, 0.0)), PhaseFrame.zero(1))

    def test_symbolic_angle_survives(self, library):
        gate = ResolvedGate("R", (0,), (0.5, LetRef("t")))
        pulse, _ = library.lower(gate, PhaseFrame.zero(1))
        assert pulse.is_symbolic
        assert pulse.let_names() == frozenset({"t"})
        with pytest.raises(ValueError):
            pulse.duration_us  # undefined until resolved


class TestVirtualZ:
    def test_lowers_to_frame_update(self, library):
        out, frame = library.lower(ResolvedGate("Rz", (0,), (0.7,)), PhaseFrame.zero(2))
        assert out == VirtualUpdate(0, 0.7)
        assert frame.offset(0) == 0.7
        assert frame.offset(1) == 0.0

    def test_absorbed_into_following_pulse(self, library):
        gates = [
            ResolvedGate("Rz", (0,), (0.7,)),
            ResolvedGate("R", (0,), (0.1, 1.0)),
        ]
        pulses = lower_sequence(gates, 1, library)
        assert len(pulses) == 1
        assert pulses[0].frame_offsets == ((0, 0.7),)

    def test_trailing_virtual_z_is_unobservable(self, library):
        gates = [
            ResolvedGate("R", (0,), (0.1, 1.0)),
            ResolvedGate("Rz", (0,), (0.7,)),
        ]
        pulses = lower_sequence(gates, 1, library)
        assert len(pulses) == 1
        assert pulses[0].frame_offsets == ((0, 0.0),)

    def test_frames_accumulate_per_qubit(self, library):
        gates = [
            ResolvedGate("Rz", (0,), (0.5,)),
            ResolvedGate("Rz", (0,), (0.25,)),
            ResolvedGate("Rz", (1,), (1.0,)),
            ResolvedGate("MS", (0, 1), (0.0, 1.5)),
        ]
        pulses = lower_sequence(gates, 2, library)
        assert pulses[0].frame_offsets == ((0, 0.75), (1, 1.0))


class TestEntanglingLowering:
    def test_structure(self, library):
        gate = ResolvedGate("MS", (0, 1), (0.4, 1.5))
        pulse, _ = library.lower(gate, PhaseFrame.zero(2))
        assert pulse.params == (0.4, 1.5)
        assert len(pulse.tones) == 5
        channels = [t.channel for t in pulse.tones]
        assert channels == [
            Channel.individual(0),
            Channel.individual(0),
            Channel.individual(1),
            Channel.individual(1),
            Channel.global_beam(),
        ]
        for tone in pulse.tones[:4]:
            assert tone.amplitude == pytest.approx(1.5 / TWO_PI)
            assert tone.duration_us == 200.0
        assert pulse.tones[4].amplitude == 1.0
        assert pulse.frame_offsets == ((0, 0.0), (1, 0.0))

    def test_sign_trick_shifts_first_ion_phases(self, library):
        plus, _ = library.lower(ResolvedGate("MS", (0, 1), (0.4, 1.5)), PhaseFrame.zero(2))
        minus, _ = library.lower(ResolvedGate("MS", (0, 1), (0.4, -1.5)), PhaseFrame.zero(2))
        for i in (0, 1):  # first-listed ion's tones
            assert minus.tones[i].phase == pytest.approx(plus.tones[i].phase + math.pi)
        for i in (2, 3, 4):  # partner ion and global tone unchanged
            assert minus.tones[i].phase == plus.tones[i].phase
        assert minus.tones[0].amplitude == plus.tones[0].amplitude

    def test_angle_folding_in_amplitude(self, library):
        big, _ = library.lower(ResolvedGate("MS", (0, 1), (0.0, 3.0 * math.pi)), PhaseFrame.zero(2))
        # 3pi folds to -pi: amplitude |pi|/2pi, phases shifted for the sign
        assert big.tones[0].amplitude == pytest.approx(0.5)
        assert big.tones[0].phase == pytest.approx(math.pi)
        assert big.params == (0.0, 3.0 * math.pi)  # raw

    def test_same_qubit_rejected(self, library):
        with pytest.raises(SameQubitMS):
            library.lower(ResolvedGate("MS", (1, 1), (0.0, 1.0)), PhaseFrame.zero(2))

    def test_full_period_rejected_as_degenerate(self, library):
        with pytest.raises(DegenerateGate):
            library.lower(ResolvedGate("MS", (0, 1), (0.0, 2.0 * TWO_PI)), PhaseFrame.zero(2))


class TestDegenerateElision:
    def test_predicate(self, library):
        assert degenerate_angle(ResolvedGate("R", (0,), (0.3, 0.0)), library)
        assert degenerate_angle(ResolvedGate("MS", (0, 1), (0.0, 0.0)), library)
        assert degenerate_angle(ResolvedGate("MS", (0, 1), (0.0, 2.0 * TWO_PI)), library)
        assert not degenerate_angle(ResolvedGate("R", (0,), (0.3, 0.1)), library)
        assert not degenerate_angle(ResolvedGate("R", (0,), (0.3, LetRef("t"))), library)
        assert not degenerate_angle(ResolvedGate("Rz", (0,), (0.0,)), library)

    def test_sequence_elides_zero_angles(self, library):
        gates = [
            ResolvedGate("R", (0,), (0.0, 0.0)),
            ResolvedGate("R", (0,), (0.0, 1.0)),
            ResolvedGate("MS", (0, 1), (0.0, 0.0)),
        ]
        pulses = lower_sequence(gates, 2, library)
        assert len(pulses) == 1
        assert pulses[0].params == (0.0, 1.0)


class TestContentKey:
    def test_identical_pulses_share_keys(self, library):
        a, _ = library.lower(ResolvedGate("R", (0,), (0.5, 1.0)), PhaseFrame.zero(1))
        b, _ = library.lower(ResolvedGate("R", (0,), (0.5, 1.0)), PhaseFrame.zero(1))
        assert content_key(a) == content_key(b)

    def test_frame_offsets_split_keys(self, library):
        plain, _ = library.lower(ResolvedGate("R", (0,), (0.5, 1.0)), PhaseFrame.zero(1))
        framed, _ = library.lower(
            ResolvedGate("R", (0,), (0.5, 1.0)), PhaseFrame((0.25,))
        )
        assert content_key(plain) != content_key(framed)

    def test_subkey_quantum_noise_merges(self, library):
        a, _ = library.lower(ResolvedGate("R", (0,), (0.5, 1.0)), PhaseFrame.zero(1))
        b, _ = library.lower(ResolvedGate("R", (0,), (0.5 + 1e-14, 1.0)), PhaseFrame.zero(1))
        c, _ = library.lower(ResolvedGate("R", (0,), (0.5 + 1e-9, 1.0)), PhaseFrame.zero(1))
        assert content_key(a) == content_key(b)
        assert content_key(a) != content_key(c)

    def test_qubit_and_kind_split_keys(self, library):
        a, _ = library.lower(ResolvedGate("R", (0,), (0.5, 1.0)), PhaseFrame.zero(2))
        b, _ = library.lower(ResolvedGate("R", (1,), (0.5, 1.0)), PhaseFrame.zero(2))
        assert content_key(a) != content_key(b)


class TestCanonicalResolution:
    """Symbolic and numeric lowerings must resolve to identical bits."""

    @given(phases, angles, st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
    @settings(max_examples=60)
    def test_rotation_routes_agree_bitwise(self, phi, theta, rz):
        lib = PulseLibrary.default()
        frame_gates = [ResolvedGate("Rz", (0,), (rz,))]
        numeric = lower_sequence(
            frame_gates + [ResolvedGate("R", (0,), (phi, theta))], 1, lib
        )
        symbolic = lower_sequence(
            frame_gates + [ResolvedGate("R", (0,), (phi, LetRef("t")))], 1, lib
        )
        res_n = resolve_pulse(numeric[0], {}, lib)
        res_s = resolve_pulse(symbolic[0], {"t": theta}, lib)
        assert [tone_bits(t) for t in res_n.tones] == [tone_bits(t) for t in res_s.tones]
        assert bits(res_n.params[0]) == bits(res_s.params[0])
        assert bits(res_n.params[1]) == bits(res_s.params[1])

    @given(phases, angles, st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
    @settings(max_examples=60)
    def test_entangling_routes_agree_bitwise(self, phi, theta, rz):
        lib = PulseLibrary.default()
        frame_gates = [ResolvedGate("Rz", (0,), (rz,))]
        numeric = lower_sequence(
            frame_gates + [ResolvedGate("MS", (0, 1), (phi, theta))], 2, lib
        )
        symbolic = lower_sequence(
            frame_gates + [ResolvedGate("MS", (0, 1), (phi, LetRef("t")))], 2, lib
        )
        res_n = resolve_pulse(numeric[0], {}, lib)
        res_s = resolve_pulse(symbolic[0], {"t": theta}, lib)
        assert [tone_bits(t) for t in res_n.tones] == [tone_bits(t) for t in res_s.tones]

    def test_resolved_form_is_playable(self, library):
        gates = [
            ResolvedGate("Rz", (0,), (0.4,)),
            ResolvedGate("R", (0,), (0.1, LetRef("t"))),
        ]
        pulse = lower_sequence(gates, 1, library)[0]
        resolved = resolve_pulse(pulse, {"t": -1.3}, library)
        assert not resolved.is_symbolic
        assert resolved.frame_offsets == ()
        assert resolved.params[1] == 1.3  # sign folded into the phase
        for tone in resolved.tones:
            assert 0.0 <= tone.phase < TWO_PI
            assert 0.0 <= tone.amplitude <= 1.0
            assert tone.duration_us > 0.0

    def test_zero_angle_resolves_to_silence(self, library):
        pulse = lower_sequence([ResolvedGate("R", (0,), (0.1, LetRef("t")))], 1, library)[0]
        resolved = resolve_pulse(pulse, {"t": 0.0}, library)
        assert resolved.tones == ()
        assert resolved.params[1] == 0.0
        folded = resolve_pulse(
            lower_sequence([ResolvedGate("MS", (0, 1), (0.1, LetRef("t")))], 2, library)[0],
            {"t": 2.0 * TWO_PI},
            library,
        )
        assert folded.tones == ()

    def test_missing_value_raises(self, library):
        pulse = lower_sequence([ResolvedGate("R", (0,), (0.1, LetRef("t")))], 1, library)[0]
        with pytest.raises(MissingSlotValue):
            resolve_pulse(pulse, {}, library)


class TestToneValidation:
    def test_phase_range(self):
        t = Tone(Channel.individual(0), "f", 7.0, 0.5, 1.0)
        with pytest.raises(ValidationError):
            t.validate_numeric()

    def test_amplitude_range(self):
        t = Tone(Channel.individual(0), "f", 0.0, 1.5, 1.0)
        with pytest.raises(ValidationError):
            t.validate_numeric()

    def test_duration_positive(self):
        t = Tone(Channel.individual(0), "f", 0.0, 0.5, 0.0)
        with pytest.raises(ValidationError):
            t.validate_numeric()

    def test_symbolic_tone_defers(self):
        t = Tone(Channel.individual(0), "f", ParamExpr(9.0, (("a", 1.0),)), 0.5, 1.0)
        t.validate_numeric()  # no error: checked after resolution


class TestLibrary:
    def test_default_gate_set(self, library):
        names = set(library.gate_names())
        assert {"prepare_all", "measure_all", "R", "Rz", "MS"} <= names
        assert library.kind_of("R") == "rotation"
        assert library.kind_of("Rz") == "virtual_z"
        assert library.kind_of("MS") == "ms"
        assert library.kind_of("prepare_all") == "boundary"

    def test_unknown_gate(self, library):
        with pytest.raises(UnknownGate):
            library.kind_of("CNOT")

    def test_signatures_reflect_kinds(self, library):
        sigs = library.signatures()
        assert sigs["R"].arity == 3
        assert sigs["MS"].arity == 4
        assert sigs["Rz"].arity == 2
        assert sigs["prepare_all"].arity == 0

    def test_custom_library_lowered_end_to_end(self, tmp_path):
        doc = {
            "gates": {
                "begin": {"kind": "boundary"},
                "end": {"kind": "boundary"},
                "rot": {
                    "kind": "rotation",
                    "unit_time_us": 4.0,
                    "tones": [
                        {"frequency": "main", "amplitude": 0.9},
                        {"frequency": "ref", "amplitude": 0.8},
                    ],
                },
            }
        }
        path = tmp_path / "gates.json"
        path.write_text(json.dumps(doc))
        lib = PulseLibrary.from_file(str(path))
        assert lib.source_name == str(path)
        pulse, _ = lib.lower(ResolvedGate("rot", (0,), (0.0, math.pi)), PhaseFrame.zero(1))
        assert pulse.tones[0].duration_us == pytest.approx(4.0)
        assert pulse.tones[0].amplitude == 0.9
        assert pulse.tones[1].frequency == "ref"

    @pytest.mark.parametrize(
        "doc",
        [
            "[]",
            '{"gates": {"R": {"kind": "mystery"}}}',
            '{"gates": {"R": {"kind": "rotation", "tones": []}}}',
            '{"gates": {"MS": {"kind": "ms", "individual_tones": ["one"]}}}',
            '{"gates": {"R": {"kind": "rotation", "tones": [{"frequency": "a"}, {}]}}}',
            '{"gates": {"R": {"kind": "rotation", "tones": [{"frequency": "a"}, {"frequency": "b"}]}}}',
            "not json at all",
        ],
    )
    def test_malformed_definitions_rejected(self, doc):
        with pytest.raises(ValidationError):
            PulseLibrary.from_json(doc)

    def test_module_level_lower_uses_default(self):
        pulse, _ = lower(ResolvedGate("R", (0,), (0.0, 1.0)), PhaseFrame.zero(1))
        assert isinstance(pulse, PulseProgram)
