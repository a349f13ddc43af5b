"""Batching tests: override rows, plan accounting, run resolution."""

from __future__ import annotations

import struct

import pytest

from qbatch.batching import (
    BatchPlan,
    Mode,
    OverrideSet,
    StepCount,
    plan,
    resolve_unit,
)
from qbatch.errors import (
    LengthMismatch,
    MissingSlotValue,
    ModeUnsupported,
    StructuralOverride,
    TypeMismatch,
    UnknownLetName,
)
from qbatch.lang import parse

STRUCTURAL_SOURCE = """
register q[1]
let n 2
let a 0.1

subcircuit {
  loop n { R q[0] 0.0 a }
}
"""


class TestOverrideSet:
    def test_scalars_broadcast(self):
        ov = OverrideSet({"a": 0.5, "b": 2})
        assert ov.n_rows == 1
        assert not ov.has_arrays
        assert ov.rows() == [{"a": 0.5, "b": 2}]

    def test_arrays_zip_into_rows(self):
        ov = OverrideSet({"a": [1.0, 2.0, 3.0], "b": 7.0})
        assert ov.n_rows == 3
        assert ov.has_arrays
        assert ov.row(1) == {"a": 2.0, "b": 7.0}
        assert len(ov) == 2

    def test_row_bounds(self):
        ov = OverrideSet({"a": [1.0, 2.0]})
        with pytest.raises(IndexError):
            ov.row(2)

    def test_mismatched_lengths(self):
        with pytest.raises(LengthMismatch):
            OverrideSet({"a": [1.0, 2.0], "b": [1.0, 2.0, 3.0]})

    def test_empty_array(self):
        with pytest.raises(LengthMismatch):
            OverrideSet({"a": []})

    @pytest.mark.parametrize("bad", [True, "hello", None, {"x": 1}])
    def test_non_numeric_scalar(self, bad):
        with pytest.raises(TypeMismatch):
            OverrideSet({"a": bad})

    def test_non_numeric_array_element(self):
        with pytest.raises(TypeMismatch):
            OverrideSet({"a": [1.0, False]})

    def test_from_json(self):
        ov = OverrideSet.from_json('{"a": [0.5, 1.5], "c": 3}')
        assert ov.n_rows == 2
        assert ov.row(0) == {"a": 0.5, "c": 3}
        with pytest.raises(TypeMismatch):
            OverrideSet.from_json("[1, 2]")

    def test_validate_unknown_let(self, two_sub_program):
        with pytest.raises(UnknownLetName):
            OverrideSet({"missing": 1.0}).validate(two_sub_program)

    def test_validate_structural_let(self, library):
        prog = parse(STRUCTURAL_SOURCE, signatures=library.signatures())
        from qbatch.lang import expand

        expanded = expand(prog)
        OverrideSet({"a": [0.2, 0.3]}).validate(expanded)  # fine: pulse angle
        with pytest.raises(StructuralOverride):
            OverrideSet({"n": 3}).validate(expanded)

    def test_validate_integer_let(self, library):
        prog = parse(STRUCTURAL_SOURCE, signatures=library.signatures())
        from qbatch.lang import expand

        expanded = expand(prog)
        with pytest.raises(StructuralOverride):
            OverrideSet({"n": 2.5}).validate(expanded)


class TestIntegerLetOverride:
    SOURCE = """
register q[1]
let k 3

subcircuit {
  Rz q[0] k
}
"""

    def test_fractional_value_rejected(self, library):
        prog = parse(self.SOURCE, signatures=library.signatures())
        with pytest.raises(TypeMismatch):
            OverrideSet({"k": [1.5]}).validate(prog)
        OverrideSet({"k": [2.0, 4]}).validate(prog)  # whole floats fit


class TestMode:
    def test_parse_values(self):
        assert Mode.parse("unbatched") is Mode.UNBATCHED
        assert Mode.parse("OVERRIDE") is Mode.OVERRIDE
        assert Mode.parse("Index") is Mode.INDEX

    def test_parse_unknown(self):
        with pytest.raises(ModeUnsupported, match="combined"):
            Mode.parse("turbo")


class TestStepCount:
    def test_add_and_dict(self):
        total = StepCount(1, 2, 30) + StepCount(4, 5, 60)
        assert total == StepCount(5, 7, 90)
        assert total.as_dict() == {"steps": 5, "compilations": 7, "upload_words": 90}


ROWS = {"angle": [0.5, 0.9, 1.3]}


class TestPlanAccounting:
    def test_unbatched_counts(self, two_sub_program, library):
        p = plan(two_sub_program, "unbatched", overrides=ROWS, library=library)
        assert p.step_count == StepCount(steps=6, compilations=6, upload_words=291)
        assert p.n_rows == 3
        assert p.n_subcircuits == 2
        assert len(p.runs) == 6
        assert p.shared_table is None

    def test_batched_counts(self, two_sub_program, library):
        for mode in ("override", "combined"):
            p = plan(two_sub_program, mode, overrides=ROWS, library=library)
            assert p.step_count == StepCount(steps=1, compilations=2, upload_words=107)
            assert len(p.runs) == 6
            assert p.shared_table is not None
            assert len(p.shared_units) == 2

    def test_index_counts(self, two_sub_program, library):
        p = plan(two_sub_program, "index", library=library)
        assert p.step_count == StepCount(steps=1, compilations=2, upload_words=107)
        assert len(p.runs) == 2  # one row of defaults
        assert p.n_rows == 1

    def test_upload_never_worse_batched(self, two_sub_program, library):
        u = plan(two_sub_program, "unbatched", overrides=ROWS, library=library)
        c = plan(two_sub_program, "combined", overrides=ROWS, library=library)
        assert c.step_count.upload_words < u.step_count.upload_words
        assert c.step_count.steps < u.step_count.steps

    def test_unbatched_upload_matches_solo_compiles(self, two_sub_program, library):
        p = plan(two_sub_program, "unbatched", overrides=ROWS, library=library)
        total = 0
        for run in p.runs:
            table, unit = p.compile_run(run)
            total += table.word_count() + unit.word_count()
        assert total == p.step_count.upload_words

    def test_run_order_rows_outermost(self, two_sub_program, library):
        p = plan(two_sub_program, "combined", overrides=ROWS, library=library)
        layout = [(r.row_index, r.subcircuit_index) for r in p.runs]
        assert layout == [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]
        assert [r.run_index for r in p.runs] == list(range(6))
        assert p.runs[2].env["angle"] == 0.9

    def test_env_merges_defaults_with_row(self, two_sub_program, library):
        p = plan(two_sub_program, "override", overrides={"angle": [1.0]}, library=library)
        assert p.runs[0].env["angle"] == 1.0
        p2 = plan(two_sub_program, "index", library=library)
        assert p2.runs[0].env["angle"] == 0.7  # declared default


class TestPlanValidation:
    def test_override_mode_needs_overrides(self, two_sub_program, library):
        for mode in ("override", "combined"):
            with pytest.raises(ModeUnsupported):
                plan(two_sub_program, mode, library=library)

    def test_index_mode_rejects_arrays(self, two_sub_program, library):
        with pytest.raises(ModeUnsupported):
            plan(two_sub_program, "index", overrides=ROWS, library=library)

    def test_index_mode_accepts_scalars(self, two_sub_program, library):
        p = plan(two_sub_program, "index", overrides={"angle": 0.2}, library=library)
        assert p.runs[0].env["angle"] == 0.2

    def test_overrides_validated_against_program(self, two_sub_program, library):
        with pytest.raises(UnknownLetName):
            plan(two_sub_program, "override", overrides={"nope": [1.0]}, library=library)

    def test_resolve_run_requires_shared_table(self, two_sub_program, library):
        p = plan(two_sub_program, "unbatched", overrides=ROWS, library=library)
        with pytest.raises(ModeUnsupported):
            p.resolve_run(p.runs[0])


def tone_bits(tone):
    out = [tone.channel, tone.frequency]
    for v in (tone.phase, tone.amplitude, tone.duration_us):
        out.append(struct.pack("<d", v))
    return tuple(out)


class TestRunResolution:
    def test_solo_and_shared_routes_agree_bitwise(self, two_sub_program, library):
        """Unbatched recompilation and shared-table substitution must give
        the same playback data bit for bit, or mode changes would change
        physics."""
        unb = plan(two_sub_program, "unbatched", overrides=ROWS, library=library)
        ovr = plan(two_sub_program, "override", overrides=ROWS, library=library)
        for run_u, run_b in zip(unb.runs, ovr.runs):
            table, unit = unb.compile_run(run_u)
            solo = resolve_unit(unit, table, run_u.env, library)
            shared = ovr.resolve_run(run_b)
            assert solo.subcircuit_index == shared.subcircuit_index
            assert len(solo.pulses) == len(shared.pulses)
            for a, b in zip(solo.pulses, shared.pulses):
                assert [tone_bits(t) for t in a.tones] == [tone_bits(t) for t in b.tones]
                assert a.qubits == b.qubits

    def test_resolved_unit_duration_sums_pulses(self, two_sub_program, library):
        p = plan(two_sub_program, "combined", overrides=ROWS, library=library)
        resolved = p.resolve_run(p.runs[0])
        assert resolved.duration_us() == pytest.approx(
            sum(x.duration_us for x in resolved.pulses)
        )
        assert resolved.duration_us() > 0.0

    def test_zero_angle_row_resolves_to_silence(self, library):
        src = """
register q[1]
let a 0.5

subcircuit {
  R q[0] 0.0 a
}
"""
        prog = parse(src, signatures=library.signatures())
        p = plan(prog, "override", overrides={"a": [0.0, 1.0]}, library=library)
        silent = p.resolve_run(p.runs[0])
        loud = p.resolve_run(p.runs[1])
        assert silent.pulses[0].tones == ()
        assert silent.duration_us() == 0.0
        assert loud.duration_us() > 0.0

    def test_missing_value_raises(self, two_sub_program, library):
        p = plan(two_sub_program, "override", overrides=ROWS, library=library)
        with pytest.raises(MissingSlotValue):
            resolve_unit(p.shared_units[0], p.shared_table, {}, library)

    def test_plan_accepts_prebuilt_override_set(self, two_sub_program, library):
        ov = OverrideSet(ROWS)
        p = plan(two_sub_program, Mode.OVERRIDE, overrides=ov, library=library)
        assert p.n_rows == 3
