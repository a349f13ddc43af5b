"""Batched compilation plans and their communication-step accounting.

A *plan* fixes everything about how a program's runs reach the control
hardware: how many communication steps, how many compilations, and how
many bytecode words cross the link.  Four modes:

* ``UNBATCHED``: every run (row x subcircuit) is compiled numerically
  and uploaded by itself.  Steps scale with the run count.
* ``INDEX``: one upload covers all subcircuits; no parameter rows.
* ``OVERRIDE``: one upload covers all parameter rows of the (usually
  single) subcircuit; let values bind per run from override arrays.
* ``COMBINED``: one upload covers both axes at once.

All batched modes compile each subcircuit once, symbolically, against a
shared deduplicated table; runs differ only in the values resolved into
the table's slots at playback time.  Run order is the same in every
mode: rows outermost, subcircuits innermost, so mode changes never
reorder trajectories.

Override arrays of equal length zip into rows; scalars broadcast to
every row.  Overriding a let that was consumed structurally (a loop
count) would change the program's shape, which batching cannot express,
so it is rejected.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

from .bytecode import BytecodeUnit, GateDataTable, compile_subcircuit
from .errors import (
    LengthMismatch,
    ModeUnsupported,
    StructuralOverride,
    TypeMismatch,
    UnknownLetName,
)
from .lang.ast import Program, RegisterMap, ResolvedGate
from .lang.transforms import expand, resolve_gates, segment
from .pulses import PulseLibrary, PulseProgram, resolve_pulse

__all__ = [
    "Mode",
    "OverrideSet",
    "StepCount",
    "RunSpec",
    "ResolvedUnit",
    "BatchPlan",
    "plan",
    "resolve_unit",
]


class Mode(enum.Enum):
    UNBATCHED = "unbatched"
    INDEX = "index"
    OVERRIDE = "override"
    COMBINED = "combined"

    @staticmethod
    def parse(name: str) -> "Mode":
        try:
            return Mode(name.lower())
        except ValueError:
            options = ", ".join(m.value for m in Mode)
            raise ModeUnsupported(f"unknown mode '{name}' (expected one of: {options})") from None


Scalar = Union[int, float]


class OverrideSet:
    """Per-run let values: arrays zip into rows, scalars broadcast."""

    def __init__(self, values: Mapping[str, Union[Scalar, Sequence[Scalar]]] | None = None):
        self._scalars: dict[str, Scalar] = {}
        self._arrays: dict[str, tuple[Scalar, ...]] = {}
        self._n_rows = 1
        for name, value in (values or {}).items():
            self._add(name, value)

    def _add(self, name: str, value: object) -> None:
        if isinstance(value, bool):
            raise TypeMismatch(f"override '{name}': booleans are not let values")
        if isinstance(value, (int, float)):
            self._scalars[name] = value
            return
        if isinstance(value, (list, tuple)):
            items: list[Scalar] = []
            for v in value:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise TypeMismatch(
                        f"override '{name}': array elements must be numbers, got {v!r}"
                    )
                items.append(v)
            if not items:
                raise LengthMismatch(f"override '{name}': empty array")
            if self._arrays and len(items) != self._n_rows:
                raise LengthMismatch(
                    f"override '{name}' has {len(items)} rows, others have {self._n_rows}"
                )
            self._arrays[name] = tuple(items)
            self._n_rows = len(items)
            return
        raise TypeMismatch(f"override '{name}': expected a number or an array, got {value!r}")

    @staticmethod
    def from_json(text: str) -> "OverrideSet":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise TypeMismatch("override document must be a JSON object")
        return OverrideSet(doc)

    @property
    def names(self) -> frozenset[str]:
        return frozenset(self._scalars) | frozenset(self._arrays)

    @property
    def has_arrays(self) -> bool:
        return bool(self._arrays)

    @property
    def n_rows(self) -> int:
        return self._n_rows

    def __len__(self) -> int:
        return len(self._scalars) + len(self._arrays)

    def validate(self, program: Program) -> None:
        for name in sorted(self.names):
            if name not in program.lets:
                raise UnknownLetName(f"override targets undeclared let '{name}'")
            if name in program.structural_lets:
                raise StructuralOverride(
                    f"let '{name}' fixes program structure (a loop count); "
                    "rebind and re-expand instead of overriding"
                )
            declared = program.lets[name]
            if declared.is_integer:
                for v in self._row_values(name):
                    if isinstance(v, float) and not v.is_integer():
                        raise TypeMismatch(
                            f"override '{name}': {v} does not fit the integer let"
                        )

    def _row_values(self, name: str) -> tuple[Scalar, ...]:
        if name in self._arrays:
            return self._arrays[name]
        return (self._scalars[name],)

    def row(self, index: int) -> dict[str, Scalar]:
        if not 0 <= index < self._n_rows:
            raise IndexError(f"row {index} of {self._n_rows}")
        out: dict[str, Scalar] = dict(self._scalars)
        for name, values in self._arrays.items():
            out[name] = values[index]
        return out

    def rows(self) -> list[dict[str, Scalar]]:
        return [self.row(i) for i in range(self._n_rows)]


@dataclass(frozen=True)
class StepCount:
    """Link-cost accounting: what a plan (or a sum of plans) pays."""

    steps: int = 0
    compilations: int = 0
    upload_words: int = 0

    def __add__(self, other: "StepCount") -> "StepCount":
        if not isinstance(other, StepCount):
            return NotImplemented
        return StepCount(
            self.steps + other.steps,
            self.compilations + other.compilations,
            self.upload_words + other.upload_words,
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "steps": self.steps,
            "compilations": self.compilations,
            "upload_words": self.upload_words,
        }


@dataclass(frozen=True)
class RunSpec:
    """One trajectory: which subcircuit, which parameter row."""

    run_index: int
    row_index: int
    subcircuit_index: int
    env: Mapping[str, Scalar]


@dataclass(frozen=True)
class ResolvedUnit:
    """Playback-form pulses for one run: numeric, frames folded in."""

    subcircuit_index: int
    pulses: tuple[PulseProgram, ...]

    def duration_us(self) -> float:
        # Playback is serialized, so a unit's wall time is the sum of its
        # pulses' durations.
        return sum(p.duration_us for p in self.pulses)


def resolve_unit(
    unit: BytecodeUnit,
    table: GateDataTable,
    env: Mapping[str, Scalar],
    library: PulseLibrary | None = None,
) -> ResolvedUnit:
    """Bind let values into a unit's entries for one run.

    This is pure substitution against the already-compiled table: no
    entry is recompiled and the table itself is not touched.  An entry
    whose rotation angle resolves to zero resolves to a toneless pulse,
    which playback skips.
    """
    pulses = tuple(
        resolve_pulse(table.entry(ref), env, library) for ref in unit.entry_refs
    )
    return ResolvedUnit(unit.subcircuit_index, pulses)


@dataclass
class BatchPlan:
    """A program fixed to a mode: runs, bytecode, and link accounting.

    For batched modes the shared table and per-subcircuit units are
    compiled eagerly (they are the upload).  For unbatched mode each
    run's solo compilation is deferred to ``compile_run``; the plan
    keeps only the accounting, so execution can stream with bounded
    residency.
    """

    program: Program
    mode: Mode
    registers: RegisterMap
    subcircuit_gates: tuple[tuple[ResolvedGate, ...], ...]
    runs: tuple[RunSpec, ...]
    n_rows: int
    step_count: StepCount
    library: PulseLibrary
    shared_table: GateDataTable | None = None
    shared_units: tuple[BytecodeUnit, ...] = ()
    shots: int = 0  # informational; execution chooses the real value

    @property
    def n_qubits(self) -> int:
        return self.registers.n_qubits

    @property
    def n_subcircuits(self) -> int:
        return len(self.subcircuit_gates)

    def compile_run(self, run: RunSpec) -> tuple[GateDataTable, BytecodeUnit]:
        """Solo-compile one run with its row values substituted (unbatched)."""
        gates = _substitute(self.subcircuit_gates[run.subcircuit_index], run.env)
        table = GateDataTable()
        unit = compile_subcircuit(run.subcircuit_index, gates, self.n_qubits, table, self.library)
        return table, unit

    def resolve_run(self, run: RunSpec) -> ResolvedUnit:
        """Resolve one run against the shared upload (batched modes)."""
        if self.shared_table is None:
            raise ModeUnsupported("unbatched plans have no shared table; use compile_run")
        unit = self.shared_units[run.subcircuit_index]
        return resolve_unit(unit, self.shared_table, run.env, self.library)

    def run_compilers(self) -> list[Callable[[], tuple[GateDataTable, BytecodeUnit]]]:
        """Per-run compile thunks, in run order, for streaming execution."""
        return [lambda run=run: self.compile_run(run) for run in self.runs]


def _substitute(
    gates: Sequence[ResolvedGate], env: Mapping[str, Scalar]
) -> list[ResolvedGate]:
    from .lang.ast import LetRef

    out = []
    for g in gates:
        params = []
        for p in g.params:
            if isinstance(p, LetRef):
                if p.name not in env:
                    raise UnknownLetName(f"no value for let '{p.name}'")
                params.append(float(env[p.name]))
            else:
                params.append(p)
        out.append(ResolvedGate(g.name, g.qubits, tuple(params)))
    return out


def _full_env(program: Program, row: Mapping[str, Scalar]) -> dict[str, Scalar]:
    env: dict[str, Scalar] = {name: lv.value for name, lv in program.lets.items()}
    env.update(row)
    return env


def plan(
    program: Program,
    mode: Mode | str = Mode.UNBATCHED,
    overrides: OverrideSet | Mapping[str, object] | None = None,
    library: PulseLibrary | None = None,
) -> BatchPlan:
    """Fix a program to a mode and compute its full link accounting.

    The returned plan has already segmented the program and, for batched
    modes, compiled the shared table and units; its ``step_count`` is
    the contract that execution later verifies against realized costs.
    """
    if isinstance(mode, str):
        mode = Mode.parse(mode)
    if overrides is None:
        overrides = OverrideSet()
    elif not isinstance(overrides, OverrideSet):
        overrides = OverrideSet(overrides)
    lib = library or PulseLibrary.default()

    expanded = expand(program)
    overrides.validate(expanded)
    if mode in (Mode.OVERRIDE, Mode.COMBINED) and len(overrides) == 0:
        raise ModeUnsupported(f"{mode.value} mode requires a nonempty override set")
    if mode is Mode.INDEX and overrides.has_arrays:
        raise ModeUnsupported(
            "index mode batches over subcircuits only; override arrays need "
            f"{Mode.OVERRIDE.value} or {Mode.COMBINED.value} mode"
        )

    registers = RegisterMap(expanded.registers)
    subs = segment(expanded)
    sub_gates: list[tuple[ResolvedGate, ...]] = []
    for sub in subs:
        gates = resolve_gates(sub, registers, env=None)
        sub_gates.append(tuple(gates))  # type: ignore[arg-type]

    rows = overrides.rows()
    runs: list[RunSpec] = []
    for row_index, row in enumerate(rows):
        env = _full_env(expanded, row)
        for sub_index in range(len(subs)):
            runs.append(RunSpec(len(runs), row_index, sub_index, env))

    batch_plan = BatchPlan(
        program=expanded,
        mode=mode,
        registers=registers,
        subcircuit_gates=tuple(sub_gates),
        runs=tuple(runs),
        n_rows=len(rows),
        step_count=StepCount(),
        library=lib,
        shared_table=None,
        shared_units=(),
    )

    if mode is Mode.UNBATCHED:
        upload = 0
        for run in runs:
            table, unit = batch_plan.compile_run(run)
            upload += table.word_count() + unit.word_count()
        count = StepCount(steps=len(runs), compilations=len(runs), upload_words=upload)
    else:
        table = GateDataTable()
        units = tuple(
            compile_subcircuit(i, gates, registers.n_qubits, table, lib)
            for i, gates in enumerate(sub_gates)
        )
        upload = table.word_count() + sum(u.word_count() for u in units)
        count = StepCount(steps=1, compilations=len(subs), upload_words=upload)
        batch_plan.shared_table = table
        batch_plan.shared_units = units

    batch_plan.step_count = count
    return batch_plan
