"""Syntax tree for the assembly subset.

Programs are immutable values.  Source positions are carried for
diagnostics but excluded from equality so that a parsed program and a
builder-constructed program compare equal when they describe the same
circuit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Union

from ..errors import QubitOutOfRange, UnknownIdentifier

__all__ = [
    "SourcePos",
    "Register",
    "LetValue",
    "QubitRef",
    "LetRef",
    "Arg",
    "GateCall",
    "ParallelBlock",
    "Loop",
    "MacroCall",
    "Statement",
    "Macro",
    "Program",
    "Subcircuit",
    "RegisterMap",
    "ResolvedGate",
    "ParamKind",
    "GateSignature",
    "SignatureTable",
    "PREPARE_GATE",
    "MEASURE_GATE",
]

PREPARE_GATE = "prepare_all"
MEASURE_GATE = "measure_all"


@dataclass(frozen=True)
class SourcePos:
    line: int
    column: int


@dataclass(frozen=True)
class Register:
    """A named block of qubits."""

    name: str
    size: int


@dataclass(frozen=True)
class LetValue:
    """A named constant.  The Python type of ``value`` is the tag:
    ``int`` lets may be used structurally (loop counts), ``float`` lets
    may not."""

    value: Union[int, float]

    def __post_init__(self) -> None:
        if isinstance(self.value, bool) or not isinstance(self.value, (int, float)):
            raise TypeError(f"let value must be int or float, got {self.value!r}")
        if isinstance(self.value, float) and not math.isfinite(self.value):
            raise TypeError("let value must be finite")

    @property
    def is_integer(self) -> bool:
        return isinstance(self.value, int)


@dataclass(frozen=True)
class QubitRef:
    """``register[index]`` reference."""

    register: str
    index: int


@dataclass(frozen=True)
class LetRef:
    """Symbolic reference to a let constant or macro parameter."""

    name: str


Arg = Union[QubitRef, LetRef, int, float]


@dataclass(frozen=True)
class GateCall:
    name: str
    args: tuple[Arg, ...] = ()
    pos: SourcePos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class ParallelBlock:
    """Gates played simultaneously.  Members must address disjoint qubits."""

    gates: tuple[GateCall, ...]
    pos: SourcePos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Loop:
    """Fixed-count repetition.  ``count`` may reference an integer let,
    which makes that let structural: its value fixes the unrolled shape."""

    count: Union[int, LetRef]
    body: tuple["Statement", ...]
    pos: SourcePos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class MacroCall:
    name: str
    args: tuple[Arg, ...] = ()
    pos: SourcePos | None = field(default=None, compare=False)


Statement = Union[GateCall, ParallelBlock, Loop, MacroCall]


@dataclass(frozen=True)
class Macro:
    name: str
    params: tuple[str, ...]
    body: tuple[Statement, ...]


@dataclass(frozen=True)
class Program:
    """A parsed or constructed program.

    ``lets`` and ``macros`` preserve declaration order.  ``structural_lets``
    is populated by expansion with the names of integer lets that were
    consumed as loop counts.
    """

    registers: tuple[Register, ...] = ()
    lets: Mapping[str, LetValue] = field(default_factory=dict)
    macros: Mapping[str, Macro] = field(default_factory=dict)
    body: tuple[Statement, ...] = ()
    expanded: bool = False
    structural_lets: frozenset[str] = frozenset()

    @property
    def n_qubits(self) -> int:
        return sum(r.size for r in self.registers)


@dataclass(frozen=True)
class Subcircuit:
    """One prepare/measure-bounded span of gates, in program order."""

    index: int
    gates: tuple[Union[GateCall, ParallelBlock], ...]


class RegisterMap:
    """Maps register-relative qubit references to flat indices.

    Registers occupy consecutive index ranges in declaration order, and
    qubit 0 is the least significant bit of a measurement outcome index.
    """

    def __init__(self, registers: tuple[Register, ...]):
        self._offsets: dict[str, tuple[int, int]] = {}
        offset = 0
        for reg in registers:
            self._offsets[reg.name] = (offset, reg.size)
            offset += reg.size
        self.n_qubits = offset

    def global_index(self, ref: QubitRef) -> int:
        try:
            offset, size = self._offsets[ref.register]
        except KeyError:
            raise UnknownIdentifier(f"unknown register '{ref.register}'") from None
        if not 0 <= ref.index < size:
            raise QubitOutOfRange(
                f"{ref.register}[{ref.index}] outside register of size {size}"
            )
        return offset + ref.index


@dataclass(frozen=True)
class ResolvedGate:
    """A gate call with register references flattened to qubit indices.

    Numeric parameters stay ``float``; parameters that still depend on a
    let are carried as :class:`LetRef` until resolution time.
    """

    name: str
    qubits: tuple[int, ...]
    params: tuple[Union[float, LetRef], ...]


class ParamKind(Enum):
    QUBIT = "qubit"
    ANGLE = "angle"


@dataclass(frozen=True)
class GateSignature:
    name: str
    kinds: tuple[ParamKind, ...]

    @property
    def arity(self) -> int:
        return len(self.kinds)


SignatureTable = Mapping[str, GateSignature]
