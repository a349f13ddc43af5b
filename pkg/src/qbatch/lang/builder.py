"""Programmatic circuit construction.

The builder produces the same :class:`Program` values the parser does,
so generated circuits can be pretty-printed to source, compiled, or
emulated without a round trip through text:

    b = ProgramBuilder()
    q = b.register("q", 2)
    theta = b.let("theta", 0.5)
    with b.subcircuit():
        b.gate("MS", q[0], q[1], 0.0, 1.5707963267948966)
        b.gate("Rz", q[1], theta)
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Union

from ..errors import DuplicateDefinition, QbatchError
from .ast import (
    MEASURE_GATE,
    PREPARE_GATE,
    Arg,
    GateCall,
    LetRef,
    LetValue,
    Loop,
    ParallelBlock,
    Program,
    QubitRef,
    Register,
    Statement,
)

__all__ = ["ProgramBuilder", "RegisterHandle"]


class RegisterHandle:
    """Indexing helper returned by :meth:`ProgramBuilder.register`."""

    def __init__(self, name: str, size: int):
        self.name = name
        self.size = size

    def __getitem__(self, index: int) -> QubitRef:
        if not 0 <= index < self.size:
            raise IndexError(f"{self.name}[{index}] outside register of size {self.size}")
        return QubitRef(self.name, index)


class ProgramBuilder:
    def __init__(self) -> None:
        self._registers: list[Register] = []
        self._lets: dict[str, LetValue] = {}
        self._body: list[Statement] = []
        self._stack: list[list[Statement]] = [self._body]
        self._names: set[str] = set()

    def _declare(self, name: str) -> None:
        if name in self._names:
            raise DuplicateDefinition(f"'{name}' already defined")
        self._names.add(name)

    def register(self, name: str, size: int) -> RegisterHandle:
        self._declare(name)
        self._registers.append(Register(name, size))
        return RegisterHandle(name, size)

    def let(self, name: str, value: Union[int, float]) -> LetRef:
        self._declare(name)
        self._lets[name] = LetValue(value)
        return LetRef(name)

    def gate(self, name: str, *args: Arg) -> None:
        norm = tuple(
            float(a) if isinstance(a, (int, float)) and not isinstance(a, bool) else a
            for a in args
        )
        self._stack[-1].append(GateCall(name, norm))

    def prepare(self) -> None:
        self.gate(PREPARE_GATE)

    def measure(self) -> None:
        self.gate(MEASURE_GATE)

    @contextmanager
    def subcircuit(self) -> Iterator[None]:
        self.prepare()
        yield
        self.measure()

    @contextmanager
    def loop(self, count: Union[int, LetRef]) -> Iterator[None]:
        body: list[Statement] = []
        self._stack.append(body)
        yield
        self._stack.pop()
        self._stack[-1].append(Loop(count, tuple(body)))

    @contextmanager
    def parallel(self) -> Iterator[None]:
        body: list[Statement] = []
        self._stack.append(body)
        yield
        self._stack.pop()
        gates = []
        for stmt in body:
            if not isinstance(stmt, GateCall):
                raise QbatchError("parallel blocks may contain plain gates only")
            gates.append(stmt)
        self._stack[-1].append(ParallelBlock(tuple(gates)))

    def build(self) -> Program:
        """Finish construction.  The result is already macro-free, so it is
        marked expanded and can be segmented directly."""
        if len(self._stack) != 1:
            raise QbatchError("unclosed loop or parallel block")
        return Program(
            registers=tuple(self._registers),
            lets=dict(self._lets),
            macros={},
            body=tuple(self._body),
            expanded=not any(isinstance(s, Loop) for s in self._iter_all(self._body)),
        )

    def source(self) -> str:
        from .pretty import pretty

        return pretty(self.build())

    @staticmethod
    def _iter_all(stmts: list[Statement]):
        for stmt in stmts:
            yield stmt
            if isinstance(stmt, Loop):
                yield from ProgramBuilder._iter_all(list(stmt.body))
