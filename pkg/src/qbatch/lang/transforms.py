"""Whole-program transforms: macro expansion, let binding, segmentation.

All transforms are pure: each returns a new :class:`Program` or derived
value and never mutates its input.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Mapping, Sequence, Union

from ..errors import (
    ArityMismatch,
    OverlappingQubits,
    QbatchError,
    RecursiveMacroError,
    TypeMismatch,
    UnbalancedBoundaries,
    UnknownLetName,
    UnknownMacro,
)
from .ast import (
    MEASURE_GATE,
    PREPARE_GATE,
    Arg,
    GateCall,
    LetRef,
    LetValue,
    Loop,
    MacroCall,
    ParallelBlock,
    ParamKind,
    Program,
    QubitRef,
    RegisterMap,
    ResolvedGate,
    SignatureTable,
    Statement,
    Subcircuit,
)

__all__ = ["expand", "bind", "segment", "resolve_gates", "flatten_gates"]


def bind(program: Program, values: Mapping[str, Union[int, float]]) -> Program:
    """Return a copy of ``program`` with let defaults replaced.

    Binding is idempotent and ``bind(p, {})`` returns an equal program.
    Integer lets accept integral floats and reject fractional values;
    float lets accept any finite number.
    """
    if not values:
        return program
    lets = dict(program.lets)
    for name, value in values.items():
        if name not in lets:
            raise UnknownLetName(f"program declares no let named '{name}'")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeMismatch(f"override for '{name}' must be a number, got {value!r}")
        if lets[name].is_integer:
            if float(value) != int(value):
                raise TypeMismatch(f"integer let '{name}' given non-integral value {value!r}")
            lets[name] = LetValue(int(value))
        else:
            lets[name] = LetValue(float(value))
    return replace(program, lets=lets)


def expand(program: Program, signatures: SignatureTable | None = None) -> Program:
    """Inline macros and unroll loops.

    The result contains only gate calls and parallel blocks, with let
    references preserved unevaluated.  Loop counts are resolved against
    the program's current let values; any let consumed this way is
    recorded in ``structural_lets`` because its value fixed the shape of
    the output.
    """
    if program.expanded:
        return program
    if signatures is None:
        from ..pulses import PulseLibrary

        signatures = PulseLibrary.default().signatures()
    structural: set[str] = set()
    body = _expand_statements(program.body, {}, (), program, structural, signatures)
    return replace(
        program,
        body=tuple(body),
        macros={},
        expanded=True,
        structural_lets=frozenset(structural),
    )


def _expand_statements(
    stmts: Sequence[Statement],
    subst: Mapping[str, Arg],
    stack: tuple[str, ...],
    program: Program,
    structural: set[str],
    signatures: SignatureTable,
) -> list[Statement]:
    out: list[Statement] = []
    for stmt in stmts:
        if isinstance(stmt, GateCall):
            out.append(_substitute_gate(stmt, subst, signatures))
        elif isinstance(stmt, ParallelBlock):
            gates = tuple(_substitute_gate(g, subst, signatures) for g in stmt.gates)
            _check_disjoint_resolved(gates)
            out.append(ParallelBlock(gates, stmt.pos))
        elif isinstance(stmt, Loop):
            count = _loop_count(stmt, subst, program, structural)
            unrolled = _expand_statements(stmt.body, subst, stack, program, structural, signatures)
            out.extend(unrolled * count)
        elif isinstance(stmt, MacroCall):
            out.extend(_expand_macro(stmt, subst, stack, program, structural, signatures))
        else:  # pragma: no cover - parser produces no other statement kinds
            raise QbatchError(f"unexpected statement {stmt!r}")
    return out


def _loop_count(
    loop: Loop,
    subst: Mapping[str, Arg],
    program: Program,
    structural: set[str],
) -> int:
    count = loop.count
    if isinstance(count, LetRef):
        if count.name in subst:
            count = subst[count.name]  # macro parameter
        elif count.name in program.lets:
            structural.add(count.name)
            count = program.lets[count.name].value
        else:
            raise UnknownLetName(f"loop count references unknown let '{count.name}'")
    if isinstance(count, float) and count == int(count):
        count = int(count)
    if not isinstance(count, int) or isinstance(count, bool) or count < 0:
        raise TypeMismatch(f"loop count must resolve to a non-negative integer, got {count!r}")
    return count


def _expand_macro(
    call: MacroCall,
    subst: Mapping[str, Arg],
    stack: tuple[str, ...],
    program: Program,
    structural: set[str],
    signatures: SignatureTable,
) -> list[Statement]:
    macro = program.macros.get(call.name)
    if macro is None:
        loc = f" (line {call.pos.line})" if call.pos else ""
        raise UnknownMacro(f"unknown gate or macro '{call.name}'{loc}")
    if call.name in stack:
        raise RecursiveMacroError(
            f"macro '{call.name}' expands through itself: {' -> '.join(stack + (call.name,))}"
        )
    if len(call.args) != len(macro.params):
        raise ArityMismatch(
            f"macro '{call.name}' takes {len(macro.params)} argument(s), got {len(call.args)}"
        )
    args = tuple(_substitute_arg(a, subst) for a in call.args)
    inner = dict(zip(macro.params, args))
    return _expand_statements(macro.body, inner, stack + (call.name,), program, structural, signatures)


def _substitute_arg(arg: Arg, subst: Mapping[str, Arg]) -> Arg:
    if isinstance(arg, LetRef) and arg.name in subst:
        return subst[arg.name]
    return arg


def _substitute_gate(gate: GateCall, subst: Mapping[str, Arg], signatures: SignatureTable) -> GateCall:
    args = tuple(_substitute_arg(a, subst) for a in gate.args)
    sig = signatures.get(gate.name)
    if sig is not None:
        if len(args) != sig.arity:
            raise ArityMismatch(f"{gate.name} takes {sig.arity} argument(s), got {len(args)}")
        for kind, arg in zip(sig.kinds, args):
            if kind is ParamKind.QUBIT and not isinstance(arg, QubitRef):
                raise TypeMismatch(f"{gate.name}: expected a qubit argument, got {arg!r}")
            if kind is ParamKind.ANGLE and isinstance(arg, QubitRef):
                raise TypeMismatch(f"{gate.name}: expected a numeric argument, got a qubit")
    return GateCall(gate.name, args, gate.pos)


def _check_disjoint_resolved(gates: tuple[GateCall, ...]) -> None:
    seen: set[QubitRef] = set()
    for g in gates:
        for arg in g.args:
            if isinstance(arg, QubitRef):
                if arg in seen:
                    raise OverlappingQubits(
                        f"parallel block reuses {arg.register}[{arg.index}] after expansion"
                    )
                seen.add(arg)


def segment(program: Program) -> list[Subcircuit]:
    """Split an expanded program body into prepare/measure-bounded spans.

    The number of subcircuits equals the number of measure boundaries.
    Gates outside a boundary pair, nested prepares, and unterminated
    spans are all structural errors.
    """
    if not program.expanded:
        raise ValueError("segment requires an expanded program; call expand() first")
    subcircuits: list[Subcircuit] = []
    current: list[Union[GateCall, ParallelBlock]] | None = None
    for stmt in program.body:
        if isinstance(stmt, GateCall) and stmt.name == PREPARE_GATE:
            if current is not None:
                raise UnbalancedBoundaries("nested prepare boundary")
            current = []
        elif isinstance(stmt, GateCall) and stmt.name == MEASURE_GATE:
            if current is None:
                raise UnbalancedBoundaries("measure boundary without a prepare")
            subcircuits.append(Subcircuit(len(subcircuits), tuple(current)))
            current = None
        else:
            if current is None:
                raise UnbalancedBoundaries(f"statement outside any subcircuit: {stmt!r}")
            if not isinstance(stmt, (GateCall, ParallelBlock)):
                raise ValueError("segment requires an expanded program; call expand() first")
            current.append(stmt)
    if current is not None:
        raise UnbalancedBoundaries("prepare boundary never measured")
    return subcircuits


def flatten_gates(sub: Subcircuit) -> list[GateCall]:
    """Subcircuit gates with parallel blocks flattened in member order.

    Parallel members address disjoint qubits, so sequential application
    in member order is exactly equivalent.
    """
    out: list[GateCall] = []
    for item in sub.gates:
        if isinstance(item, ParallelBlock):
            out.extend(item.gates)
        else:
            out.append(item)
    return out


def resolve_gates(
    sub: Subcircuit,
    registers: RegisterMap,
    env: Mapping[str, Union[int, float]] | None = None,
    *,
    keep_parallel: bool = False,
) -> list[Union[ResolvedGate, tuple[ResolvedGate, ...]]]:
    """Flatten qubit references and (optionally) evaluate let references.

    With ``env`` given, every let reference must resolve to a number and
    the result is fully numeric.  Without it, let references survive as
    :class:`LetRef` parameters for symbolic pulse lowering.  With
    ``keep_parallel`` the parallel grouping is preserved as tuples.
    """

    def one(gate: GateCall) -> ResolvedGate:
        qubits: list[int] = []
        params: list[Union[float, LetRef]] = []
        for arg in gate.args:
            if isinstance(arg, QubitRef):
                qubits.append(registers.global_index(arg))
            elif isinstance(arg, LetRef):
                if env is None:
                    params.append(arg)
                elif arg.name in env:
                    params.append(float(env[arg.name]))
                else:
                    raise UnknownLetName(f"no value for let '{arg.name}'")
            else:
                params.append(float(arg))
        return ResolvedGate(gate.name, tuple(qubits), tuple(params))

    out: list[Union[ResolvedGate, tuple[ResolvedGate, ...]]] = []
    for item in sub.gates:
        if isinstance(item, ParallelBlock):
            members = tuple(one(g) for g in item.gates)
            if keep_parallel:
                out.append(members)
            else:
                out.extend(members)
        else:
            out.append(one(item))
    return out
