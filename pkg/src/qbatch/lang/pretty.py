"""Source-text formatter.  ``parse(pretty(p))`` reproduces ``p``."""

from __future__ import annotations

from .ast import (
    Arg,
    GateCall,
    LetRef,
    Loop,
    MacroCall,
    ParallelBlock,
    Program,
    QubitRef,
    Statement,
)

__all__ = ["pretty"]


def _fmt_number(value: int | float) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(value)


def _fmt_arg(arg: Arg) -> str:
    if isinstance(arg, QubitRef):
        return f"{arg.register}[{arg.index}]"
    if isinstance(arg, LetRef):
        return arg.name
    return _fmt_number(arg)


def _fmt_gate(gate: GateCall | MacroCall) -> str:
    if not gate.args:
        return gate.name
    return gate.name + " " + " ".join(_fmt_arg(a) for a in gate.args)


def _fmt_statement(stmt: Statement, indent: int, lines: list[str]) -> None:
    pad = "    " * indent
    if isinstance(stmt, (GateCall, MacroCall)):
        lines.append(pad + _fmt_gate(stmt))
    elif isinstance(stmt, ParallelBlock):
        lines.append(pad + "<" + " | ".join(_fmt_gate(g) for g in stmt.gates) + ">")
    elif isinstance(stmt, Loop):
        count = stmt.count.name if isinstance(stmt.count, LetRef) else str(stmt.count)
        lines.append(pad + f"loop {count} {{")
        for inner in stmt.body:
            _fmt_statement(inner, indent + 1, lines)
        lines.append(pad + "}")
    else:  # pragma: no cover
        raise TypeError(f"cannot format {stmt!r}")


def pretty(program: Program) -> str:
    """Format a program as parseable source text."""
    lines: list[str] = []
    for reg in program.registers:
        lines.append(f"register {reg.name}[{reg.size}]")
    for name, let in program.lets.items():
        lines.append(f"let {name} {_fmt_number(let.value)}")
    for macro in program.macros.values():
        header = " ".join(["macro", macro.name, *macro.params])
        lines.append(header + " {")
        for stmt in macro.body:
            _fmt_statement(stmt, 1, lines)
        lines.append("}")
    for stmt in program.body:
        _fmt_statement(stmt, 0, lines)
    return "\n".join(lines) + "\n"
