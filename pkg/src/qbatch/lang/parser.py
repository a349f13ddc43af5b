"""Tokenizer and recursive-descent parser for the assembly subset.

Grammar (statements are separated by newlines or semicolons; gates inside
a parallel block may also be separated by ``|``; ``//`` starts a comment):

    program    := (register | let | macro | statement)*
    register   := "register" IDENT "[" INT "]"
    let        := "let" IDENT NUMBER
    macro      := "macro" IDENT IDENT* "{" statement* "}"
    statement  := gate | "<" gate ("|" gate)* ">"
                | "loop" (INT | IDENT) "{" statement* "}"
                | "subcircuit" "{" statement* "}"
    gate       := IDENT arg*
    arg        := IDENT "[" INT "]" | NUMBER | IDENT

``subcircuit { ... }`` is sugar: it parses to an explicit prepare gate,
the block body, and a measure gate.  A statement name that is neither a
native gate nor an already-defined macro parses as a macro call and is
reported at expansion time, which lets a macro body reference macros
defined later (including itself, which expansion rejects).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import (
    ArityMismatch,
    DuplicateDefinition,
    JaqalSyntaxError,
    OverlappingQubits,
    QubitOutOfRange,
    TypeMismatch,
    UnbalancedBoundaries,
    UnknownIdentifier,
)
from .ast import (
    MEASURE_GATE,
    PREPARE_GATE,
    GateCall,
    LetRef,
    LetValue,
    Loop,
    Macro,
    MacroCall,
    ParallelBlock,
    ParamKind,
    Program,
    QubitRef,
    Register,
    SignatureTable,
    SourcePos,
    Statement,
)

__all__ = ["parse", "tokenize"]

_KEYWORDS = {"register", "let", "macro", "loop", "subcircuit"}

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>[ \t\r]+)
    | (?P<comment>//[^\n]*)
    | (?P<newline>\n)
    | (?P<number>-?(?:\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?))
    | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<lbracket>\[)
    | (?P<rbracket>\])
    | (?P<lbrace>\{)
    | (?P<rbrace>\})
    | (?P<langle><)
    | (?P<rangle>>)
    | (?P<pipe>\|)
    | (?P<semicolon>;)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int

    @property
    def pos(self) -> SourcePos:
        return SourcePos(self.line, self.column)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line = 1
    line_start = 0
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise JaqalSyntaxError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        assert kind is not None
        if kind == "newline":
            tokens.append(Token("sep", "\n", line, pos - line_start + 1))
            line += 1
            line_start = m.end()
        elif kind == "semicolon":
            tokens.append(Token("sep", ";", line, pos - line_start + 1))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _parse_number(text: str) -> int | float:
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    return float(text)


class _Parser:
    def __init__(self, tokens: list[Token], signatures: SignatureTable):
        self.tokens = tokens
        self.i = 0
        self.signatures = signatures
        self.registers: list[Register] = []
        self.register_sizes: dict[str, int] = {}
        self.lets: dict[str, LetValue] = {}
        self.macros: dict[str, Macro] = {}

    # token plumbing -----------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def skip_seps(self) -> None:
        while self.peek().kind == "sep":
            self.next()

    def expect(self, kind: str, what: str) -> Token:
        tok = self.next()
        if tok.kind != kind:
            raise JaqalSyntaxError(
                f"expected {what}, found {tok.text!r}" if tok.kind != "eof" else f"expected {what}, found end of input",
                tok.line,
                tok.column,
            )
        return tok

    def end_statement(self) -> None:
        tok = self.peek()
        if tok.kind in ("sep", "eof") or tok.kind in ("rbrace", "rangle", "pipe"):
            return
        raise JaqalSyntaxError(f"unexpected {tok.text!r} after statement", tok.line, tok.column)

    # declarations -------------------------------------------------------

    def check_fresh_name(self, name: str, tok: Token) -> None:
        if name in self.register_sizes or name in self.lets or name in self.macros:
            raise DuplicateDefinition(f"'{name}' already defined (line {tok.line})")

    def parse_register(self) -> None:
        tok = self.expect("ident", "register name")
        self.check_fresh_name(tok.text, tok)
        self.expect("lbracket", "'['")
        size_tok = self.expect("number", "register size")
        size = _parse_number(size_tok.text)
        if not isinstance(size, int) or size < 1:
            raise JaqalSyntaxError("register size must be a positive integer", size_tok.line, size_tok.column)
        self.expect("rbracket", "']'")
        self.registers.append(Register(tok.text, size))
        self.register_sizes[tok.text] = size
        self.end_statement()

    def parse_let(self) -> None:
        tok = self.expect("ident", "let name")
        self.check_fresh_name(tok.text, tok)
        value_tok = self.expect("number", "let value")
        self.lets[tok.text] = LetValue(_parse_number(value_tok.text))
        self.end_statement()

    def parse_macro(self) -> None:
        name_tok = self.expect("ident", "macro name")
        self.check_fresh_name(name_tok.text, name_tok)
        params: list[str] = []
        while self.peek().kind == "ident":
            p = self.next()
            if p.text in params:
                raise DuplicateDefinition(f"duplicate macro parameter '{p.text}' (line {p.line})")
            params.append(p.text)
        self.expect("lbrace", "'{'")
        body = self.parse_block(params=tuple(params), in_macro=True)
        for stmt in body:
            _reject_boundaries(stmt, where="macro body")
        self.macros[name_tok.text] = Macro(name_tok.text, tuple(params), tuple(body))

    # statements ---------------------------------------------------------

    def parse_block(self, params: tuple[str, ...], in_macro: bool) -> list[Statement]:
        stmts: list[Statement] = []
        while True:
            self.skip_seps()
            tok = self.peek()
            if tok.kind == "rbrace":
                self.next()
                return stmts
            if tok.kind == "eof":
                raise JaqalSyntaxError("unterminated block", tok.line, tok.column)
            stmt = self.parse_statement(params, in_macro)
            if isinstance(stmt, _Splice):
                stmts.extend(stmt.stmts)
            else:
                stmts.append(stmt)

    def parse_statement(self, params: tuple[str, ...] = (), in_macro: bool = False) -> Statement:
        tok = self.peek()
        if tok.kind == "langle":
            return self.parse_parallel(params)
        if tok.kind != "ident":
            raise JaqalSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.column)
        if tok.text == "loop":
            return self.parse_loop(params, in_macro)
        if tok.text == "subcircuit":
            return self.parse_subcircuit_block(params, in_macro)
        if tok.text in ("register", "let", "macro"):
            raise JaqalSyntaxError(f"'{tok.text}' is only allowed at the top level", tok.line, tok.column)
        return self.parse_gate(params)

    def parse_loop(self, params: tuple[str, ...], in_macro: bool) -> Loop:
        loop_tok = self.next()
        count_tok = self.next()
        count: int | LetRef
        if count_tok.kind == "number":
            value = _parse_number(count_tok.text)
            if not isinstance(value, int) or value < 0:
                raise TypeMismatch(f"loop count must be a non-negative integer (line {count_tok.line})")
            count = value
        elif count_tok.kind == "ident":
            name = count_tok.text
            if name in params:
                count = LetRef(name)
            elif name in self.lets:
                if not self.lets[name].is_integer:
                    raise TypeMismatch(f"loop count '{name}' must name an integer let (line {count_tok.line})")
                count = LetRef(name)
            else:
                raise UnknownIdentifier(f"unknown loop count '{name}' (line {count_tok.line})")
        else:
            raise JaqalSyntaxError("expected loop count", count_tok.line, count_tok.column)
        self.expect("lbrace", "'{'")
        body = self.parse_block(params, in_macro)
        for stmt in body:
            _reject_boundaries(stmt, where="loop body")
        return Loop(count, tuple(body), loop_tok.pos)

    def parse_subcircuit_block(self, params: tuple[str, ...], in_macro: bool) -> Statement:
        tok = self.next()
        if in_macro:
            raise UnbalancedBoundaries(f"subcircuit block not allowed in macro body (line {tok.line})")
        self.expect("lbrace", "'{'")
        body = self.parse_block(params, in_macro=False)
        for stmt in body:
            _reject_boundaries(stmt, where="subcircuit block")
        # Desugars directly to an explicit boundary pair.
        inner = [GateCall(PREPARE_GATE, (), tok.pos), *body, GateCall(MEASURE_GATE, (), tok.pos)]
        return _Splice(tuple(inner))

    def parse_parallel(self, params: tuple[str, ...]) -> ParallelBlock:
        open_tok = self.next()
        gates: list[GateCall] = []
        while True:
            self.skip_seps()
            tok = self.peek()
            if tok.kind == "rangle":
                self.next()
                break
            if tok.kind == "pipe":
                self.next()
                continue
            if tok.kind == "eof":
                raise JaqalSyntaxError("unterminated parallel block", tok.line, tok.column)
            if tok.kind != "ident":
                raise JaqalSyntaxError(f"unexpected {tok.text!r} in parallel block", tok.line, tok.column)
            gate = self.parse_gate(params, in_parallel=True)
            if isinstance(gate, MacroCall):
                raise JaqalSyntaxError(
                    "parallel blocks may contain native gates only", tok.line, tok.column
                )
            gates.append(gate)
        if not gates:
            raise JaqalSyntaxError("empty parallel block", open_tok.line, open_tok.column)
        for g in gates:
            _reject_boundaries(g, where="parallel block")
        _check_disjoint(gates)
        return ParallelBlock(tuple(gates), open_tok.pos)

    def parse_gate(self, params: tuple[str, ...], in_parallel: bool = False) -> GateCall | MacroCall:
        name_tok = self.next()
        name = name_tok.text
        args: list = []
        while True:
            tok = self.peek()
            if tok.kind == "number":
                self.next()
                args.append(float(_parse_number(tok.text)))
            elif tok.kind == "ident" and tok.text not in _KEYWORDS:
                self.next()
                if self.peek().kind == "lbracket":
                    self.next()
                    idx_tok = self.expect("number", "qubit index")
                    idx = _parse_number(idx_tok.text)
                    if not isinstance(idx, int) or idx < 0:
                        raise JaqalSyntaxError("qubit index must be a non-negative integer", idx_tok.line, idx_tok.column)
                    self.expect("rbracket", "']'")
                    args.append(self.resolve_qubit(QubitRef(tok.text, idx), tok))
                else:
                    args.append(self.resolve_name(tok, params))
            else:
                break
        if not in_parallel:
            self.end_statement()
        if name in self.signatures:
            call = GateCall(name, tuple(args), name_tok.pos)
            self.validate_native(call, params)
            return call
        # Unknown names become macro calls; expansion reports the ones that
        # never resolve.  Forward references keep self-recursion detectable
        # as recursion rather than a parse failure.
        return MacroCall(name, tuple(args), name_tok.pos)

    def resolve_qubit(self, ref: QubitRef, tok: Token) -> QubitRef:
        if ref.register not in self.register_sizes:
            raise UnknownIdentifier(f"unknown register '{ref.register}' (line {tok.line})")
        size = self.register_sizes[ref.register]
        if not 0 <= ref.index < size:
            raise QubitOutOfRange(
                f"{ref.register}[{ref.index}] outside register of size {size} (line {tok.line})"
            )
        return ref

    def resolve_name(self, tok: Token, params: tuple[str, ...]) -> LetRef:
        name = tok.text
        if name in params or name in self.lets:
            return LetRef(name)
        raise UnknownIdentifier(f"unknown identifier '{name}' (line {tok.line})")

    def validate_native(self, call: GateCall, params: tuple[str, ...]) -> None:
        sig = self.signatures[call.name]
        if len(call.args) != sig.arity:
            raise ArityMismatch(
                f"{call.name} takes {sig.arity} argument(s), got {len(call.args)}"
                + (f" (line {call.pos.line})" if call.pos else "")
            )
        for kind, arg in zip(sig.kinds, call.args):
            if kind is ParamKind.QUBIT:
                if isinstance(arg, QubitRef):
                    continue
                if isinstance(arg, LetRef) and arg.name in params:
                    continue  # macro parameter, kind checked at expansion
                raise TypeMismatch(f"{call.name}: expected a qubit argument, got {arg!r}")
            else:
                if isinstance(arg, (int, float)) or isinstance(arg, LetRef):
                    continue
                raise TypeMismatch(f"{call.name}: expected a numeric argument, got {arg!r}")

    # program ------------------------------------------------------------

    def parse_program(self) -> Program:
        body: list[Statement] = []
        while True:
            self.skip_seps()
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind == "ident" and tok.text == "register":
                self.next()
                self.parse_register()
            elif tok.kind == "ident" and tok.text == "let":
                self.next()
                self.parse_let()
            elif tok.kind == "ident" and tok.text == "macro":
                self.next()
                self.parse_macro()
            else:
                stmt = self.parse_statement()
                if isinstance(stmt, _Splice):
                    body.extend(stmt.stmts)
                else:
                    body.append(stmt)
        if not body:
            raise JaqalSyntaxError("program has no executable statements", 1, 1)
        return Program(
            registers=tuple(self.registers),
            lets=dict(self.lets),
            macros=dict(self.macros),
            body=tuple(body),
        )


@dataclass(frozen=True)
class _Splice:
    """Internal marker: a desugared block to be spliced into the body."""

    stmts: tuple[Statement, ...]


def _reject_boundaries(stmt: Statement, where: str) -> None:
    if isinstance(stmt, GateCall) and stmt.name in (PREPARE_GATE, MEASURE_GATE):
        loc = f" (line {stmt.pos.line})" if stmt.pos else ""
        raise UnbalancedBoundaries(f"{stmt.name} not allowed in {where}{loc}")
    if isinstance(stmt, ParallelBlock):
        for g in stmt.gates:
            _reject_boundaries(g, where)
    if isinstance(stmt, Loop):
        for s in stmt.body:
            _reject_boundaries(s, where)


def _check_disjoint(gates: list[GateCall]) -> None:
    seen: set[QubitRef] = set()
    for g in gates:
        for arg in g.args:
            if isinstance(arg, QubitRef):
                if arg in seen:
                    loc = f" (line {g.pos.line})" if g.pos else ""
                    raise OverlappingQubits(
                        f"parallel block reuses {arg.register}[{arg.index}]{loc}"
                    )
                seen.add(arg)


def parse(source: str, signatures: SignatureTable | None = None) -> Program:
    """Parse source text into a validated :class:`Program`.

    ``signatures`` names the native gates and their argument kinds; by
    default the standard pulse library's table is used.
    """
    if signatures is None:
        from ..pulses import PulseLibrary

        signatures = PulseLibrary.default().signatures()
    parser = _Parser(tokenize(source), signatures)
    return parser.parse_program()
