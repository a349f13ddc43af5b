"""Assembly-language front end: syntax tree, parser, transforms, builder."""

from .ast import (
    MEASURE_GATE,
    PREPARE_GATE,
    Arg,
    GateCall,
    GateSignature,
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
    RegisterMap,
    ResolvedGate,
    SignatureTable,
    SourcePos,
    Statement,
    Subcircuit,
)
from .builder import ProgramBuilder, RegisterHandle
from .parser import parse, tokenize
from .pretty import pretty
from .transforms import bind, expand, flatten_gates, resolve_gates, segment

__all__ = [
    "MEASURE_GATE",
    "PREPARE_GATE",
    "Arg",
    "GateCall",
    "GateSignature",
    "LetRef",
    "LetValue",
    "Loop",
    "Macro",
    "MacroCall",
    "ParallelBlock",
    "ParamKind",
    "Program",
    "ProgramBuilder",
    "QubitRef",
    "Register",
    "RegisterHandle",
    "RegisterMap",
    "ResolvedGate",
    "SignatureTable",
    "SourcePos",
    "Statement",
    "Subcircuit",
    "bind",
    "expand",
    "flatten_gates",
    "parse",
    "pretty",
    "resolve_gates",
    "segment",
    "tokenize",
]
