"""Exception types shared across the toolchain.

Every error raised by the package derives from :class:`QbatchError` so
callers can catch one type at the boundary.  The leaf classes are named
after the condition they report rather than the module that raises them,
since several are raised from more than one place.
"""

from __future__ import annotations

__all__ = [
    "QbatchError",
    "JaqalSyntaxError",
    "UnknownIdentifier",
    "DuplicateDefinition",
    "QubitOutOfRange",
    "RecursiveMacroError",
    "UnknownMacro",
    "ArityMismatch",
    "UnknownLetName",
    "TypeMismatch",
    "UnbalancedBoundaries",
    "OverlappingQubits",
    "UnknownGate",
    "SameQubitMS",
    "DegenerateGate",
    "LengthMismatch",
    "StructuralOverride",
    "ModeUnsupported",
    "MissingSlotValue",
    "BufferOverflow",
    "ValidationError",
    "UnknownJobId",
    "UnsupportedQubitCount",
]


class QbatchError(Exception):
    """Base class for all toolchain errors."""


class JaqalSyntaxError(QbatchError):
    """Source text that does not match the grammar."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.column = column


class UnknownIdentifier(QbatchError):
    """Reference to a name that is not declared anywhere in scope."""


class DuplicateDefinition(QbatchError):
    """Register, let, or macro name declared twice."""


class QubitOutOfRange(QbatchError):
    """Qubit index outside the declared register size."""


class RecursiveMacroError(QbatchError):
    """Macro expansion re-entered a macro already on the expansion stack."""


class UnknownMacro(QbatchError):
    """Call to a name that is neither a native gate nor a defined macro."""


class ArityMismatch(QbatchError):
    """Gate or macro called with the wrong number of arguments."""


class UnknownLetName(QbatchError):
    """Bind or override names a let that the program does not declare."""


class TypeMismatch(QbatchError):
    """Value of the wrong kind, e.g. a non-integral value for an integer let."""


class UnbalancedBoundaries(QbatchError):
    """prepare/measure boundaries that do not pair up into subcircuits."""


class OverlappingQubits(QbatchError):
    """Gates inside one parallel block address the same qubit."""


class UnknownGate(QbatchError):
    """Lowering request for a gate the pulse library does not define."""


class SameQubitMS(QbatchError):
    """Two-qubit entangling gate called with both arguments equal."""


class DegenerateGate(QbatchError):
    """Zero-angle rotation that would emit a zero-duration pulse."""


class LengthMismatch(QbatchError):
    """Override arrays of different lengths in one override set."""


class StructuralOverride(QbatchError):
    """Attempt to batch-override a let that controls bytecode shape."""


class ModeUnsupported(QbatchError):
    """Batch mode that cannot apply to the given program and overrides."""


class MissingSlotValue(QbatchError):
    """Resolution asked to fill a parameter slot with no value supplied."""


class BufferOverflow(QbatchError):
    """A single bytecode unit larger than the hardware buffer."""


class ValidationError(QbatchError):
    """Job submission rejected before execution."""


class UnknownJobId(QbatchError):
    """Poll or release of a job id the service does not know."""


class UnsupportedQubitCount(QbatchError):
    """Problem size outside what the harness supports."""
