"""Batched compilation and execution harness for trapped-ion style circuits.

The package is a desk-scale model of a circuit-to-control-system
toolchain: an assembly-language front end (:mod:`qbatch.lang`), pulse
lowering (:mod:`qbatch.pulses`), a deduplicating bytecode format
(:mod:`qbatch.bytecode`), batch planning (:mod:`qbatch.batching`), a
simulated buffer-limited control system (:mod:`qbatch.control`), a
dense-matrix emulator (:mod:`qbatch.emulator`), and a variational
eigensolver harness (:mod:`qbatch.vqe`) that exercises the whole stack.
"""

from __future__ import annotations

from .batching import BatchPlan, Mode, OverrideSet, StepCount, plan
from .bytecode import BytecodeUnit, CompilationStream, GateDataTable, compile_subcircuit
from .control import (
    DriftModel,
    ExecutionReport,
    Hardware,
    HardwareConfig,
    JobService,
    execute,
)
from .errors import QbatchError
from .lang import Program, ProgramBuilder, parse
from .pulses import PulseLibrary, PulseProgram, lower_sequence, resolve_pulse
from .vqe import PauliHamiltonian, VQEResult, run_vqe

__version__ = "0.1.0"

__all__ = [
    "BatchPlan",
    "BytecodeUnit",
    "CompilationStream",
    "DriftModel",
    "ExecutionReport",
    "GateDataTable",
    "Hardware",
    "HardwareConfig",
    "JobService",
    "Mode",
    "OverrideSet",
    "PauliHamiltonian",
    "Program",
    "ProgramBuilder",
    "PulseLibrary",
    "PulseProgram",
    "QbatchError",
    "StepCount",
    "VQEResult",
    "__version__",
    "compile_subcircuit",
    "execute",
    "lower_sequence",
    "parse",
    "plan",
    "resolve_pulse",
    "run_vqe",
]
