"""Shared builders for the test suite."""

from __future__ import annotations

import math

import numpy as np

from qbatch.batching import OverrideSet
from qbatch.lang import Program, ProgramBuilder

TWO_SUBCIRCUIT_SOURCE = """\
// two subcircuits over one register
register q[2]
let angle 0.7

subcircuit {
    R q[0] 0.0 angle
    MS q[0] q[1] 0.0 1.5707963267948966
}
subcircuit {
    Rz q[1] angle
    R q[1] 1.5707963267948966 angle
}
"""


def ghz_like_program(n_subcircuits: int = 1) -> Program:
    """A fixed two-qubit circuit repeated across subcircuits."""
    b = ProgramBuilder()
    q = b.register("q", 2)
    for _ in range(n_subcircuits):
        with b.subcircuit():
            b.gate("R", q[0], 0.0, math.pi / 2.0)
            b.gate("MS", q[0], q[1], 0.0, math.pi / 2.0)
    return b.build()


def random_program(rng: np.random.Generator) -> tuple[Program, OverrideSet]:
    """A random small program plus overrides that zip into several rows.

    Angles avoid exact zero so every gate lowers to a real pulse in
    every mode; magnitudes exercise entangling-gate angle folding.
    """
    n_qubits = int(rng.integers(2, 4))
    n_subs = int(rng.integers(1, 4))
    n_rows = int(rng.integers(2, 4))

    b = ProgramBuilder()
    q = b.register("q", n_qubits)
    a = b.let("a", 0.3)
    c = b.let("c", 1.1)

    for _ in range(n_subs):
        with b.subcircuit():
            for _ in range(int(rng.integers(2, 7))):
                kind = rng.choice(["R", "Rz", "MS"])
                if kind == "R":
                    target = int(rng.integers(0, n_qubits))
                    theta = a if rng.random() < 0.3 else _nonzero_angle(rng, math.pi)
                    b.gate("R", q[target], float(rng.uniform(0.0, 2.0 * math.pi)), theta)
                elif kind == "Rz":
                    target = int(rng.integers(0, n_qubits))
                    theta = c if rng.random() < 0.3 else _nonzero_angle(rng, math.pi)
                    b.gate("Rz", q[target], theta)
                else:
                    qa, qb = rng.choice(n_qubits, size=2, replace=False)
                    theta = a if rng.random() < 0.2 else _nonzero_angle(rng, 2.5 * math.pi)
                    b.gate("MS", q[int(qa)], q[int(qb)], float(rng.uniform(0.0, 2.0 * math.pi)), theta)

    overrides = OverrideSet(
        {
            "a": [_nonzero_angle(rng, math.pi) for _ in range(n_rows)],
            "c": float(rng.uniform(0.1, 2.0)),
        }
    )
    return b.build(), overrides


def _nonzero_angle(rng: np.random.Generator, bound: float) -> float:
    while True:
        theta = float(rng.uniform(-bound, bound))
        if abs(theta) > 1e-3:
            return theta
