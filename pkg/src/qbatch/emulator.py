"""Statevector emulation of the native gate set.

Two independent evaluation routes are kept deliberately separate:

* The *gate route* applies closed-form unitaries straight from resolved
  gate calls.  Virtual-z gates are applied as diagonal matrices here.
* The *pulse route* reads playback-form pulse data (tones with numeric
  phases, frame offsets already folded in) and reconstructs each
  unitary from tone phases, amplitudes, and durations.

The two routes must agree on every measurement distribution; tests
enforce that rather than sharing code between the paths.

Index conventions, used everywhere downstream:

* Qubit 0 is the least significant bit of a basis-state index, so
  amplitude ``state[i]`` belongs to the outcome whose qubit-q bit is
  ``(i >> q) & 1``.
* Outcome strings print most significant bit first, i.e. qubit 0 is the
  rightmost character.

Global phase is never meaningful; comparisons go through
:func:`phase_aligned_distance`.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import MissingSlotValue, UnknownGate, UnsupportedQubitCount
from .lang.ast import LetRef, ResolvedGate
from .pulses import TWO_PI, PulseLibrary, PulseProgram, resolve_pulse

__all__ = [
    "MAX_QUBITS",
    "rotation_unitary",
    "virtual_z_unitary",
    "ms_unitary",
    "gate_unitary",
    "zero_state",
    "apply_unitary",
    "run_gates",
    "pulse_unitary",
    "run_pulses",
    "probabilities",
    "sample_counts",
    "bitstring",
    "z_product_expectation",
    "phase_aligned_distance",
]

MAX_QUBITS = 12

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)


def _axis(phi: float) -> np.ndarray:
    return math.cos(phi) * _X + math.sin(phi) * _Y


def rotation_unitary(phi: float, theta: float) -> np.ndarray:
    """Rotation by theta about the equatorial axis at azimuth phi."""
    return math.cos(theta / 2.0) * _I2 - 1.0j * math.sin(theta / 2.0) * _axis(phi)


def virtual_z_unitary(theta: float) -> np.ndarray:
    """Z rotation matching the phase-frame convention.

    Advancing a qubit's frame by theta makes every later equatorial
    pulse on it act about an axis shifted by +theta.  The diagonal that
    reproduces exactly that (up to a diagonal factor that measurement
    cannot see) is ``diag(1, exp(-i theta))``.
    """
    return np.array([[1.0, 0.0], [0.0, np.exp(-1.0j * theta)]], dtype=complex)


def ms_unitary(phi_a: float, phi_b: float, theta: float) -> np.ndarray:
    """Two-qubit Molmer-Sorensen interaction with per-ion axis phases.

    Basis order of the 4x4: the first listed qubit is the more
    significant index (kron order).
    """
    coupling = np.kron(_axis(phi_a), _axis(phi_b))
    return math.cos(theta / 2.0) * np.eye(4, dtype=complex) - 1.0j * math.sin(
        theta / 2.0
    ) * coupling


def gate_unitary(name: str, params: Sequence[float]) -> np.ndarray:
    """Closed-form unitary for one native gate call."""
    if name == "R":
        return rotation_unitary(params[0], params[1])
    if name == "Rz":
        return virtual_z_unitary(params[0])
    if name == "MS":
        # Both ions share the programmed axis phase; per-ion phases only
        # arise from frame offsets, which the pulse route handles.
        return ms_unitary(params[0], params[0], params[1])
    raise UnknownGate(f"no unitary defined for gate '{name}'")


# --------------------------------------------------------------------------
# state handling


def _check_qubit_count(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise UnsupportedQubitCount(
            f"emulation supports 1..{MAX_QUBITS} qubits, got {n_qubits}"
        )


def zero_state(n_qubits: int) -> np.ndarray:
    _check_qubit_count(n_qubits)
    state = np.zeros(2**n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def apply_unitary(state: np.ndarray, u: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply a 1- or 2-qubit unitary to the given qubits of a statevector."""
    n = state.size.bit_length() - 1
    if any(not 0 <= q < n for q in qubits):
        raise ValueError(f"qubit index out of range for {n}-qubit state: {qubits}")
    psi = state.reshape((2,) * n)
    if len(qubits) == 1:
        axis = n - 1 - qubits[0]
        psi = np.tensordot(u, psi, axes=([1], [axis]))
        psi = np.moveaxis(psi, 0, axis)
    elif len(qubits) == 2:
        qa, qb = qubits
        if qa == qb:
            raise ValueError("two-qubit unitary needs distinct qubits")
        axes = (n - 1 - qa, n - 1 - qb)
        u4 = u.reshape(2, 2, 2, 2)
        psi = np.tensordot(u4, psi, axes=([2, 3], axes))
        psi = np.moveaxis(psi, (0, 1), axes)
    else:
        raise ValueError(f"only 1- and 2-qubit unitaries are supported, got {len(qubits)}")
    return np.ascontiguousarray(psi).reshape(-1)


def _require_numeric(gate: ResolvedGate) -> tuple[float, ...]:
    params: list[float] = []
    for p in gate.params:
        if isinstance(p, LetRef):
            raise MissingSlotValue(
                f"gate '{gate.name}' still references let '{p.name}'; resolve it first"
            )
        params.append(float(p))
    return tuple(params)


def run_gates(gates: Sequence[ResolvedGate], n_qubits: int) -> np.ndarray:
    """Gate-route evaluation of one subcircuit: |0..0> through the gates."""
    state = zero_state(n_qubits)
    for gate in gates:
        u = gate_unitary(gate.name, _require_numeric(gate))
        state = apply_unitary(state, u, gate.qubits)
    return state


# --------------------------------------------------------------------------
# pulse route


def pulse_unitary(pulse: PulseProgram, library: PulseLibrary | None = None) -> np.ndarray:
    """Reconstruct a unitary from playback-form pulse data.

    Works purely from the tones: axis phases come from programmed tone
    phases (frame offsets must already be folded in), rotation angles
    from duration or amplitude.  The sign convention round-trips because
    a pi phase shift on the relevant tones is exactly the negative-angle
    unitary.
    """
    lib = library or PulseLibrary.default()
    if pulse.frame_offsets:
        raise ValueError("pulse still carries frame offsets; resolve it first")
    if pulse.is_symbolic:
        raise MissingSlotValue(
            f"pulse '{pulse.kind}' still has symbolic fields: resolve it first"
        )
    kind = lib.kind_of(pulse.kind)
    if not pulse.tones:
        dim = 2 ** len(pulse.qubits)
        return np.eye(dim, dtype=complex)
    if kind == "rotation":
        axis_tone, ref_tone = pulse.tones
        phi = float(axis_tone.phase) - float(ref_tone.phase)
        unit = lib.rotation_unit_time_us(pulse.kind)
        theta = float(axis_tone.duration_us) * math.pi / unit
        return rotation_unitary(phi, theta)
    if kind == "ms":
        a_red, _a_blue, b_red, _b_blue, _global = pulse.tones
        phi_a = float(a_red.phase)
        phi_b = float(b_red.phase)
        theta = float(a_red.amplitude) * TWO_PI / lib.ms_amplitude_scale(pulse.kind)
        return ms_unitary(phi_a, phi_b, theta)
    raise UnknownGate(f"no pulse unitary for kind '{pulse.kind}'")


def run_pulses(
    pulses: Sequence[PulseProgram],
    n_qubits: int,
    env: Mapping[str, Union[int, float]] | None = None,
    library: PulseLibrary | None = None,
) -> np.ndarray:
    """Pulse-route evaluation of one subcircuit.

    Accepts lowered pulse data in any form; anything symbolic or still
    carrying frame offsets is resolved against ``env`` first.
    """
    lib = library or PulseLibrary.default()
    state = zero_state(n_qubits)
    for pulse in pulses:
        if pulse.is_symbolic or pulse.frame_offsets:
            pulse = resolve_pulse(pulse, env or {}, lib)
        if not pulse.tones:
            continue
        u = pulse_unitary(pulse, lib)
        state = apply_unitary(state, u, pulse.qubits)
    return state


# --------------------------------------------------------------------------
# measurement


def probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(state) ** 2
    total = p.sum()
    if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"state norm drifted to {total}")
    return p / total


def sample_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial outcome counts over basis states."""
    p = np.clip(probs, 0.0, None)
    return rng.multinomial(shots, p / p.sum())


def bitstring(index: int, n_qubits: int) -> str:
    """Outcome label for a basis index, qubit 0 rightmost."""
    return format(index, f"0{n_qubits}b")


def z_product_expectation(probs: np.ndarray, qubits: Sequence[int]) -> float:
    """Expectation of a product of Z operators on the given qubits."""
    idx = np.arange(len(probs))
    sign = np.ones(len(probs))
    for q in qubits:
        sign *= 1.0 - 2.0 * ((idx >> q) & 1)
    return float(np.dot(sign, probs))


def phase_aligned_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Largest entry difference after the best global-phase alignment."""
    inner = np.trace(u.conj().T @ v)
    if abs(inner) < 1e-12:
        # Orthogonal under the trace inner product: no alignment helps.
        return float(np.max(np.abs(u - v)))
    phase = inner / abs(inner)
    return float(np.max(np.abs(u * phase - v)))
