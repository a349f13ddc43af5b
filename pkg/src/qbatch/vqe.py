"""Two-qubit variational ground-state search on the batched stack.

The experiment prepares a one-parameter entangled family with two
opposite-sign entangling pulses around a virtual-z rotation::

    MS(0, pi/2); Rz(q1, theta); MS(0, -pi/2); R(q0, bx0, bz0); R(q1, bx1, bz1)

which realizes cos(theta/2)|00> - sin(theta/2)|11> up to global phase.
The trailing rotations change the measurement basis: every qubit of a
Pauli term maps to fixed (axis, angle) pairs, with the Z/identity case
resolving to a zero angle whose pulse is elided at playback.  All basis
angles are lets, so one symbolic compilation covers every measurement
setting of every optimizer iteration; only the override rows change.

Measuring a k-term Hamiltonian therefore takes k trajectory rows per
energy evaluation: one communication step batched, k steps unbatched.
That k-to-1 ratio, multiplied by optimizer iterations, is the whole
argument for batching and what the acceptance arithmetic checks.

The optimizer is a deliberately frugal 1-D compass search (accept /
flip / shrink) that spends exactly one energy evaluation per iteration,
so iteration counts translate directly into communication-step counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

import numpy as np

from .batching import Mode, StepCount, plan
from .control import ExecutionReport, Hardware
from .emulator import run_gates
from .errors import ValidationError
from .lang.ast import Program
from .lang.builder import ProgramBuilder
from .lang.transforms import resolve_gates, segment
from .pulses import PulseLibrary

__all__ = [
    "PAULI_MATRICES",
    "BASIS_ROTATIONS",
    "PauliHamiltonian",
    "build_ansatz_program",
    "measurement_overrides",
    "term_expectation",
    "energy_from_report",
    "exact_energy",
    "VQEResult",
    "run_vqe",
]

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# (axis phi, angle theta) of the pre-measurement rotation that maps the
# operator onto Z.  Identity and Z need no rotation; the zero angle is
# legal here only because it stays symbolic until playback resolution.
BASIS_ROTATIONS = {
    "I": (0.0, 0.0),
    "Z": (0.0, 0.0),
    "X": (math.pi / 2.0, -math.pi / 2.0),
    "Y": (0.0, math.pi / 2.0),
}


class PauliHamiltonian:
    """A real linear combination of Pauli strings.

    Label character ``i`` acts on qubit ``i`` (qubit 0 is the least
    significant measurement bit).  The identity string contributes a
    constant energy offset and is never measured.
    """

    def __init__(self, n_qubits: int, terms: Mapping[str, float]):
        if n_qubits < 1:
            raise ValidationError("a Hamiltonian needs at least one qubit")
        self.n_qubits = n_qubits
        self._terms: dict[str, float] = {}
        for label, coeff in terms.items():
            if len(label) != n_qubits or any(c not in PAULI_MATRICES for c in label):
                raise ValidationError(
                    f"term '{label}' is not a {n_qubits}-character string over I, X, Y, Z"
                )
            if isinstance(coeff, bool) or not isinstance(coeff, (int, float)):
                raise ValidationError(f"term '{label}': coefficient must be a number")
            if not math.isfinite(coeff):
                raise ValidationError(f"term '{label}': coefficient must be finite")
            self._terms[label] = self._terms.get(label, 0.0) + float(coeff)

    @staticmethod
    def from_json(text: str) -> "PauliHamiltonian":
        """Parse either supported document shape.

        The list form is the interchange format: ``[{"pauli": "XZ",
        "coeff": -0.39}, ...]`` with repeated labels summed.  The object
        form ``{"n_qubits": N, "terms": {label: coeff}}`` is what the
        packaged example uses.
        """
        doc = json.loads(text)
        if isinstance(doc, list):
            if not doc:
                raise ValidationError("Hamiltonian term list is empty")
            terms: dict[str, float] = {}
            for i, entry in enumerate(doc):
                if not isinstance(entry, dict) or "pauli" not in entry or "coeff" not in entry:
                    raise ValidationError(
                        f"term {i}: expected an object with 'pauli' and 'coeff' keys"
                    )
                label, coeff = entry["pauli"], entry["coeff"]
                if not isinstance(label, str) or not label:
                    raise ValidationError(f"term {i}: 'pauli' must be a nonempty string")
                if isinstance(coeff, bool) or not isinstance(coeff, (int, float)):
                    raise ValidationError(f"term {i}: 'coeff' must be a number")
                terms[label] = terms.get(label, 0.0) + float(coeff)
            n = len(next(iter(terms)))
            return PauliHamiltonian(n, terms)
        if not isinstance(doc, dict) or "terms" not in doc:
            raise ValidationError("Hamiltonian document needs a 'terms' object or a term list")
        terms_obj = doc["terms"]
        if not isinstance(terms_obj, dict) or not terms_obj:
            raise ValidationError("'terms' must be a nonempty object of label: coefficient")
        n = doc.get("n_qubits", len(next(iter(terms_obj))))
        return PauliHamiltonian(int(n), terms_obj)

    @staticmethod
    def from_file(path: str) -> "PauliHamiltonian":
        with open(path, "r", encoding="utf-8") as fh:
            return PauliHamiltonian.from_json(fh.read())

    @staticmethod
    def example() -> "PauliHamiltonian":
        text = resources.files("qbatch.data").joinpath("example_hamiltonian.json").read_text()
        return PauliHamiltonian.from_json(text)

    @property
    def identity_label(self) -> str:
        return "I" * self.n_qubits

    @property
    def identity_coefficient(self) -> float:
        return self._terms.get(self.identity_label, 0.0)

    def measured_terms(self) -> list[tuple[str, float]]:
        """Non-identity terms in declaration order: one trajectory row each."""
        return [(l, c) for l, c in self._terms.items() if l != self.identity_label]

    def items(self) -> list[tuple[str, float]]:
        return list(self._terms.items())

    def matrix(self) -> np.ndarray:
        """Dense matrix under the qubit-0-is-LSB index convention."""
        dim = 2**self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for label, coeff in self._terms.items():
            term = np.eye(1, dtype=complex)
            # Highest qubit is the most significant index bit, so it is
            # the leftmost kron factor.
            for c in reversed(label):
                term = np.kron(term, PAULI_MATRICES[c])
            out += coeff * term
        return out

    def ground_energy(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix())[0])


def build_ansatz_program(theta: float = 0.5) -> Program:
    """The variational circuit with symbolic angle and basis lets."""
    b = ProgramBuilder()
    q = b.register("q", 2)
    th = b.let("theta", theta)
    bx0 = b.let("bx0", 0.0)
    bz0 = b.let("bz0", 0.0)
    bx1 = b.let("bx1", 0.0)
    bz1 = b.let("bz1", 0.0)
    with b.subcircuit():
        b.gate("MS", q[0], q[1], 0.0, math.pi / 2.0)
        b.gate("Rz", q[1], th)
        b.gate("MS", q[0], q[1], 0.0, -math.pi / 2.0)
        b.gate("R", q[0], bx0, bz0)
        b.gate("R", q[1], bx1, bz1)
    return b.build()


def measurement_overrides(
    hamiltonian: PauliHamiltonian, theta: float
) -> dict[str, object]:
    """Override rows mapping each measured term to its basis angles."""
    if hamiltonian.n_qubits != 2:
        raise ValidationError("the two-qubit ansatz covers two-qubit Hamiltonians only")
    terms = hamiltonian.measured_terms()
    if not terms:
        raise ValidationError("nothing to measure: Hamiltonian is a constant")
    rows: dict[str, list[float]] = {"bx0": [], "bz0": [], "bx1": [], "bz1": []}
    for label, _ in terms:
        (bx0, bz0), (bx1, bz1) = BASIS_ROTATIONS[label[0]], BASIS_ROTATIONS[label[1]]
        rows["bx0"].append(bx0)
        rows["bz0"].append(bz0)
        rows["bx1"].append(bx1)
        rows["bz1"].append(bz1)
    return {"theta": theta, **rows}


def term_expectation(label: str, counts: Mapping[str, int]) -> float:
    """Sign-weighted average over measured bitstrings for one term.

    The run was already rotated into the term's eigenbasis, so each
    non-identity qubit contributes its Z eigenvalue (+1 for bit 0, -1
    for bit 1).  Bitstrings are printed with qubit 0 rightmost.
    """
    total = sum(counts.values())
    if total == 0:
        raise ValidationError(f"term '{label}': no shots recorded")
    acc = 0
    for bits, count in counts.items():
        sign = 1
        for qubit, c in enumerate(label):
            if c != "I" and bits[len(bits) - 1 - qubit] == "1":
                sign = -sign
        acc += sign * count
    return acc / total


def energy_from_report(
    hamiltonian: PauliHamiltonian, report: ExecutionReport
) -> tuple[float, float, dict[str, float]]:
    """Energy estimate, standard error, and per-term expectations.

    Rows arrive in measured-term order (the plan preserves override row
    order).  The standard error propagates each term's single-row
    binomial variance: var(<P>) = (1 - <P>^2) / shots.
    """
    terms = hamiltonian.measured_terms()
    if len(report.runs) != len(terms):
        raise ValidationError(
            f"report has {len(report.runs)} runs but the Hamiltonian measures {len(terms)} terms"
        )
    energy = hamiltonian.identity_coefficient
    variance = 0.0
    expectations: dict[str, float] = {}
    for (label, coeff), run in zip(terms, report.runs):
        value = term_expectation(label, run.counts)
        expectations[label] = value
        energy += coeff * value
        variance += coeff**2 * max(0.0, 1.0 - value**2) / max(1, run.shots)
    return energy, math.sqrt(variance), expectations


def exact_energy(
    hamiltonian: PauliHamiltonian,
    theta: float,
    library: PulseLibrary | None = None,
) -> float:
    """Noise-free energy of the ansatz state, via the dense matrix.

    This route shares no arithmetic with the sampled pipeline: it binds
    theta into the bare circuit (no basis rotations), runs the gate
    route of the emulator, and contracts against the Hamiltonian matrix.
    """
    from .lang.ast import RegisterMap
    from .lang.transforms import bind, expand

    program = bind(build_ansatz_program(), {"theta": theta})
    expanded = expand(program)
    registers = RegisterMap(expanded.registers)
    sub = segment(expanded)[0]
    env = {name: lv.value for name, lv in expanded.lets.items()}
    gates = resolve_gates(sub, registers, env=env)
    # Basis rotations resolve to zero angle here; the gate route cannot
    # play a zero-duration rotation, so drop them the same way playback
    # elides the toneless pulse.
    gates = [g for g in gates if not (g.name == "R" and g.params[1] == 0.0)]
    state = run_gates(gates, expanded.n_qubits)  # type: ignore[arg-type]
    return float(np.real(state.conj() @ hamiltonian.matrix() @ state))


@dataclass(frozen=True)
class VQEResult:
    """Optimization trace plus the cost ledger of every evaluation."""

    mode: str
    shots: int
    thetas: tuple[float, ...]
    energies: tuple[float, ...]
    stderrs: tuple[float, ...]
    best_theta: float
    best_energy: float
    best_stderr: float
    converged: bool
    final_step_size: float
    planned: StepCount
    realized: StepCount
    reports: tuple[ExecutionReport, ...]

    @property
    def iterations(self) -> int:
        return len(self.thetas)

    def as_dict(self) -> dict[str, object]:
        return {
            "mode": self.mode,
            "shots": self.shots,
            "iterations": self.iterations,
            "thetas": list(self.thetas),
            "energies": list(self.energies),
            "stderrs": list(self.stderrs),
            "best_theta": self.best_theta,
            "best_energy": self.best_energy,
            "best_stderr": self.best_stderr,
            "converged": self.converged,
            "final_step_size": self.final_step_size,
            "planned": self.planned.as_dict(),
            "realized": self.realized.as_dict(),
        }


def run_vqe(
    hamiltonian: PauliHamiltonian | None = None,
    hardware: Hardware | None = None,
    mode: Mode | str = Mode.OVERRIDE,
    shots: int = 1000,
    iterations: int = 18,
    seed: int = 0,
    theta0: float = 0.5,
    step0: float = 0.4,
    shrink: float = 0.5,
    tolerance: float = 1e-4,
    exact: bool = False,
    library: PulseLibrary | None = None,
) -> VQEResult:
    """Compass-search the ansatz angle, one energy evaluation per iteration.

    Search state is (theta, step, direction).  Each iteration evaluates
    the single candidate theta + direction * step: an improvement is
    accepted and the direction kept; the first failure at a step size
    flips direction; the second shrinks the step.  The loop stops early
    only when the step falls below ``tolerance``; an exhausted budget
    reports ``converged=False`` rather than raising, since a fixed
    iteration budget is itself a legitimate experimental design.

    With ``exact=True`` every plan is still built and accounted (the
    communication ledger is the point of the experiment) but energies
    come from the noise-free emulator instead of sampled counts.
    """
    ham = hamiltonian or PauliHamiltonian.example()
    hw = hardware or Hardware()
    if isinstance(mode, str):
        mode = Mode.parse(mode)
    if iterations < 1:
        raise ValidationError("need at least one optimizer iteration")
    program = build_ansatz_program(theta0)
    lib = library or PulseLibrary.default()

    thetas: list[float] = []
    energies: list[float] = []
    stderrs: list[float] = []
    reports: list[ExecutionReport] = []
    planned = StepCount()
    realized = StepCount()

    def evaluate(theta: float, iteration: int) -> tuple[float, float]:
        nonlocal planned, realized
        overrides = measurement_overrides(ham, theta)
        p = plan(program, mode, overrides, library=lib)
        report = hw.execute(p, shots, seed=seed + iteration)
        planned += p.step_count
        realized += report.realized
        reports.append(report)
        if exact:
            return exact_energy(ham, theta, lib), 0.0
        energy, stderr, _ = energy_from_report(ham, report)
        return energy, stderr

    theta = theta0
    best_energy, best_stderr = evaluate(theta, 0)
    best_theta = theta
    thetas.append(theta)
    energies.append(best_energy)
    stderrs.append(best_stderr)

    step = step0
    direction = 1.0
    flipped = False
    converged = False
    iteration = 1
    while iteration < iterations:
        candidate = best_theta + direction * step
        energy, stderr = evaluate(candidate, iteration)
        thetas.append(candidate)
        energies.append(energy)
        stderrs.append(stderr)
        if energy < best_energy:
            best_energy, best_stderr, best_theta = energy, stderr, candidate
            flipped = False
        elif not flipped:
            direction = -direction
            flipped = True
        else:
            step *= shrink
            direction = -direction
            flipped = False
        iteration += 1
        if step < tolerance:
            converged = True
            break

    return VQEResult(
        mode=mode.value,
        shots=shots,
        thetas=tuple(thetas),
        energies=tuple(energies),
        stderrs=tuple(stderrs),
        best_theta=best_theta,
        best_energy=best_energy,
        best_stderr=best_stderr,
        converged=converged,
        final_step_size=step,
        planned=planned,
        realized=realized,
        reports=tuple(reports),
    )
