"""Simulated control backend: link costs, buffering, drift, execution.

The backend executes a :class:`~qbatch.batching.BatchPlan` and charges
every run to a four-term cost identity::

    elapsed = steps * comm_latency
            + compilations * compile_time
            + upload_words / upload_rate
            + sum(run pulse duration * shots)

Each term is accumulated separately and reported separately, so exact
statements about differences between plans never depend on float
associativity across terms.  Realized step counts are re-measured
during execution and checked against the plan's accounting; a mismatch
is a bug, not a tolerance.

Resource model:

* The host-side compilation stream holds at most ``stream_capacity``
  compiled-but-unsent results (unbatched mode compiles per run; batched
  modes compiled everything at planning time).
* The control-side execution buffer holds the unit being played plus at
  most one staged unit, and admission never exceeds
  ``buffer_capacity_words``.  A single unit larger than the buffer
  cannot run at all: ``BufferOverflow``.
* Uploads cross the link once per communication step.  Replays of an
  already-uploaded unit (later parameter rows in batched modes) stage
  from control memory and cost no link traffic.

Calibration drift: detuning grows linearly in time since the last
recalibration (plus an optional random walk), and each entangling gate
suffers a symmetric two-qubit depolarizing error whose probability is
quadratic in the detuning at the start of the run.  Error patterns are
sampled per shot from a per-run generator keyed by (subcircuit, row),
so identical trajectories get identical noise regardless of batching
mode or execution order.
"""

from __future__ import annotations

import math
import itertools
import queue
import threading
import time
from dataclasses import dataclass
from typing import Union

import numpy as np

from .batching import BatchPlan, Mode, ResolvedUnit, StepCount, resolve_unit
from .bytecode import CompilationStream
from .emulator import apply_unitary, bitstring, probabilities, pulse_unitary, zero_state
from .errors import BufferOverflow, UnknownJobId, ValidationError

__all__ = [
    "SimulatedClock",
    "WallClock",
    "HardwareConfig",
    "DriftModel",
    "RunResult",
    "ExecutionReport",
    "Hardware",
    "execute",
    "JobService",
]


class SimulatedClock:
    """Deterministic clock: time passes only when costs are charged."""

    def __init__(self) -> None:
        self._now = 0.0

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        self._now += seconds


class WallClock:
    """Real monotonic time; charged costs do not consume extra wall time."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        # Wall time passes on its own; modeled costs are bookkeeping only.


@dataclass(frozen=True)
class HardwareConfig:
    """Link and buffer parameters of the simulated control system."""

    buffer_capacity_words: int = 4096
    comm_latency_s: float = 2.0
    compile_time_s: float = 0.0
    upload_rate_words_per_s: float = math.inf
    clock: str = "simulated"

    def __post_init__(self) -> None:
        if self.buffer_capacity_words < 1:
            raise ValidationError("buffer capacity must be at least one word")
        if self.comm_latency_s < 0 or self.compile_time_s < 0:
            raise ValidationError("latencies cannot be negative")
        if not self.upload_rate_words_per_s > 0:
            raise ValidationError("upload rate must be positive (inf for a free link)")
        if self.clock not in ("simulated", "wall"):
            raise ValidationError(f"clock must be 'simulated' or 'wall', not {self.clock!r}")

    def make_clock(self) -> Union[SimulatedClock, WallClock]:
        return SimulatedClock() if self.clock == "simulated" else WallClock()


@dataclass(frozen=True)
class DriftModel:
    """Calibration drift and the gate error it induces.

    Detuning in Hz after ``t`` seconds without recalibration is
    ``rate * t`` plus an optional zero-mean random walk.  The error
    probability of one entangling gate is ``coefficient * detuning**2``
    clipped to [0, 1].  Defaults: 15000 Hz of drift across a 900 s idle
    stretch, with a 3000 Hz detuning costing 2 percent error (so the
    default rate crosses that reference after 180 s).
    """

    rate_hz_per_s: float = 15000.0 / 900.0
    walk_sigma_hz_per_sqrt_s: float = 0.0
    reference_detuning_hz: float = 3000.0
    reference_error: float = 0.02

    def __post_init__(self) -> None:
        if self.rate_hz_per_s < 0 or self.walk_sigma_hz_per_sqrt_s < 0:
            raise ValidationError("drift rates cannot be negative")
        if not 0 < self.reference_error <= 1 or self.reference_detuning_hz <= 0:
            raise ValidationError("reference point must have detuning > 0 and error in (0, 1]")

    @property
    def error_coefficient(self) -> float:
        return self.reference_error / self.reference_detuning_hz**2

    def error_probability(self, detuning_hz: float) -> float:
        return float(min(1.0, max(0.0, self.error_coefficient * detuning_hz**2)))


@dataclass(frozen=True)
class RunResult:
    """Outcome counts and noise diagnostics for one trajectory."""

    run_index: int
    row_index: int
    subcircuit_index: int
    shots: int
    counts: dict[str, int]
    duration_us: float
    detuning_hz: float
    ms_error_prob: float
    n_ms_gates: int

    def as_dict(self) -> dict[str, object]:
        return {
            "run_index": self.run_index,
            "row_index": self.row_index,
            "subcircuit_index": self.subcircuit_index,
            "shots": self.shots,
            "counts": dict(sorted(self.counts.items())),
            "duration_us": self.duration_us,
            "detuning_hz": self.detuning_hz,
            "ms_error_prob": self.ms_error_prob,
            "n_ms_gates": self.n_ms_gates,
        }


@dataclass(frozen=True)
class ExecutionReport:
    """Everything one execution did and what it cost."""

    mode: str
    shots: int
    seed: int
    realized: StepCount
    comm_seconds: float
    compile_seconds: float
    upload_seconds: float
    pulse_seconds: float
    started_s: float
    finished_s: float
    buffer_capacity_words: int
    buffer_high_water_words: int
    stream_capacity: int
    stream_high_water: int
    stream_compilations: int
    runs: tuple[RunResult, ...]

    @property
    def elapsed_s(self) -> float:
        return self.finished_s - self.started_s

    def cost_terms(self) -> dict[str, float]:
        return {
            "comm_seconds": self.comm_seconds,
            "compile_seconds": self.compile_seconds,
            "upload_seconds": self.upload_seconds,
            "pulse_seconds": self.pulse_seconds,
        }

    def mean_ms_error(self) -> float:
        """Gate-weighted mean entangling error probability."""
        total_gates = sum(r.n_ms_gates for r in self.runs)
        if total_gates == 0:
            return 0.0
        return sum(r.ms_error_prob * r.n_ms_gates for r in self.runs) / total_gates

    def as_dict(self) -> dict[str, object]:
        return {
            "mode": self.mode,
            "shots": self.shots,
            "seed": self.seed,
            "step_count": self.realized.as_dict(),
            "costs": {**self.cost_terms(), "elapsed_s": self.elapsed_s},
            "clock": {"started_s": self.started_s, "finished_s": self.finished_s},
            "buffer": {
                "capacity_words": self.buffer_capacity_words,
                "high_water_words": self.buffer_high_water_words,
            },
            "stream": {
                "capacity": self.stream_capacity,
                "high_water": self.stream_high_water,
                "compilations": self.stream_compilations,
            },
            "runs": [r.as_dict() for r in self.runs],
        }


class _ExecutionBuffer:
    """Word-capacity admission control with one staged unit of pipelining."""

    def __init__(self, capacity_words: int):
        self.capacity = capacity_words
        self.running_words = 0
        self.high_water = 0

    def admit(self, words: int) -> None:
        if words > self.capacity:
            raise BufferOverflow(
                f"unit of {words} words cannot fit the {self.capacity}-word buffer"
            )
        if self.running_words + words <= self.capacity:
            # Staged while the previous unit still occupies its words.
            occupancy = self.running_words + words
        else:
            # No room to pipeline: wait for the previous unit to free.
            occupancy = words
        self.high_water = max(self.high_water, occupancy)
        self.running_words = words


_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _counts_dict(vector: np.ndarray, n_qubits: int) -> dict[str, int]:
    return {
        bitstring(i, n_qubits): int(c) for i, c in enumerate(vector) if c
    }


class Hardware:
    """A control system whose clock and calibration persist across jobs.

    Executing a plan advances the hardware clock by the plan's full cost;
    drift keeps accumulating until :meth:`recalibrate` is called.  This
    is what makes back-to-back experiments on one instance meaningful.
    """

    def __init__(
        self,
        config: HardwareConfig | None = None,
        drift: DriftModel | None = None,
        seed: int = 0,
    ):
        self.config = config or HardwareConfig()
        self.drift = drift
        self.seed = seed
        self._clock = self.config.make_clock()
        self._calibrated_at = self._clock.now()
        self._walk_detuning_hz = 0.0
        self._walk_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(0x57A1F,))
        )
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._clock.now()

    def detuning_hz(self) -> float:
        if self.drift is None:
            return 0.0
        linear = self.drift.rate_hz_per_s * (self._clock.now() - self._calibrated_at)
        return linear + self._walk_detuning_hz

    def recalibrate(self, duration_s: float = 0.0) -> None:
        """Re-zero the detuning; the procedure itself takes clock time."""
        with self._lock:
            if duration_s < 0:
                raise ValidationError("recalibration cannot take negative time")
            self._clock.advance(duration_s)
            self._calibrated_at = self._clock.now()
            self._walk_detuning_hz = 0.0

    def _advance(self, seconds: float) -> None:
        self._clock.advance(seconds)
        if self.drift is not None and self.drift.walk_sigma_hz_per_sqrt_s > 0 and seconds > 0:
            step_sigma = self.drift.walk_sigma_hz_per_sqrt_s * math.sqrt(seconds)
            self._walk_detuning_hz += float(self._walk_rng.normal(0.0, step_sigma))

    # -- execution ---------------------------------------------------------

    def execute(
        self,
        plan: BatchPlan,
        shots: int,
        seed: int | None = None,
        stream_capacity: int = 8,
    ) -> ExecutionReport:
        """Run every trajectory of a plan and account for every cost."""
        if not isinstance(plan, BatchPlan):
            raise ValidationError(f"execute needs a BatchPlan, got {type(plan).__name__}")
        if shots < 0:
            raise ValidationError(f"shots cannot be negative, got {shots}")
        run_seed = self.seed if seed is None else seed

        with self._lock:
            return self._execute_locked(plan, shots, run_seed, stream_capacity)

    def _execute_locked(
        self, plan: BatchPlan, shots: int, seed: int, stream_capacity: int
    ) -> ExecutionReport:
        cfg = self.config
        started = self._clock.now()
        comm = compile_s = upload_s = pulse_s = 0.0
        realized_steps = realized_compiles = realized_words = 0
        buffer = _ExecutionBuffer(cfg.buffer_capacity_words)
        results: list[RunResult] = []

        stream: CompilationStream | None = None
        stream_high = stream_compiles = 0

        if plan.mode is Mode.UNBATCHED:
            stream = CompilationStream(plan.run_compilers(), stream_capacity)
            for run in plan.runs:
                table, unit = stream.pull()
                words = table.word_count() + unit.word_count()
                step_cost = cfg.comm_latency_s
                comp_cost = cfg.compile_time_s
                up_cost = words / cfg.upload_rate_words_per_s
                comm += step_cost
                compile_s += comp_cost
                upload_s += up_cost
                realized_steps += 1
                realized_compiles += 1
                realized_words += words
                self._advance(step_cost + comp_cost + up_cost)
                buffer.admit(unit.word_count())
                resolved = resolve_unit(unit, table, run.env, plan.library)
                results.append(self._play(plan, run, resolved, shots, seed))
                run_pulse_s = resolved.duration_us() * shots / 1e6
                pulse_s += run_pulse_s
                self._advance(run_pulse_s)
            stream_high = stream.resident_high_water
            stream_compiles = stream.compiled_count
        else:
            assert plan.shared_table is not None
            words = plan.shared_table.word_count() + sum(
                u.word_count() for u in plan.shared_units
            )
            n_compiles = plan.n_subcircuits
            step_cost = cfg.comm_latency_s
            comp_cost = n_compiles * cfg.compile_time_s
            up_cost = words / cfg.upload_rate_words_per_s
            comm += step_cost
            compile_s += comp_cost
            upload_s += up_cost
            realized_steps += 1
            realized_compiles += n_compiles
            realized_words += words
            self._advance(step_cost + comp_cost + up_cost)
            for run in plan.runs:
                unit = plan.shared_units[run.subcircuit_index]
                buffer.admit(unit.word_count())
                resolved = plan.resolve_run(run)
                results.append(self._play(plan, run, resolved, shots, seed))
                run_pulse_s = resolved.duration_us() * shots / 1e6
                pulse_s += run_pulse_s
                self._advance(run_pulse_s)

        realized = StepCount(realized_steps, realized_compiles, realized_words)
        if realized != plan.step_count:
            raise ValidationError(
                f"realized cost {realized.as_dict()} disagrees with the plan's "
                f"accounting {plan.step_count.as_dict()}"
            )

        return ExecutionReport(
            mode=plan.mode.value,
            shots=shots,
            seed=seed,
            realized=realized,
            comm_seconds=comm,
            compile_seconds=compile_s,
            upload_seconds=upload_s,
            pulse_seconds=pulse_s,
            started_s=started,
            finished_s=self._clock.now(),
            buffer_capacity_words=cfg.buffer_capacity_words,
            buffer_high_water_words=buffer.high_water,
            stream_capacity=stream_capacity if stream is not None else 0,
            stream_high_water=stream_high,
            stream_compilations=stream_compiles,
            runs=tuple(results),
        )

    def _play(
        self,
        plan: BatchPlan,
        run,  # RunSpec
        resolved: ResolvedUnit,
        shots: int,
        seed: int,
    ) -> RunResult:
        """Sample one trajectory, with drift-induced entangling errors."""
        lib = plan.library
        n = plan.n_qubits
        detuning = self.detuning_hz()
        error_p = self.drift.error_probability(detuning) if self.drift else 0.0
        ms_positions = [
            i
            for i, p in enumerate(resolved.pulses)
            if p.tones and lib.kind_of(p.kind) == "ms"
        ]
        rng = np.random.default_rng(
            np.random.SeedSequence(
                entropy=seed, spawn_key=(run.subcircuit_index, run.row_index)
            )
        )

        counts = np.zeros(2**n, dtype=np.int64)
        if shots > 0 and (error_p == 0.0 or not ms_positions):
            state = zero_state(n)
            for pulse in resolved.pulses:
                if pulse.tones:
                    state = apply_unitary(state, pulse_unitary(pulse, lib), pulse.qubits)
            counts = rng.multinomial(shots, probabilities(state))
        elif shots > 0:
            m = len(ms_positions)
            hit = rng.random((shots, m)) < error_p
            pauli_pick = rng.integers(1, 16, size=(shots, m))
            patterns = np.where(hit, pauli_pick, 0)
            unique, group_sizes = np.unique(patterns, axis=0, return_counts=True)
            for pattern, group in zip(unique, group_sizes):
                injections = dict(zip(ms_positions, pattern))
                state = zero_state(n)
                for i, pulse in enumerate(resolved.pulses):
                    if pulse.tones:
                        state = apply_unitary(state, pulse_unitary(pulse, lib), pulse.qubits)
                    code = injections.get(i, 0)
                    if code:
                        pa, pb = divmod(int(code), 4)
                        err = np.kron(_PAULI[pa], _PAULI[pb])
                        state = apply_unitary(state, err, pulse.qubits)
                counts += rng.multinomial(int(group), probabilities(state))

        return RunResult(
            run_index=run.run_index,
            row_index=run.row_index,
            subcircuit_index=run.subcircuit_index,
            shots=shots,
            counts=_counts_dict(counts, n),
            duration_us=resolved.duration_us(),
            detuning_hz=detuning,
            ms_error_prob=error_p if ms_positions else 0.0,
            n_ms_gates=len(ms_positions),
        )


def execute(
    plan: BatchPlan,
    shots: int,
    config: HardwareConfig | None = None,
    drift: DriftModel | None = None,
    seed: int = 0,
    stream_capacity: int = 8,
) -> ExecutionReport:
    """One-shot convenience: fresh hardware, one plan, one report."""
    return Hardware(config, drift, seed).execute(plan, shots, stream_capacity=stream_capacity)


# --------------------------------------------------------------------------
# job service


@dataclass
class _Job:
    job_id: str
    plan: BatchPlan
    shots: int
    seed: int | None
    status: str = "queued"
    report: ExecutionReport | None = None
    error: str | None = None


class JobService:
    """Asynchronous front end over one :class:`Hardware` instance.

    Jobs validate at submission (bad requests fail fast with the
    underlying error type named in the message), run in order on a
    worker thread, and hold their reports until released.
    """

    def __init__(self, hardware: Hardware | None = None):
        self.hardware = hardware or Hardware()
        self._jobs: dict[str, _Job] = {}
        self._queue: "queue.Queue[str | None]" = queue.Queue()
        self._lock = threading.Lock()
        self._counter = itertools.count(1)
        self._worker = threading.Thread(target=self._run_worker, daemon=True)
        self._worker.start()
        self._closed = False

    def submit(self, plan: BatchPlan, shots: int, seed: int | None = None) -> str:
        if self._closed:
            raise ValidationError("job service is closed")
        try:
            if not isinstance(plan, BatchPlan):
                raise TypeError(f"expected a BatchPlan, got {type(plan).__name__}")
            if not isinstance(shots, int) or isinstance(shots, bool) or shots < 0:
                raise TypeError(f"shots must be a nonnegative integer, got {shots!r}")
            if plan.mode is not Mode.UNBATCHED and plan.shared_table is None:
                raise TypeError("batched plan is missing its compiled upload")
        except Exception as exc:
            raise ValidationError(f"job rejected: {exc} ({type(exc).__name__})") from exc
        with self._lock:
            job_id = f"job-{next(self._counter):04d}"
            self._jobs[job_id] = _Job(job_id, plan, shots, seed)
        self._queue.put(job_id)
        return job_id

    def _run_worker(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            with self._lock:
                job = self._jobs.get(job_id)
                if job is None:  # released before it ran
                    continue
                job.status = "running"
            try:
                report = self.hardware.execute(job.plan, job.shots, seed=job.seed)
            except Exception as exc:
                with self._lock:
                    job.status = "error"
                    job.error = f"{type(exc).__name__}: {exc}"
            else:
                with self._lock:
                    job.status = "done"
                    job.report = report

    def poll(self, job_id: str) -> dict[str, object]:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJobId(f"no job '{job_id}'")
            out: dict[str, object] = {"job_id": job_id, "status": job.status}
            if job.status == "done" and job.report is not None:
                out["report"] = job.report.as_dict()
            if job.status == "error":
                out["error"] = job.error
            return out

    def wait(self, job_id: str, timeout_s: float = 60.0) -> dict[str, object]:
        """Poll until the job leaves the queue or the timeout passes."""
        deadline = time.monotonic() + timeout_s
        while True:
            state = self.poll(job_id)
            if state["status"] in ("done", "error"):
                return state
            if time.monotonic() > deadline:
                raise TimeoutError(f"job '{job_id}' still {state['status']}")
            time.sleep(0.002)

    def release(self, job_id: str) -> None:
        with self._lock:
            if job_id not in self._jobs:
                raise UnknownJobId(f"no job '{job_id}'")
            del self._jobs[job_id]

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._queue.put(None)
            self._worker.join(timeout=5.0)

    def __enter__(self) -> "JobService":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
