"""Command-line front end.

Machine-readable JSON goes to standard output; human summaries go to
standard error.  Every subcommand is deterministic under a fixed seed
(the simulated clock is the default), so report files are golden-file
testable: identical inputs and flags produce byte-identical output.

Exit codes: 0 success, 1 validation error (bad flags, unreadable or
invalid inputs, planning failures), 2 execution error (failures after
the plan was accepted by the simulated control system).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from collections.abc import Sequence

from . import __version__
from .batching import Mode, OverrideSet, plan
from .bytecode import GateDataTable, compile_subcircuit, hexdump
from .control import DriftModel, Hardware, HardwareConfig
from .errors import (
    BufferOverflow,
    JaqalSyntaxError,
    MissingSlotValue,
    QbatchError,
    ValidationError,
)
from .lang import Program, parse
from .lang.ast import RegisterMap
from .lang.transforms import expand, resolve_gates, segment
from .pulses import PulseLibrary
from .vqe import PauliHamiltonian, run_vqe

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_EXECUTION = 2


class _ExecutionFailure(Exception):
    """Wraps an error raised after validation, for exit-code mapping."""

    def __init__(self, cause: BaseException):
        super().__init__(str(cause))
        self.cause = cause


class _Parser(argparse.ArgumentParser):
    """Argparse variant whose usage errors follow the exit-code contract."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: ValidationError: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _dump_json(doc: object) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(doc: object, out_path: str | None) -> None:
    """Print the JSON document and optionally write it atomically."""
    text = _dump_json(doc)
    sys.stdout.write(text)
    if out_path:
        _write_atomic(out_path, text)


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qbatch-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _load_library(args: argparse.Namespace) -> PulseLibrary:
    if getattr(args, "gate_defs", None):
        return PulseLibrary.from_file(args.gate_defs)
    return PulseLibrary.default()


def _parse_program(path: str, library: PulseLibrary) -> tuple[Program, str]:
    text = _read_text(path)
    return parse(text, library.signatures()), text


def _parse_drift(spec: str) -> DriftModel | None:
    """``off`` disables drift, ``on`` uses defaults, a path loads fields."""
    if spec == "off":
        return None
    if spec == "on":
        return DriftModel()
    doc = json.loads(_read_text(spec))
    if not isinstance(doc, dict):
        raise ValidationError(f"drift file {spec} must hold a JSON object")
    allowed = {
        "rate_hz_per_s",
        "walk_sigma_hz_per_sqrt_s",
        "reference_detuning_hz",
        "reference_error",
    }
    unknown = set(doc) - allowed
    if unknown:
        raise ValidationError(
            f"drift file {spec}: unknown fields {sorted(unknown)} (expected {sorted(allowed)})"
        )
    return DriftModel(**doc)


def _drift_echo(drift: DriftModel | None) -> dict[str, float] | None:
    if drift is None:
        return None
    return {
        "rate_hz_per_s": drift.rate_hz_per_s,
        "walk_sigma_hz_per_sqrt_s": drift.walk_sigma_hz_per_sqrt_s,
        "reference_detuning_hz": drift.reference_detuning_hz,
        "reference_error": drift.reference_error,
    }


def _hardware_config(args: argparse.Namespace) -> HardwareConfig:
    return HardwareConfig(
        buffer_capacity_words=args.buffer_words,
        comm_latency_s=args.comm_latency,
        compile_time_s=args.compile_time,
        upload_rate_words_per_s=args.upload_rate,
        clock=args.clock,
    )


def _config_echo(cfg: HardwareConfig) -> dict[str, object]:
    return {
        "buffer_capacity_words": cfg.buffer_capacity_words,
        "comm_latency_s": cfg.comm_latency_s,
        "compile_time_s": cfg.compile_time_s,
        "upload_rate_words_per_s": (
            "inf" if cfg.upload_rate_words_per_s == float("inf") else cfg.upload_rate_words_per_s
        ),
        "clock": cfg.clock,
    }


def _seed_default() -> int:
    raw = os.environ.get("QBATCH_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"QBATCH_SEED must be an integer, got {raw!r}") from None


def _add_hardware_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--buffer-words", type=int, default=4096, metavar="N",
                     help="execution buffer capacity in words (default 4096)")
    sub.add_argument("--comm-latency", type=float, default=2.0, metavar="S",
                     help="seconds per communication step (default 2.0)")
    sub.add_argument("--compile-time", type=float, default=0.0, metavar="S",
                     help="seconds per circuit compilation (default 0.0)")
    sub.add_argument("--upload-rate", type=float, default=float("inf"), metavar="W",
                     help="upload link rate in words per second (default unlimited)")
    sub.add_argument("--clock", choices=("simulated", "wall"), default="simulated",
                     help="clock source; 'simulated' is deterministic (default)")


def _add_seed_flag(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, metavar="N",
                     help="sampling seed (default: QBATCH_SEED env var, then 0)")


# --------------------------------------------------------------------------
# subcommands


def cmd_check(args: argparse.Namespace) -> int:
    library = _load_library(args)
    program, text = _parse_program(args.file, library)
    expanded = expand(program)
    registers = RegisterMap(expanded.registers)
    subs = segment(expanded)
    n_gates = 0
    for sub in subs:
        n_gates += len(resolve_gates(sub, registers, env=None))
    doc = {
        "ok": True,
        "file": args.file,
        "sha256": _sha256(text),
        "n_qubits": expanded.n_qubits,
        "registers": {r.name: r.size for r in program.registers},
        "lets": {name: lv.value for name, lv in program.lets.items()},
        "structural_lets": sorted(program.structural_lets),
        "macros": sorted(program.macros),
        "n_subcircuits": len(subs),
        "n_gates": n_gates,
        "gate_definitions": library.source_name,
    }
    _emit(doc, None)
    _note(
        f"{args.file}: ok ({expanded.n_qubits} qubits, {len(subs)} subcircuits, "
        f"{n_gates} gates after expansion)"
    )
    return EXIT_OK


def cmd_compile(args: argparse.Namespace) -> int:
    library = _load_library(args)
    program, text = _parse_program(args.file, library)
    expanded = expand(program)
    registers = RegisterMap(expanded.registers)
    subs = segment(expanded)
    table = GateDataTable()
    units = []
    for sub in subs:
        gates = resolve_gates(sub, registers, env=None)
        units.append(compile_subcircuit(sub.index, gates, registers.n_qubits, table, library))

    table_bytes = table.to_bytes()
    unit_blobs = [u.to_bytes() for u in units]
    doc = {
        "file": args.file,
        "sha256": _sha256(text),
        "n_qubits": registers.n_qubits,
        "table": {
            "entries": len(table.entries),
            "words": table.word_count(),
            "bytes": len(table_bytes),
        },
        "units": [
            {
                "subcircuit_index": u.subcircuit_index,
                "entry_refs": list(u.entry_refs),
                "words": u.word_count(),
            }
            for u in units
        ],
        "total_words": table.word_count() + sum(u.word_count() for u in units),
    }
    _emit(doc, None)
    if args.out:
        blob = table_bytes + b"".join(unit_blobs)
        directory = os.path.dirname(os.path.abspath(args.out))
        try:
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qbatch-", suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(blob)
                os.replace(tmp, args.out)
            except BaseException:
                os.unlink(tmp)
                raise
        except OSError as exc:
            raise ValidationError(f"cannot write {args.out}: {exc}") from exc
        _note(f"wrote {len(blob)} bytes to {args.out}")
    if args.dump:
        _note(hexdump(table_bytes, max_words=args.dump))
    _note(
        f"{args.file}: {len(table.entries)} table entries, "
        f"{doc['total_words']} words for {len(units)} units"
    )
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    library = _load_library(args)
    program, text = _parse_program(args.file, library)
    overrides = OverrideSet()
    overrides_echo: dict[str, object] | None = None
    if args.overrides:
        override_text = _read_text(args.overrides)
        overrides = OverrideSet.from_json(override_text)
        overrides_echo = {"file": args.overrides, "sha256": _sha256(override_text)}
    mode = Mode.parse(args.mode)
    drift = _parse_drift(args.drift)
    cfg = _hardware_config(args)
    seed = args.seed if args.seed is not None else _seed_default()

    batch_plan = plan(program, mode, overrides, library=library)
    hardware = Hardware(cfg, drift, seed=seed)
    try:
        report = hardware.execute(
            batch_plan, args.shots, seed=seed, stream_capacity=args.stream_capacity
        )
    except Exception as exc:
        raise _ExecutionFailure(exc) from exc

    doc = {
        "tool": {"name": "qbatch", "version": __version__},
        "config": {
            "mode": mode.value,
            "shots": args.shots,
            "seed": seed,
            "stream_capacity": args.stream_capacity,
            "drift": _drift_echo(drift),
            "hardware": _config_echo(cfg),
        },
        "inputs": {
            "program": {"file": args.file, "sha256": _sha256(text)},
            "overrides": overrides_echo,
        },
        "plan": {
            **batch_plan.step_count.as_dict(),
            "n_rows": batch_plan.n_rows,
            "n_subcircuits": batch_plan.n_subcircuits,
        },
        "report": report.as_dict(),
    }
    _emit(doc, args.report)
    realized = report.realized
    _note(
        f"{mode.value}: {realized.steps} steps, {realized.compilations} compilations, "
        f"{realized.upload_words} words uploaded; elapsed {report.elapsed_s:.3f} s "
        f"({cfg.clock} clock); {len(report.runs)} runs x {args.shots} shots"
    )
    if args.report:
        _note(f"report written to {args.report}")
    return EXIT_OK


def cmd_vqe(args: argparse.Namespace) -> int:
    if args.hamiltonian:
        ham_text = _read_text(args.hamiltonian)
        hamiltonian = PauliHamiltonian.from_json(ham_text)
        ham_echo: dict[str, object] = {"file": args.hamiltonian, "sha256": _sha256(ham_text)}
    else:
        hamiltonian = PauliHamiltonian.example()
        ham_echo = {"file": None, "packaged_example": True}
    mode_name = {"batched": Mode.OVERRIDE.value}.get(args.mode, args.mode)
    mode = Mode.parse(mode_name)
    drift = _parse_drift(args.drift)
    cfg = _hardware_config(args)
    seed = args.seed if args.seed is not None else _seed_default()
    hardware = Hardware(cfg, drift, seed=seed)

    try:
        result = run_vqe(
            hamiltonian,
            hardware,
            mode=mode,
            shots=args.shots,
            iterations=args.iters,
            seed=seed,
            theta0=args.theta0,
            step0=args.step0,
            exact=args.exact,
        )
    except (BufferOverflow, MissingSlotValue) as exc:
        # These only surface once the control system is executing.
        raise _ExecutionFailure(exc) from exc
    except QbatchError:
        raise
    except Exception as exc:
        raise _ExecutionFailure(exc) from exc

    elapsed = sum(r.elapsed_s for r in result.reports)
    per_iteration = [
        {
            "iteration": i,
            "theta": result.thetas[i],
            "energy": result.energies[i],
            "stderr": result.stderrs[i],
            "elapsed_s": result.reports[i].elapsed_s,
            "mean_ms_error": result.reports[i].mean_ms_error(),
        }
        for i in range(result.iterations)
    ]
    doc = {
        "tool": {"name": "qbatch", "version": __version__},
        "config": {
            "mode": mode.value,
            "shots": args.shots,
            "iterations": args.iters,
            "seed": seed,
            "theta0": args.theta0,
            "step0": args.step0,
            "exact": args.exact,
            "drift": _drift_echo(drift),
            "hardware": _config_echo(cfg),
        },
        "inputs": {"hamiltonian": ham_echo},
        "result": result.as_dict(),
        "per_iteration": per_iteration,
        "elapsed_s": elapsed,
        "ground_energy": hamiltonian.ground_energy(),
    }
    _emit(doc, args.out)
    _note(
        f"{mode.value}: best energy {result.best_energy:.6f} at theta {result.best_theta:.6f} "
        f"after {result.iterations} evaluations ({result.realized.steps} steps, "
        f"{elapsed:.1f} s simulated)"
    )
    if args.out:
        _note(f"results written to {args.out}")
    if args.plot:
        _plot_energies(doc, args.plot)
        _note(f"plot written to {args.plot}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        doc = json.loads(_read_text(args.file))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.file} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{args.file} does not hold a report object")

    summary: dict[str, object] = {"file": args.file}
    if "result" in doc:  # a vqe results document
        result = doc["result"]
        summary["kind"] = "vqe"
        for key in ("mode", "iterations", "best_energy", "best_theta", "converged"):
            summary[key] = result.get(key)
        summary["realized"] = result.get("realized")
        summary["elapsed_s"] = doc.get("elapsed_s")
        lines = [
            f"vqe results: mode {result.get('mode')}, {result.get('iterations')} evaluations",
            f"  best energy {result.get('best_energy')} at theta {result.get('best_theta')}",
            f"  converged: {result.get('converged')}, steps: "
            f"{(result.get('realized') or {}).get('steps')}",
        ]
    elif "report" in doc:  # a run report document
        report = doc["report"]
        summary["kind"] = "run"
        summary["mode"] = report.get("mode")
        summary["step_count"] = report.get("step_count")
        summary["costs"] = report.get("costs")
        summary["n_runs"] = len(report.get("runs", []))
        lines = [
            f"run report: mode {report.get('mode')}, "
            f"{(report.get('step_count') or {}).get('steps')} steps",
            f"  costs: {json.dumps(report.get('costs'), sort_keys=True)}",
            f"  runs: {len(report.get('runs', []))}",
        ]
    else:
        raise ValidationError(f"{args.file} is neither a run report nor a vqe results file")

    if args.plot and summary["kind"] != "vqe":
        raise ValidationError("--plot needs a vqe results file (per-iteration energies)")
    _emit(summary, None)
    for line in lines:
        _note(line)
    if args.plot:
        _plot_energies(doc, args.plot)
        _note(f"plot written to {args.plot}")
    return EXIT_OK


def _plot_energies(doc: dict, path: str) -> None:
    """Energy-vs-iteration chart for a vqe results document."""
    try:
        import matplotlib
    except ImportError:
        raise ValidationError(
            "plotting needs matplotlib; install the 'plot' extra (pip install qbatch[plot])"
        ) from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    result = doc["result"]
    energies = result["energies"]
    stderrs = result.get("stderrs") or [0.0] * len(energies)
    iterations = list(range(len(energies)))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(iterations, energies, yerr=stderrs, fmt="o-", capsize=3,
                label=f"{result.get('mode')} ({result.get('shots')} shots)")
    ground = doc.get("ground_energy")
    if ground is not None:
        ax.axhline(ground, color="gray", linestyle="--", linewidth=1.0, label="exact ground")
    ax.set_xlabel("optimizer iteration")
    ax.set_ylabel("energy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# --------------------------------------------------------------------------
# driver


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qbatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qbatch {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_check = subs.add_parser("check", help="parse and validate a program file")
    p_check.add_argument("file", help="program source file")
    p_check.add_argument("--gate-defs", metavar="F", help="gate pulse definition JSON file")
    p_check.set_defaults(func=cmd_check)

    p_compile = subs.add_parser("compile", help="compile a program to bytecode and show stats")
    p_compile.add_argument("file", help="program source file")
    p_compile.add_argument("--gate-defs", metavar="F", help="gate pulse definition JSON file")
    p_compile.add_argument("--out", metavar="F", help="write table and units to a binary file")
    p_compile.add_argument("--dump", type=int, default=0, metavar="N",
                           help="hexdump the first N table words to stderr")
    p_compile.set_defaults(func=cmd_compile)

    p_run = subs.add_parser("run", help="execute a program on the simulated control system")
    p_run.add_argument("file", help="program source file")
    p_run.add_argument("--gate-defs", metavar="F", help="gate pulse definition JSON file")
    p_run.add_argument("--overrides", metavar="F", help="override set JSON file")
    p_run.add_argument("--mode", default="unbatched",
                       choices=[m.value for m in Mode],
                       help="batching mode (default unbatched)")
    p_run.add_argument("--shots", type=int, default=1000, metavar="N",
                       help="samples per run (default 1000)")
    p_run.add_argument("--drift", default="off", metavar="on|off|F",
                       help="calibration drift: off, on, or a JSON file (default off)")
    p_run.add_argument("--stream-capacity", type=int, default=8, metavar="N",
                       help="compilation stream prefill bound (default 8)")
    p_run.add_argument("--report", metavar="F", help="also write the report JSON to a file")
    _add_seed_flag(p_run)
    _add_hardware_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_vqe = subs.add_parser("vqe", help="run the variational eigensolver harness")
    p_vqe.add_argument("--hamiltonian", metavar="F",
                       help="Hamiltonian JSON file (default: packaged example)")
    p_vqe.add_argument("--iters", type=int, default=18, metavar="N",
                       help="optimizer evaluation budget (default 18)")
    p_vqe.add_argument("--shots", type=int, default=1000, metavar="N",
                       help="samples per projection (default 1000)")
    p_vqe.add_argument("--mode", default="batched",
                       choices=["batched", "unbatched", "index", "override", "combined"],
                       help="batching mode; 'batched' means override (default batched)")
    p_vqe.add_argument("--theta0", type=float, default=0.5, metavar="X",
                       help="initial ansatz angle (default 0.5)")
    p_vqe.add_argument("--step0", type=float, default=0.4, metavar="X",
                       help="initial search step (default 0.4)")
    p_vqe.add_argument("--exact", action="store_true",
                       help="score with the noise-free emulator instead of sampling")
    p_vqe.add_argument("--drift", default="off", metavar="on|off|F",
                       help="calibration drift: off, on, or a JSON file (default off)")
    p_vqe.add_argument("--out", metavar="F", help="write the results JSON to a file")
    p_vqe.add_argument("--plot", metavar="F",
                       help="write an energy-vs-iteration chart (SVG or PNG by extension)")
    _add_seed_flag(p_vqe)
    _add_hardware_flags(p_vqe)
    p_vqe.set_defaults(func=cmd_vqe)

    p_report = subs.add_parser("report", help="summarize a report or results JSON file")
    p_report.add_argument("file", help="report JSON file from run or vqe")
    p_report.add_argument("--plot", metavar="F",
                          help="write an energy-vs-iteration chart (vqe results only)")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _ExecutionFailure as exc:
        cause = exc.cause
        print(f"error: {type(cause).__name__}: {cause}", file=sys.stderr)
        return EXIT_EXECUTION
    except JaqalSyntaxError as exc:
        print(f"error: SyntaxError: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except QbatchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"error: ValidationError: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
