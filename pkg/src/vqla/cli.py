"""Command-line front end: problem ingestion, solvers, verification, benchmarks.

Exit codes: 0 verified success, 2 verified failure, 1 error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import bench, dynamics, estimator as est, optimize as opt, pauli as pl
from . import statevec as sv
from . import verify as vf
from .problems import make_problem
from .report import SolveReport, json_dumps

THREADS_ENV = "VQLA_THREADS"


def load_matrix(path: str):
    """Dispatch on extension: .mtx Matrix Market, .json entry list, else Pauli text."""
    text = Path(path).read_text()
    suffix = Path(path).suffix.lower()
    if suffix in (".mtx", ".mm"):
        return pl.sparse_from_matrix_market(text)
    if suffix == ".json":
        return pl.sparse_from_json(text)
    return pl.pauli_text_loads(text)


def load_v0(spec: str | None, qubit_count: int) -> sv.Circuit:
    if spec is None or spec == "zero":
        return sv.empty_circuit(qubit_count)
    circuit = sv.circuit_from_json(Path(spec).read_text())
    if circuit.parameter_count != 0:
        raise ValueError("v0 circuit must be parameter-free")
    return circuit


def parse_theta(spec: str | None, parameter_count: int) -> np.ndarray:
    if spec is None or spec == "zeros":
        return np.zeros(parameter_count)
    values = json.loads(spec)
    theta = np.asarray(values, dtype=float)
    if theta.shape != (parameter_count,):
        raise ValueError(
            f"theta has {theta.size} entries, circuit needs {parameter_count}"
        )
    return theta


def estimator_config(args) -> est.EstimatorConfig:
    mode = {"exact": "exact", "hadamard": "hadamard_exact", "shots": "hadamard_shots"}[
        args.mode
    ]
    return est.EstimatorConfig(mode=mode, shots=args.shots, seed=args.seed)


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _workers(args) -> int:
    if getattr(args, "workers", None):
        return args.workers
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else 1


def add_common(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=("exact", "hadamard", "shots"), default="exact")
    p.add_argument("--shots", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write a JSON report here")
    p.add_argument("--trace", help="write an optimization/evolution trace CSV here")
    p.add_argument("--fidelity-min", type=float, default=0.99)


def add_solver_args(p: argparse.ArgumentParser):
    p.add_argument("--matrix", required=True)
    p.add_argument("--v0", default="zero", help='"zero" or a circuit JSON path')
    p.add_argument("--depth", default="auto", help='ansatz depth, or "auto"')
    p.add_argument("--optimizer", choices=("vqe", "ite", "morph"), default="morph")
    p.add_argument("--theta0", default="zeros", help='"zeros" or a JSON list')
    p.add_argument(
        "--allow-non-hermitian",
        action="store_true",
        help="accept a non-Hermitian matrix for the solve task (best effort)",
    )
    add_common(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqla",
        description="Variational ground-state solvers for linear algebra tasks",
    )
    parser.add_argument("--config", help="key=value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    for task in ("multiply", "solve"):
        p = sub.add_parser(task, help=f"run the {task} task")
        add_solver_args(p)

    p = sub.add_parser("verify", help="verify a candidate solution")
    p.add_argument("--matrix", required=True)
    p.add_argument("--v0", default="zero")
    p.add_argument("--task", choices=("multiply", "solve"), default="solve")
    p.add_argument("--theta", required=True, help="JSON list of angles")
    p.add_argument("--depth", type=int, default=0)
    p.add_argument("--allow-non-hermitian", action="store_true")
    add_common(p)

    p = sub.add_parser("evolve", help="variational real/imaginary time evolution")
    p.add_argument("--hamiltonian", required=True, help="Pauli text file")
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--imaginary", action="store_true")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--theta0", default="zeros")
    add_common(p)

    p = sub.add_parser("trajectory", help="stochastic open-system trajectories")
    p.add_argument("--hamiltonian", required=True)
    p.add_argument("--jump", action="append", default=[], help="Pauli text file (repeatable)")
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--trajectories", type=int, default=100)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--theta0", default="zeros")
    add_common(p)

    p = sub.add_parser("bench", help="seeded success/timing experiments")
    p.add_argument("--experiment", choices=("success", "timing"), default="success")
    p.add_argument("--n", required=True, help="comma list of qubit counts")
    p.add_argument("--kappa", default="10", help="comma list of condition numbers")
    p.add_argument("--depths", default="0,1,2,3,4,5,6")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--mode", choices=("exact", "hadamard", "shots"), default="exact")
    p.add_argument("--shots", type=int, default=4096)
    p.add_argument("--out", help="JSON summary path")
    p.add_argument("--csv", help="CSV results path")
    p.add_argument("--fidelity-min", type=float, default=0.99)
    return parser


def apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Read a key=value file named by --config and install its values as defaults."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    defaults = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        defaults[key.strip().replace("-", "_")] = value.strip()
    for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        known = {a.dest for a in action._actions}  # noqa: SLF001
        action.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    return argv


def _solve_command(args) -> int:
    started = time.perf_counter()
    matrix = load_matrix(args.matrix)
    qubits = matrix.qubit_count
    v0prep = load_v0(args.v0, qubits)
    problem = make_problem(
        args.command,
        matrix,
        v0prep,
        seed=args.seed,
        allow_non_hermitian=args.allow_non_hermitian,
    )
    cfg = estimator_config(args)
    opt_cfg = opt.OptimizerConfig()
    schedule = opt.MorphSchedule()

    if args.depth == "auto":
        if args.optimizer != "morph":
            raise ValueError("--depth auto requires --optimizer morph")
        report = opt.adaptive_depth_solve(
            problem, schedule, opt_cfg, cfg,
            threshold=args.fidelity_min, seed=args.seed,
        )
        report.config = _config_echo(args)
        trace = None
        if args.trace:
            print("note: --trace is only written for fixed-depth runs", file=sys.stderr)
    else:
        depth = int(args.depth)
        circuit = sv.build_hardware_ansatz(qubits, depth)
        rng = np.random.default_rng(args.seed)
        if args.optimizer == "morph":
            try:
                theta, trace = opt.morph_run(problem, circuit, schedule, opt_cfg, cfg, rng)
            except opt.AnsatzInsufficientError as exc:
                theta, trace = np.asarray(exc.theta), exc.trace
        else:
            theta0 = parse_theta(args.theta0, circuit.parameter_count)
            if args.optimizer == "vqe":
                theta, trace = opt.vqe_run(problem, circuit, theta0, opt_cfg, cfg, rng)
            else:
                theta, trace = opt.ite_run(problem, circuit, theta0, opt_cfg, cfg)
        verification = vf.verify_solution(theta, problem, circuit, cfg, args.fidelity_min)
        report = SolveReport(
            task=args.command,
            success=bool(verification.passed),
            depth=depth,
            theta_min=list(map(float, theta)),
            energy=verification.energy,
            verification=verification.to_json_dict(),
            seed=args.seed,
            config=_config_echo(args),
            trace_summary={
                "steps": trace.steps,
                "energy_evals": trace.energy_evals,
                "amplitude_evals": trace.amplitude_evals,
            },
            wall_time_s=time.perf_counter() - started,
        )
        if args.trace:
            Path(args.trace).write_text(trace.to_csv())
    if args.out:
        Path(args.out).write_text(report.dumps())
    print(
        f"{args.command}: success={report.success} depth={report.depth} "
        f"energy={report.energy:.3e}"
    )
    return 0 if report.success else 2


def _config_echo(args) -> dict:
    skip = {"command", "config", "out", "trace"}
    echo = {}
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        echo[key] = value if isinstance(value, (int, float, bool)) else str(value)
    return echo


def _verify_command(args) -> int:
    matrix = load_matrix(args.matrix)
    qubits = matrix.qubit_count
    v0prep = load_v0(args.v0, qubits)
    problem = make_problem(
        args.task, matrix, v0prep,
        seed=args.seed, allow_non_hermitian=args.allow_non_hermitian,
    )
    circuit = sv.build_hardware_ansatz(qubits, args.depth)
    theta = parse_theta(args.theta, circuit.parameter_count)
    cfg = estimator_config(args)
    report = vf.verify_solution(theta, problem, circuit, cfg, args.fidelity_min)
    if args.out:
        Path(args.out).write_text(json_dumps(report.to_json_dict()))
    print(f"verify: passed={report.passed} energy={report.energy:.3e}")
    return 0 if report.passed else 2


def _evolve_command(args) -> int:
    hamiltonian = pl.pauli_text_loads(Path(args.hamiltonian).read_text())
    spec = dynamics.EvolutionSpec(
        hamiltonian, time=args.time, step=args.step, imaginary=args.imaginary
    )
    circuit = sv.build_hardware_ansatz(spec.qubit_count, args.depth)
    theta0 = parse_theta(args.theta0, circuit.parameter_count)
    cfg = estimator_config(args)
    thetas, record = (
        dynamics.imag_time_evolve(spec, circuit, theta0, cfg)
        if args.imaginary
        else dynamics.real_time_evolve(spec, circuit, theta0, cfg)
    )
    if args.trace:
        Path(args.trace).write_text(record.to_csv())
    summary = record.to_json_dict()
    summary["theta_final"] = [float(t) for t in thetas[-1]]
    if args.out:
        Path(args.out).write_text(json_dumps(summary))
    final_fid = record.exact_fidelities[-1] if record.exact_fidelities else None
    print(f"evolve: steps={spec.steps} final_fidelity={final_fid}")
    ok = final_fid is None or final_fid >= args.fidelity_min
    return 0 if ok else 2


def _trajectory_command(args) -> int:
    hamiltonian = pl.pauli_text_loads(Path(args.hamiltonian).read_text())
    jumps = tuple(
        pl.pauli_text_loads(Path(p).read_text()) for p in args.jump
    )
    spec = dynamics.EvolutionSpec(
        hamiltonian, time=args.time, step=args.step, jump_operators=jumps
    )
    circuit = sv.build_hardware_ansatz(spec.qubit_count, args.depth)
    theta0 = parse_theta(args.theta0, circuit.parameter_count)
    cfg = estimator_config(args)
    summaries = []
    first_record = None
    for k in range(args.trajectories):
        rng = np.random.default_rng([args.seed, k])
        record = dynamics.trajectory_run(spec, circuit, theta0, rng, cfg)
        if first_record is None:
            first_record = record
        summaries.append(
            {
                "jump_times": [float(t) for t in record.jump_times],
                "jump_channels": list(record.jump_channels),
            }
        )
    if args.trace and first_record is not None:
        Path(args.trace).write_text(first_record.to_csv())
    if args.out:
        Path(args.out).write_text(
            json_dumps({"trajectories": summaries, "steps": spec.steps})
        )
    jump_count = sum(len(s["jump_times"]) for s in summaries)
    print(f"trajectory: {args.trajectories} runs, {jump_count} jumps")
    return 0


def _bench_command(args) -> int:
    seed = args.seed
    if seed is None:
        seed = secrets.randbits(32)
        print(f"bench: auto-generated seed {seed} (pass --seed {seed} to replay)")
    mode = {"exact": "exact", "hadamard": "hadamard_exact", "shots": "hadamard_shots"}[
        args.mode
    ]
    cfg = est.EstimatorConfig(mode=mode, shots=args.shots, seed=seed)
    ns = _parse_int_list(args.n)
    kappas = _parse_float_list(args.kappa)
    depths = _parse_int_list(args.depths)
    workers = _workers(args)
    if args.experiment == "success":
        result = bench.success_experiment(
            ns, kappas, depths, args.trials,
            est_cfg=cfg, seed=seed, threshold=args.fidelity_min, workers=workers,
        )
    else:
        result = bench.timing_experiment(
            ns, est_cfg=cfg, seed=seed, trials=args.trials,
            depth_list=depths, threshold=args.fidelity_min, workers=workers,
        )
    csv_text = result.to_csv()
    if args.csv:
        Path(args.csv).write_text(csv_text)
    if args.out:
        payload = result.to_json_dict()
        payload["seed"] = seed
        Path(args.out).write_text(json_dumps(payload))
    sys.stdout.write(csv_text)
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        handler = {
            "multiply": _solve_command,
            "solve": _solve_command,
            "verify": _verify_command,
            "evolve": _evolve_command,
            "trajectory": _trajectory_command,
            "bench": _bench_command,
        }[args.command]
        return handler(args)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; fold into the error code
        return 1 if exc.code not in (0, None) else 0
    except (ValueError, OSError, RuntimeError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
