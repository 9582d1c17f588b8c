"""Random problem generation with prescribed condition number and the
success/timing experiment harness.

Every trial is seeded through a SeedSequence keyed by (experiment seed, n,
kappa, trial index), so reruns reproduce all non-timing fields bit for bit and
trials can execute in parallel without sharing state.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimator as est
from . import optimize as opt
from . import pauli as pl
from . import statevec as sv
from . import verify as vf
from .problems import Problem, condition_number_dense, make_problem

V0_CIRCUIT_DEPTH = 2


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_problem(
    n: int,
    kappa: float,
    seed: int,
    task: str = "solve",
    v0_depth: int = V0_CIRCUIT_DEPTH,
) -> Problem:
    """Hermitian positive-definite matrix with exact eigenvalue ratio ``kappa``.

    Eigenvalues pin 1 and kappa and fill the rest uniformly in [1, kappa];
    the basis is Haar random.  |v0> is a random fixed-depth circuit so the
    preparation unitary is available to the overlap-circuit estimators.
    Deterministic per seed.
    """
    if n < 1 or kappa < 1.0:
        raise ValueError("need n >= 1 and kappa >= 1")
    rng = np.random.default_rng(seed)
    dim = 1 << n
    if dim == 1:
        raise ValueError("need at least a 2-dimensional matrix")
    eigenvalues = np.concatenate(
        [[1.0, float(kappa)], rng.uniform(1.0, kappa, dim - 2)]
    )
    basis = haar_unitary(dim, rng)
    dense = (basis * eigenvalues) @ basis.conj().T
    dense = 0.5 * (dense + dense.conj().T)

    v0_circuit = sv.build_hardware_ansatz(n, v0_depth)
    v0_angles = rng.uniform(0.0, 2.0 * math.pi, v0_circuit.parameter_count)
    v0prep = sv.bind(v0_circuit, v0_angles)
    return make_problem(task, dense, v0prep, kappa=float(kappa), seed=seed)


def condition_number(matrix, max_qubits: int = pl.ORACLE_QUBIT_CAP) -> float:
    """Eigenvalue-magnitude ratio of a Hermitian matrix (dense, desk scale)."""
    if isinstance(matrix, pl.PauliSum):
        if matrix.qubit_count > max_qubits:
            raise ValueError("condition number computation capped at desk scale")
        dense = pl.pauli_to_matrix(matrix)
    elif isinstance(matrix, pl.SparseMatrix):
        if matrix.qubit_count > max_qubits:
            raise ValueError("condition number computation capped at desk scale")
        dense = pl.sparse_to_dense(matrix, pad_to_qubits=True)
    else:
        dense = np.asarray(matrix, dtype=complex)
        if dense.shape[0] > (1 << max_qubits):
            raise ValueError("condition number computation capped at desk scale")
    return condition_number_dense(dense)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    n: int
    kappa: float
    depth: int
    trials: int
    successes: int
    mean_seconds: float

    @property
    def all_succeeded(self) -> bool:
        return self.successes == self.trials


@dataclass
class ExperimentResult:
    """Grid of per-(n, kappa, depth) success counts plus derived summaries."""

    cells: list = field(default_factory=list)
    min_depths: dict = field(default_factory=dict)  # (n, kappa) -> depth | None
    timing_exponent: float | None = None
    timings: list = field(default_factory=list)     # (n, mean_seconds) pairs

    def to_csv(self) -> str:
        lines = ["n,kappa,depth,trials,successes,min_depth,mean_seconds"]
        for c in self.cells:
            md = self.min_depths.get((c.n, c.kappa))
            md_s = "" if md is None else str(md)
            lines.append(
                f"{c.n},{c.kappa:.17g},{c.depth},{c.trials},{c.successes},"
                f"{md_s},{c.mean_seconds:.6f}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "cells": [
                {
                    "n": c.n,
                    "kappa": c.kappa,
                    "depth": c.depth,
                    "trials": c.trials,
                    "successes": c.successes,
                    "mean_seconds": c.mean_seconds,
                }
                for c in self.cells
            ],
            "min_depths": [
                {"n": n, "kappa": kappa, "min_depth": d}
                for (n, kappa), d in sorted(self.min_depths.items())
            ],
            "timing_exponent": self.timing_exponent,
            "timings": [{"n": n, "mean_seconds": s} for n, s in self.timings],
        }


def trial_seed(experiment_seed: int, n: int, kappa: float, trial: int) -> int:
    """Stable per-trial seed; identical across depth cells so every depth
    sees the same instance set."""
    ss = np.random.SeedSequence(
        entropy=experiment_seed, spawn_key=(n, int(round(kappa * 1000)), trial)
    )
    return int(ss.generate_state(1)[0])


def _run_cell_trial(args) -> tuple[bool, float]:
    """One (instance, depth) solve; module-level so process pools can pickle it."""
    (n, kappa, depth, seed, schedule, cfg, est_cfg, threshold) = args
    problem = random_problem(n, kappa, seed)
    circuit = sv.build_hardware_ansatz(n, depth)
    rng = np.random.default_rng([seed, depth])
    started = time.perf_counter()
    try:
        theta, _ = opt.morph_run(problem, circuit, schedule, cfg, est_cfg, rng)
    except opt.AnsatzInsufficientError:
        return False, time.perf_counter() - started
    report = vf.verify_solution(theta, problem, circuit, est_cfg, threshold)
    return bool(report.passed), time.perf_counter() - started


def _map_trials(jobs, workers, stop_on_failure=False):
    """Run trials, optionally abandoning a cell at its first failure.

    Early stopping never changes which depth is recorded as all-success
    (failures are deterministic per seed); it only truncates the success
    counts of depths that already disqualified themselves.
    """
    if not stop_on_failure:
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_run_cell_trial, jobs))
        return [_run_cell_trial(j) for j in jobs]
    outcomes = []
    chunk = max(1, workers or 1)
    if chunk > 1:
        with ProcessPoolExecutor(max_workers=chunk) as pool:
            for base in range(0, len(jobs), chunk):
                batch = list(pool.map(_run_cell_trial, jobs[base : base + chunk]))
                outcomes.extend(batch)
                if any(not ok for ok, _ in batch):
                    break
    else:
        for job in jobs:
            outcomes.append(_run_cell_trial(job))
            if not outcomes[-1][0]:
                break
    return outcomes


def success_experiment(
    n_list,
    kappa_list,
    depth_list,
    trials: int,
    schedule: opt.MorphSchedule | None = None,
    cfg: opt.OptimizerConfig | None = None,
    est_cfg: est.EstimatorConfig | None = None,
    seed: int = 0,
    threshold: float = 0.99,
    stop_at_all_success: bool = True,
    stop_trials_on_failure: bool = False,
    workers: int | None = None,
) -> ExperimentResult:
    """Success-probability grid over (n, kappa, depth) cells.

    Each cell runs ``trials`` seeded fixed-depth continuation solves; the same
    instance set is reused across depths of a cell so the recorded minimum
    all-success depth is comparable.  Depths are visited in the given order
    and, by default, a cell's sweep stops at the first depth where every
    trial succeeds.  ``stop_trials_on_failure`` abandons a depth at its first
    failed trial (the cell's recorded trial count shrinks accordingly); the
    minimum all-success depth is unaffected.
    """
    schedule = schedule or opt.MorphSchedule()
    cfg = cfg or opt.OptimizerConfig()
    est_cfg = est_cfg or est.EstimatorConfig()
    result = ExperimentResult()
    for n in n_list:
        for kappa in kappa_list:
            min_depth = None
            for depth in depth_list:
                jobs = [
                    (n, kappa, depth, trial_seed(seed, n, kappa, t),
                     schedule, cfg, est_cfg, threshold)
                    for t in range(trials)
                ]
                outcomes = _map_trials(jobs, workers, stop_trials_on_failure)
                successes = sum(1 for ok, _ in outcomes if ok)
                attempted = len(outcomes)
                mean_s = float(np.mean([dt for _, dt in outcomes])) if outcomes else 0.0
                result.cells.append(
                    CellResult(n, float(kappa), depth, attempted, successes, mean_s)
                )
                if successes == trials and min_depth is None:
                    min_depth = depth
                    if stop_at_all_success:
                        break
            result.min_depths[(n, float(kappa))] = min_depth
    return result


def timing_experiment(
    n_list,
    schedule: opt.MorphSchedule | None = None,
    cfg: opt.OptimizerConfig | None = None,
    est_cfg: est.EstimatorConfig | None = None,
    seed: int = 0,
    trials: int = 10,
    kappa_rule=lambda n: 10.0 * n,
    depth_list=range(1, 9),
    threshold: float = 0.99,
    workers: int | None = None,
) -> ExperimentResult:
    """Wall-clock per solve at each size's minimum all-success depth.

    Emits log-log-ready (matrix size, seconds) pairs and a fitted power-law
    exponent (absent with fewer than two sizes).  Timings are excluded from
    the determinism contract; all counting fields reproduce bit for bit.
    """
    schedule = schedule or opt.MorphSchedule()
    cfg = cfg or opt.OptimizerConfig()
    est_cfg = est_cfg or est.EstimatorConfig()
    result = ExperimentResult()
    for n in n_list:
        kappa = float(kappa_rule(n))
        sub = success_experiment(
            [n],
            [kappa],
            depth_list,
            trials,
            schedule,
            cfg,
            est_cfg,
            seed=seed,
            threshold=threshold,
            workers=workers,
        )
        result.cells.extend(sub.cells)
        min_depth = sub.min_depths[(n, kappa)]
        result.min_depths[(n, kappa)] = min_depth
        if min_depth is None:
            continue
        timed_cell = next(
            c for c in sub.cells if c.depth == min_depth and c.all_succeeded
        )
        result.timings.append((n, timed_cell.mean_seconds))
    if len(result.timings) >= 2:
        sizes = np.log([float(1 << n) for n, _ in result.timings])
        secs = np.log([s for _, s in result.timings])
        result.timing_exponent = float(np.polyfit(sizes, secs, 1)[0])
    return result
