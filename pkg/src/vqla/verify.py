"""Solution verification: fidelity from energy, condition-number bounds, residuals.

Both tasks have zero-energy ground states, so the measured energy certifies the
answer: multiplication fidelity is 1 - E exactly, and for linear systems the
fidelity is bounded below by 1 - kappa^2 E.  At desk scale a dense solve is
also available as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimator as est
from . import pauli as pl
from . import statevec as sv
from .problems import (
    Problem,
    condition_number_dense,
    singular_condition_number,
)

DEFAULT_FIDELITY_THRESHOLD = 0.99
ENERGY_RANGE_TOLERANCE = 1e-6


@dataclass
class VerificationReport:
    task: str
    energy: float
    fidelity: float | None          # exact, from energy (multiplication only)
    fidelity_lower_bound: float | None  # clamped to [0, 1] (solve only)
    fidelity_bound_raw: float | None    # 1 - kappa^2 E, may be negative
    residual_ratio: float | None
    oracle_fidelity: float | None   # dense-solve comparison when available
    kappa: float | None
    threshold: float
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "energy": self.energy,
            "fidelity": self.fidelity,
            "fidelity_lower_bound": self.fidelity_lower_bound,
            "fidelity_bound_raw": self.fidelity_bound_raw,
            "residual_ratio": self.residual_ratio,
            "oracle_fidelity": self.oracle_fidelity,
            "kappa": self.kappa,
            "threshold": self.threshold,
            "passed": self.passed,
        }


def fidelity_multiply(energy: float, tol: float = ENERGY_RANGE_TOLERANCE) -> float:
    """|<phi|v_M>|^2 = 1 - E, clamped to [0, 1]."""
    if not -tol <= energy <= 1.0 + tol:
        raise ValueError(f"multiplication energy {energy} outside [0, 1]")
    return min(1.0, max(0.0, 1.0 - energy))


def fidelity_bound_solve(energy: float, kappa: float, tol: float = ENERGY_RANGE_TOLERANCE) -> float:
    """Raw lower bound 1 - kappa^2 E on the solve fidelity; may be <= 0."""
    if kappa < 1.0:
        raise ValueError("condition number must be >= 1")
    if energy < -tol:
        raise ValueError(f"energy {energy} below zero beyond tolerance")
    return 1.0 - kappa * kappa * energy


def residual_ratio(
    theta,
    problem: Problem,
    circuit: sv.Circuit,
    cfg: est.EstimatorConfig,
    rng: np.random.Generator | None = None,
) -> float:
    """|<v0|M|phi>|^2 / <phi|M^dag M|phi>; equals 1 exactly at the solution."""
    if rng is None and cfg.mode == "hadamard_shots":
        rng = np.random.default_rng(cfg.seed)
    denom, overlap, _, _, _ = est._solve_components(
        theta, problem, circuit, cfg, rng, None
    )
    if denom < 1e-12:
        raise ValueError("M|phi> is numerically zero; residual undefined")
    return abs(overlap) ** 2 / denom


def problem_condition_number(problem: Problem) -> float | None:
    """Metadata kappa when present, else a dense eigen/singular computation."""
    if problem.kappa is not None:
        return problem.kappa
    if problem.qubit_count > pl.ORACLE_QUBIT_CAP:
        return None
    dense = problem.dense_matrix()
    try:
        return condition_number_dense(dense)
    except ValueError:
        return singular_condition_number(dense)


def oracle_target_state(problem: Problem) -> sv.StateVector:
    """Dense reference solution (normalized M|v0> or M^{-1}|v0>); desk scale only."""
    if problem.qubit_count > pl.ORACLE_QUBIT_CAP:
        raise ValueError("dense oracle capped at desk scale")
    dense = problem.dense_matrix()
    v0 = problem.v0_state().amplitudes
    if problem.task == "multiply":
        target = dense @ v0
    else:
        target = np.linalg.solve(dense, v0)
    norm = np.linalg.norm(target)
    if norm < 1e-12:
        raise ValueError("degenerate problem: target vector vanishes")
    return sv.StateVector(problem.qubit_count, target / norm)


def verify_solution(
    theta,
    problem: Problem,
    circuit: sv.Circuit,
    cfg: est.EstimatorConfig,
    threshold: float = DEFAULT_FIDELITY_THRESHOLD,
) -> VerificationReport:
    """Assemble energy, fidelity (or bound), residual, and the pass flag.

    The pass flag uses the dense-oracle fidelity when the problem is small
    enough to solve densely, otherwise the energy-based certificate.
    """
    objective = est.Objective(problem, circuit, cfg)
    report = objective.energy_report(theta)
    energy = report.value
    stat_tol = ENERGY_RANGE_TOLERANCE + (3.0 * report.stderr if report.stderr else 0.0)

    fid = bound_raw = bound = kappa = None
    if problem.task == "multiply":
        fid = fidelity_multiply(energy, tol=stat_tol)
    else:
        kappa = problem_condition_number(problem)
        if kappa is not None:
            bound_raw = fidelity_bound_solve(max(energy, 0.0), kappa)
            bound = min(1.0, max(0.0, bound_raw))

    resid = None
    try:
        resid = residual_ratio(theta, problem, circuit, cfg)
    except ValueError:
        pass

    oracle_fid = None
    if problem.qubit_count <= pl.ORACLE_QUBIT_CAP:
        state = sv.prepare_state(circuit, theta)
        oracle_fid = sv.fidelity(state, oracle_target_state(problem))

    if problem.task == "multiply":
        decisive = fid
    elif oracle_fid is not None:
        decisive = oracle_fid
    else:
        decisive = bound if bound is not None else 0.0
    return VerificationReport(
        task=problem.task,
        energy=energy,
        fidelity=fid,
        fidelity_lower_bound=bound,
        fidelity_bound_raw=bound_raw,
        residual_ratio=resid,
        oracle_fidelity=oracle_fid,
        kappa=kappa,
        threshold=threshold,
        passed=decisive >= threshold,
    )
