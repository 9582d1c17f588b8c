"""Ground-state search drivers: gradient descent, imaginary-time steps,
continuation over an interpolated matrix family, and adaptive depth escalation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimator as est
from . import pauli as pl
from . import statevec as sv
from . import verify as vf
from .problems import Problem, interpolate_problem
from .report import SolveReport


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient-descent settings.

    The learning rate halves whenever a step would increase the energy and
    relaxes back toward its initial value on accepted steps, which keeps the
    descent monotone without hand-tuning.
    """

    learning_rate: float = 0.1
    max_steps: int = 500
    tolerance: float = 1e-8
    grad_method: str = "analytic"
    restarts: int = 1
    init_scale: float = 0.05
    grad_norm_tolerance: float = 1e-8
    stall_window: int = 50
    stall_improvement: float = 1e-9
    stall_relative: float = 0.02
    # Acceptance-gated doubling lets the rate recover after halvings without
    # destabilizing the approach to a minimum.
    rate_growth_cap: float = 4.0
    min_learning_rate: float = 1e-12
    keep_theta: bool = False
    # Inner optimizer for continuation stages: quasi-Newton handles the
    # kappa^2-conditioned landscapes in far fewer evaluations than plain
    # descent; "gd" reproduces the plain-descent behavior.
    stage_method: str = "lbfgs"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.tolerance <= 0:
            raise ValueError("learning_rate and tolerance must be positive")
        if self.grad_method not in ("fd", "analytic"):
            raise ValueError("grad_method must be 'fd' or 'analytic'")
        if self.restarts < 1 or self.max_steps < 0:
            raise ValueError("restarts >= 1 and max_steps >= 0 required")
        if self.stage_method not in ("lbfgs", "gd"):
            raise ValueError("stage_method must be 'lbfgs' or 'gd'")


@dataclass
class TraceRecord:
    step: int
    energy: float
    grad_norm: float
    morph_fraction: float | None = None
    theta: list | None = None


@dataclass
class OptTrace:
    records: list = field(default_factory=list)
    energy_evals: int = 0
    gradient_evals: int = 0
    amplitude_evals: int = 0
    stopped_because: str = ""

    def add(self, step, energy, grad_norm, fraction=None, theta=None):
        if not math.isfinite(energy):
            raise RuntimeError(f"non-finite energy {energy} at step {step}")
        self.records.append(TraceRecord(step, float(energy), float(grad_norm), fraction, theta))

    def absorb_counter(self, counter: est.EvalCounter):
        self.energy_evals += counter.energy_evals
        self.gradient_evals += counter.gradient_evals
        self.amplitude_evals += counter.amplitude_evals

    @property
    def steps(self) -> int:
        """Accepted descent steps (records beyond the initial evaluations)."""
        return sum(1 for r in self.records if r.step > 0)

    def to_csv(self) -> str:
        lines = ["step,morph_fraction,energy,grad_norm"]
        for r in self.records:
            frac = "" if r.morph_fraction is None else f"{r.morph_fraction:.17g}"
            lines.append(f"{r.step},{frac},{r.energy:.17g},{r.grad_norm:.17g}")
        return "\n".join(lines) + "\n"


class AnsatzInsufficientError(RuntimeError):
    """Raised when an optimization stage stalls above the stall-energy threshold."""

    def __init__(self, message, energy=None, fraction=None, theta=None, trace=None):
        super().__init__(message)
        self.energy = energy
        self.fraction = fraction
        self.theta = theta
        self.trace = trace


def _descend(objective, theta0, cfg, trace, fraction):
    """One gradient-descent run; returns (best_theta, best_energy, reason)."""
    theta = np.array(theta0, dtype=float)
    energy = objective.energy(theta)
    if math.isnan(energy):
        raise RuntimeError("energy evaluated to NaN at the starting point")
    best_theta, best_energy = theta.copy(), energy
    rate = cfg.learning_rate
    window_anchor = energy
    window_start = 0
    trace.add(0, energy, math.nan, fraction, list(theta) if cfg.keep_theta else None)

    step = 0
    reason = "step budget exhausted"
    while step < cfg.max_steps:
        if best_energy < cfg.tolerance:
            reason = "energy below tolerance"
            break
        grad = objective.gradient(theta, cfg.grad_method)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < cfg.grad_norm_tolerance:
            reason = "gradient norm below tolerance"
            break
        accepted = False
        while rate >= cfg.min_learning_rate:
            candidate = theta - rate * grad
            cand_energy = objective.energy(candidate)
            if math.isnan(cand_energy):
                raise RuntimeError(
                    f"energy evaluated to NaN at step {step + 1} (rate {rate})"
                )
            if cand_energy <= energy:
                accepted = True
                break
            rate *= 0.5
        if not accepted:
            reason = "learning rate collapsed"
            break
        theta, energy = candidate, cand_energy
        rate = min(rate * 2.0, cfg.rate_growth_cap * cfg.learning_rate)
        step += 1
        trace.add(step, energy, grad_norm, fraction, list(theta) if cfg.keep_theta else None)
        if energy < best_energy:
            best_energy, best_theta = energy, theta.copy()
        if step - window_start >= cfg.stall_window:
            # Stalled only when the window gained neither absolute nor
            # relative ground; slow geometric convergence keeps going.
            gain = window_anchor - best_energy
            if gain < max(cfg.stall_improvement, cfg.stall_relative * abs(window_anchor)):
                reason = "stalled"
                break
            window_anchor = best_energy
            window_start = step
    else:
        if best_energy < cfg.tolerance:
            reason = "energy below tolerance"
    return best_theta, best_energy, reason


def vqe_run(
    problem: Problem,
    circuit: sv.Circuit,
    theta0,
    cfg: OptimizerConfig,
    est_cfg: est.EstimatorConfig | None = None,
    rng: np.random.Generator | None = None,
    objective: est.Objective | None = None,
    trace: OptTrace | None = None,
    morph_fraction: float | None = None,
):
    """Gradient-descent minimization; returns (best theta, trace).

    Terminates on energy below tolerance, vanishing gradient, stall, or the
    step budget, and always reports the best theta seen.  Restarts beyond the
    first draw fresh small random angles from ``rng``.
    """
    est_cfg = est_cfg or est.EstimatorConfig()
    objective = objective or est.Objective(problem, circuit, est_cfg)
    trace = trace if trace is not None else OptTrace()
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (circuit.parameter_count,):
        raise ValueError(
            f"theta0 length {theta0.size} != parameter count {circuit.parameter_count}"
        )

    starts = [theta0]
    if cfg.restarts > 1:
        if rng is None:
            rng = np.random.default_rng(problem.seed or 0)
        for _ in range(cfg.restarts - 1):
            starts.append(
                rng.uniform(-cfg.init_scale, cfg.init_scale, circuit.parameter_count)
            )

    best_theta, best_energy = None, math.inf
    for start in starts:
        theta, energy, reason = _descend(objective, start, cfg, trace, morph_fraction)
        trace.stopped_because = reason
        if energy < best_energy:
            best_theta, best_energy = theta, energy
        if best_energy < cfg.tolerance:
            break
    trace.absorb_counter(objective.counter)
    return best_theta, trace


def _lbfgs_stage(objective, theta0, tolerance, max_iter, trace, fraction):
    """Quasi-Newton stage minimization with early exit below ``tolerance``.

    Returns (best theta, best energy).  Uses the combined value/gradient
    evaluation, so each iteration costs one state preparation.
    """
    from scipy import optimize as _sciopt

    state = {"best_e": math.inf, "best_x": np.array(theta0, dtype=float), "last": math.inf, "it": 0}

    def fun(x):
        energy, grad = objective.value_and_gradient(x)
        if math.isnan(energy):
            raise RuntimeError("energy evaluated to NaN during stage minimization")
        state["last"] = energy
        if energy < state["best_e"]:
            state["best_e"] = energy
            state["best_x"] = x.copy()
        return energy, grad

    def callback(_xk):
        state["it"] += 1
        trace.add(state["it"], state["last"], math.nan, fraction)
        if state["best_e"] < tolerance:
            raise StopIteration

    energy0, _ = objective.value_and_gradient(np.asarray(theta0, dtype=float))
    trace.add(0, energy0, math.nan, fraction)
    if energy0 < tolerance:
        return np.array(theta0, dtype=float), energy0
    _sciopt.minimize(
        fun,
        np.asarray(theta0, dtype=float),
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": max_iter, "ftol": 0.0, "gtol": 1e-14},
    )
    return state["best_x"], state["best_e"]


def _run_stage(problem, circuit, theta0, cfg, est_cfg, rng, objective, trace, fraction, tolerance, max_iter):
    """Dispatch one continuation stage to the configured inner optimizer."""
    if cfg.stage_method == "gd":
        stage_cfg = replace(cfg, tolerance=tolerance, max_steps=max_iter, restarts=1)
        theta, _ = vqe_run(
            problem, circuit, theta0, stage_cfg, est_cfg, rng,
            objective=objective, trace=trace, morph_fraction=fraction,
        )
        energy = min(r.energy for r in trace.records if r.morph_fraction == fraction)
        return theta, energy
    return _lbfgs_stage(objective, theta0, tolerance, max_iter, trace, fraction)


def stage_minimize(
    objective: est.Objective,
    theta0,
    tolerance: float,
    max_iter: int = 200,
    restarts: int = 1,
    rng: np.random.Generator | None = None,
    trace: OptTrace | None = None,
):
    """Quasi-Newton minimization with warm start plus perturbed/random restarts.

    Restart starting points alternate between local perturbations of the warm
    start and fully random angles, which escapes the zero-gradient manifolds a
    warm start can sit on (e.g. a parameter that is inactive at the start).
    Returns (best theta, best energy).
    """
    trace = trace if trace is not None else OptTrace()
    theta0 = np.asarray(theta0, dtype=float)
    best_theta, best_energy = theta0, math.inf
    for attempt in range(max(1, restarts)):
        if attempt == 0:
            start = theta0
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            if attempt % 2 == 1:
                start = theta0 + rng.uniform(-0.6, 0.6, theta0.size)
            else:
                start = rng.uniform(-math.pi, math.pi, theta0.size)
        cand, cand_energy = _lbfgs_stage(
            objective, start, tolerance, max_iter, trace, None
        )
        if cand_energy < best_energy:
            best_theta, best_energy = cand, cand_energy
        if best_energy < tolerance:
            break
    return best_theta, best_energy


def ite_step(
    problem: Problem,
    circuit: sv.Circuit,
    theta,
    dtau: float,
    cfg: OptimizerConfig | None = None,
    est_cfg: est.EstimatorConfig | None = None,
    regularization: float = 1e-6,
) -> np.ndarray:
    """One imaginary-time update theta + dtau * thetadot from McLachlan's principle.

    Solves (M + reg I) thetadot = -V with M_ij = Re <d_i phi|d_j phi> and
    V = grad E / 2; reduces the energy for sufficiently small dtau.
    """
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    est_cfg = est_cfg or est.EstimatorConfig()
    theta = np.asarray(theta, dtype=float)
    metric = est.ite_metric(theta, circuit, est_cfg)
    if problem.task == "multiply":
        grad = est.grad_analytic_multiply(theta, problem, circuit, est_cfg)
    else:
        grad = est.grad_analytic_solve(theta, problem, circuit, est_cfg)
    v = 0.5 * grad
    try:
        thetadot = np.linalg.solve(
            metric + regularization * np.eye(len(theta)), -v
        )
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("metric is singular beyond regularization") from exc
    return theta + dtau * thetadot


def ite_run(
    problem: Problem,
    circuit: sv.Circuit,
    theta0,
    cfg: OptimizerConfig,
    est_cfg: est.EstimatorConfig | None = None,
    dtau: float = 0.1,
    trace: OptTrace | None = None,
):
    """Repeated imaginary-time steps until the energy tolerance or step budget."""
    est_cfg = est_cfg or est.EstimatorConfig()
    objective = est.Objective(problem, circuit, est_cfg)
    trace = trace if trace is not None else OptTrace()
    theta = np.asarray(theta0, dtype=float)
    energy = objective.energy(theta)
    trace.add(0, energy, math.nan)
    best_theta, best_energy = theta.copy(), energy
    for step in range(1, cfg.max_steps + 1):
        if best_energy < cfg.tolerance:
            break
        theta = ite_step(problem, circuit, theta, dtau, cfg, est_cfg)
        energy = objective.energy(theta)
        trace.add(step, energy, math.nan)
        if energy < best_energy:
            best_theta, best_energy = theta.copy(), energy
    trace.absorb_counter(objective.counter)
    return best_theta, trace


@dataclass(frozen=True)
class MorphSchedule:
    """Continuation schedule: interval count, per-interval budget, step scale.

    ``total_time`` defaults to 20 + 10(n-1) clamped to [20, 100]; the default
    per-interval step budget is total_time / intervals / dt.
    """

    total_time: float | None = None
    intervals: int = 10
    inner_steps: int | None = None
    dt: float = 0.1
    stall_energy: float = 1e-2
    anchor_tolerance: float = 1e-8
    anchor_restarts: int = 3
    # Intermediate intervals only warm-start the next one; they stop at this
    # looser tolerance while the final interval uses the optimizer's own.
    intermediate_tolerance: float = 1e-6
    stall_retries: int = 2

    def __post_init__(self):
        if self.intervals < 1:
            raise ValueError("intervals must be >= 1")
        if self.total_time is not None and self.total_time <= 0:
            raise ValueError("total_time must be positive")

    def resolved_total_time(self, qubit_count: int) -> float:
        if self.total_time is not None:
            return self.total_time
        return float(min(100, max(20, 20 + 10 * (qubit_count - 1))))

    def resolved_inner_steps(self, qubit_count: int) -> int:
        if self.inner_steps is not None:
            return self.inner_steps
        budget = self.resolved_total_time(qubit_count) / self.intervals / self.dt
        return max(150, int(round(budget)))


def morph_run(
    problem: Problem,
    circuit: sv.Circuit,
    schedule: MorphSchedule,
    cfg: OptimizerConfig,
    est_cfg: est.EstimatorConfig | None = None,
    rng: np.random.Generator | None = None,
):
    """Continuation ground-state search along M(s) = (1-s) I + s M.

    Starts from small random angles, first pins the ansatz to |v0> (the s=0
    ground state), then walks the interval grid warm-starting each inner
    optimization from the previous solution.  Raises AnsatzInsufficientError
    whenever an interval stalls above ``schedule.stall_energy``.
    """
    est_cfg = est_cfg or est.EstimatorConfig()
    if rng is None:
        rng = np.random.default_rng(problem.seed or 0)
    trace = OptTrace()
    inner_steps = schedule.resolved_inner_steps(problem.qubit_count)

    theta = rng.uniform(-cfg.init_scale, cfg.init_scale, circuit.parameter_count)

    # s = 0: the ground state is |v0> itself for either task.
    anchor_problem = Problem(
        "multiply",
        pl.identity_sum(problem.qubit_count),
        problem.v0prep,
        problem.qubit_count,
        seed=problem.seed,
    )
    anchor_objective = est.Objective(anchor_problem, circuit, est_cfg)
    zeros = np.zeros(circuit.parameter_count)
    anchor_energy = anchor_objective.energy(zeros)
    if anchor_energy < schedule.anchor_tolerance:
        # The all-zero circuit already prepares |v0> (always true when the
        # prefix output survives the CNOT chains, e.g. basis states at depth
        # <= 1 or |0...0> at any depth).
        theta = zeros
        trace.add(0, anchor_energy, math.nan, 0.0)
    else:
        # Pre-optimize toward E < anchor_tolerance from the small random
        # initialization; only a stall above the stall-energy threshold
        # disqualifies the ansatz, since a circuit that cannot even hold
        # |v0> approximately cannot track the interpolation.
        best_theta, best_energy = theta, math.inf
        for attempt in range(max(1, schedule.anchor_restarts)):
            start = theta if attempt == 0 else rng.uniform(
                -cfg.init_scale, cfg.init_scale, circuit.parameter_count
            )
            cand, cand_energy = _run_stage(
                anchor_problem, circuit, start, cfg, est_cfg, rng,
                anchor_objective, trace, 0.0,
                schedule.anchor_tolerance, max(cfg.max_steps, 4 * inner_steps),
            )
            if cand_energy < best_energy:
                best_theta, best_energy = cand, cand_energy
            # An anchor below the stall threshold already warm-starts the
            # continuation; restarts are only worth it on genuine failures.
            if best_energy < schedule.stall_energy:
                break
        theta = best_theta
        trace.absorb_counter(anchor_objective.counter)
        if best_energy > schedule.stall_energy:
            raise AnsatzInsufficientError(
                f"could not pin the ansatz to |v0> (energy {best_energy:.3e})",
                energy=best_energy, fraction=0.0, theta=theta, trace=trace,
            )

    for i in range(1, schedule.intervals + 1):
        fraction = i / schedule.intervals
        final = i == schedule.intervals
        stage = interpolate_problem(problem, fraction)
        stage_tol = cfg.tolerance if final else max(
            cfg.tolerance, schedule.intermediate_tolerance
        )
        objective = est.Objective(stage, circuit, est_cfg)
        theta_new, stage_energy = _run_stage(
            stage, circuit, theta, cfg, est_cfg, rng,
            objective, trace, fraction, stage_tol, inner_steps,
        )
        theta = theta_new
        # A stalled interval gets extended budget, then a perturbed warm
        # start, before the ansatz is declared insufficient; stalls far above
        # the threshold are hopeless and not retried.
        retries = 0
        while (
            schedule.stall_energy < stage_energy <= 10.0 * schedule.stall_energy
            and retries < schedule.stall_retries
        ):
            retries += 1
            restart = theta if retries == 1 else theta + rng.uniform(
                -cfg.init_scale, cfg.init_scale, circuit.parameter_count
            )
            theta_retry, retry_energy = _run_stage(
                stage, circuit, restart, cfg, est_cfg, rng,
                objective, trace, fraction, stage_tol, 2 * inner_steps,
            )
            if retry_energy < stage_energy:
                stage_energy, theta = retry_energy, theta_retry
        trace.absorb_counter(objective.counter)
        if stage_energy > schedule.stall_energy:
            raise AnsatzInsufficientError(
                f"interval s={fraction:.2f} stalled at energy {stage_energy:.3e}",
                energy=stage_energy, fraction=fraction, theta=theta, trace=trace,
            )
    return theta, trace


def adaptive_depth_solve(
    problem: Problem,
    schedule: MorphSchedule,
    cfg: OptimizerConfig,
    est_cfg: est.EstimatorConfig | None = None,
    depths=range(0, 7),
    threshold: float = vf.DEFAULT_FIDELITY_THRESHOLD,
    seed: int | None = None,
) -> SolveReport:
    """Run the continuation solver at increasing depth until verification passes.

    Returns the first success (recording the minimum successful depth), or a
    failure report carrying the best fidelity achieved across the range.
    """
    est_cfg = est_cfg or est.EstimatorConfig()
    depths = list(depths)
    if not depths:
        raise ValueError("depth range is empty")
    if seed is None:
        seed = problem.seed or 0
    started = time.perf_counter()
    best = None  # (decisive fidelity, report dict, depth, theta, energy, steps)
    for depth in depths:
        # The layered ansatz acts on |0...0> directly: composing it onto a
        # general |v0> prefix would cost per-qubit Euler universality (the
        # first z-rotation is absorbed only by basis states).
        circuit = sv.build_hardware_ansatz(problem.qubit_count, depth)
        rng = np.random.default_rng([seed, depth])
        try:
            theta, trace = morph_run(problem, circuit, schedule, cfg, est_cfg, rng)
        except AnsatzInsufficientError as exc:
            if exc.theta is not None and best is None:
                best = (-math.inf, None, depth, list(exc.theta), exc.energy, exc.trace.steps)
            continue
        report = vf.verify_solution(theta, problem, circuit, est_cfg, threshold)
        decisive = (
            report.oracle_fidelity
            if report.oracle_fidelity is not None
            else (report.fidelity if report.fidelity is not None else report.fidelity_lower_bound)
        )
        decisive = decisive if decisive is not None else -math.inf
        if best is None or decisive > best[0]:
            best = (decisive, report.to_json_dict(), depth, list(theta), report.energy, trace.steps)
        if report.passed:
            return SolveReport(
                task=problem.task,
                success=True,
                depth=depth,
                theta_min=list(theta),
                energy=report.energy,
                verification=report.to_json_dict(),
                seed=seed,
                trace_summary={"steps": trace.steps, "amplitude_evals": trace.amplitude_evals},
                wall_time_s=time.perf_counter() - started,
            )
    _, verification, depth, theta, energy, steps = best
    return SolveReport(
        task=problem.task,
        success=False,
        depth=depth,
        theta_min=theta or [],
        energy=energy if energy is not None else math.inf,
        verification=verification or {},
        seed=seed,
        trace_summary={"steps": steps},
        wall_time_s=time.perf_counter() - started,
        message="no depth in the range reached the fidelity threshold",
    )
