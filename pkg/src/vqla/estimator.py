"""Energy and gradient estimation for the multiplication and solve Hamiltonians.

Three evaluation modes:

- ``exact``: statevector arithmetic, no circuitry beyond state preparation.
- ``hadamard_exact``: every amplitude goes through the ancilla-based overlap
  circuit, evaluated without sampling.
- ``hadamard_shots``: the same circuits with binomially sampled +-1 outcomes;
  ``shots`` counts samples per amplitude part.

Amplitudes are overlaps <0| B^dag sigma K |0> built from three placements of
the Pauli sandwich sigma: between ansatz and adjoint ansatz ("expectation"),
between the input-state preparation and the adjoint ansatz ("transition"),
and between the adjoint input preparation and the ansatz ("overlap").
Derivative insertions slot extra Pauli generators inside the bra circuit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import pauli as pl
from . import statevec as sv
from .problems import Problem

MODES = ("exact", "hadamard_exact", "hadamard_shots")
PLACEMENTS = ("expectation", "transition", "overlap")

DEGENERATE_NORM_TOLERANCE = 1e-12

# Coefficients with an imaginary part below this are treated as real when
# deciding whether an expectation term needs its imaginary amplitude measured.
REAL_COEFF_TOLERANCE = 1e-12


@dataclass(frozen=True)
class EstimatorConfig:
    """Evaluation mode, shot budget per amplitude part, and RNG seed."""

    mode: str = "exact"
    shots: int = 1024
    seed: int = 0
    sample_threshold: int = 64

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")

    @property
    def sampled(self) -> bool:
        return self.mode == "hadamard_shots"


@dataclass
class EvalCounter:
    """Tallies of elementary evaluations; one Hadamard-test part counts as one."""

    energy_evals: int = 0
    gradient_evals: int = 0
    amplitude_evals: int = 0


@dataclass
class EnergyReport:
    value: float
    stderr: float | None
    mode: str
    shots: int | None
    amplitude_evals: int
    term_amplitudes: list | None = None

    def to_json_dict(self) -> dict:
        out = {
            "value": self.value,
            "stderr": self.stderr,
            "mode": self.mode,
            "shots": self.shots,
            "amplitude_evals": self.amplitude_evals,
        }
        if self.term_amplitudes is not None:
            out["term_amplitudes"] = [[a.real, a.imag] for a in self.term_amplitudes]
        return out


# ---------------------------------------------------------------------------
# Amplitude layouts and the Hadamard test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AmplitudeLayout:
    """Overlap <0| bra^dag (phase * sandwich) ket |0> as bound circuitry."""

    qubit_count: int
    bra: tuple
    ket: tuple
    sandwich: str | None = None
    phase: complex = 1.0 + 0j


def amplitude_layout(
    placement: str,
    circuit: sv.Circuit,
    theta,
    term: pl.PauliTerm | str | None = None,
    v0prep: sv.Circuit | None = None,
    phase: complex = 1.0 + 0j,
) -> AmplitudeLayout:
    """Build one of the three supported sandwich placements (no insertion)."""
    if placement not in PLACEMENTS:
        raise ValueError(f"placement must be one of {PLACEMENTS}")
    letters = term.letters if isinstance(term, pl.PauliTerm) else term
    ansatz_ops = tuple(sv.bound_ops(circuit, theta))
    if placement == "expectation":
        bra, ket = ansatz_ops, ansatz_ops
    else:
        if v0prep is None:
            raise ValueError(f"placement {placement!r} needs the input-state circuit")
        v0_ops = tuple(sv.bound_ops(v0prep, []))
        if placement == "transition":
            bra, ket = ansatz_ops, v0_ops
        else:
            bra, ket = v0_ops, ansatz_ops
    return AmplitudeLayout(circuit.qubit_count, bra, ket, letters, phase)


def _apply_layout_unitary(state: sv.StateVector, layout: AmplitudeLayout) -> sv.StateVector:
    sv.apply_ops(state, layout.ket)
    if layout.sandwich is not None:
        for q, letter in enumerate(layout.sandwich):
            if letter != "I":
                sv.apply_op(state, (letter.lower(), q, None, None, None))
    if layout.phase != 1.0:
        state.amplitudes *= layout.phase
    sv.apply_ops_adjoint(state, layout.bra)
    return state


def _layout_amplitude_exact(layout: AmplitudeLayout) -> complex:
    state = sv.zero_state(layout.qubit_count)
    _apply_layout_unitary(state, layout)
    return complex(state.amplitudes[0])


def _ancilla_p_plus(layout: AmplitudeLayout, part: str) -> float:
    """Probability of the +1 outcome of the Hadamard-test ancilla.

    The data register carries U|0..0>; the ancilla is prepared at
    (|0> + |1>)/sqrt2 for the real part and (|0> - i|1>)/sqrt2 for the
    imaginary part, so p(+1) = (1 + Re<0|U|0>)/2 or (1 + Im<0|U|0>)/2.
    """
    hi = sv.zero_state(layout.qubit_count)
    _apply_layout_unitary(hi, layout)
    if part == "imag":
        hi.amplitudes *= -1j
    overlap = hi.amplitudes[0].real
    return min(1.0, max(0.0, 0.5 * (1.0 + overlap)))


def hadamard_test(
    layout: AmplitudeLayout,
    part: str,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
) -> float:
    """Estimate Re or Im of <0|U|0> for the composed layout unitary."""
    if part not in ("real", "imag"):
        raise ValueError("part must be 'real' or 'imag'")
    if cfg.mode == "exact":
        amp = _layout_amplitude_exact(layout)
        return amp.real if part == "real" else amp.imag
    p_plus = _ancilla_p_plus(layout, part)
    if cfg.mode == "hadamard_exact":
        return 2.0 * p_plus - 1.0
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    k = int(rng.binomial(cfg.shots, p_plus))
    return (2 * k - cfg.shots) / cfg.shots


def _part_variance(mean: float, shots: int) -> float:
    return max(0.0, 1.0 - mean * mean) / shots


def _estimate_amplitude(
    layout: AmplitudeLayout,
    cfg: EstimatorConfig,
    rng,
    counter: EvalCounter | None,
    parts: str = "both",
) -> tuple[complex, float, float]:
    """(amplitude, var_re, var_im); skipped parts come back as zero."""
    need_re = parts in ("both", "real")
    need_im = parts in ("both", "imag")
    if cfg.mode == "exact":
        amp = _layout_amplitude_exact(layout)
        if counter is not None:
            counter.amplitude_evals += 1
        return amp, 0.0, 0.0
    re = im = 0.0
    var_re = var_im = 0.0
    evals = 0
    if need_re:
        re = hadamard_test(layout, "real", cfg, rng)
        evals += 1
        if cfg.sampled:
            var_re = _part_variance(re, cfg.shots)
    if need_im:
        im = hadamard_test(layout, "imag", cfg, rng)
        evals += 1
        if cfg.sampled:
            var_im = _part_variance(im, cfg.shots)
    if counter is not None:
        counter.amplitude_evals += evals
    return complex(re, im), var_re, var_im


def estimate_amplitude(
    layout: AmplitudeLayout,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
) -> complex:
    if rng is None and cfg.mode == "hadamard_shots":
        rng = np.random.default_rng(cfg.seed)
    amp, _, _ = _estimate_amplitude(layout, cfg, rng, None)
    return amp


# ---------------------------------------------------------------------------
# Weighted amplitude sums
# ---------------------------------------------------------------------------


def _sampled_sum_part(
    layouts_by_term,
    sampler: pl.LcuSampler,
    part: str,
    cfg: EstimatorConfig,
    rng,
    counter: EvalCounter | None,
) -> tuple[float, float]:
    """Importance-sampled estimate of one part of sum_j lambda_j amp_j.

    Draws term indices with probability |lambda_j|/C and absorbs each term's
    unit phase into its circuit, so the estimate is C times the mean of +-1
    outcomes and its standard error is bounded by C / sqrt(shots).
    """
    counts = pl.sample_term_counts(sampler, rng, cfg.shots)
    plus_total = 0
    evals = 0
    for j, c_j in enumerate(counts):
        if c_j == 0:
            continue
        layout = layouts_by_term(j, complex(sampler.phases[j]))
        p_plus = _ancilla_p_plus(layout, part)
        plus_total += int(rng.binomial(int(c_j), p_plus))
        evals += 1
    if counter is not None:
        counter.amplitude_evals += evals
    mean = (2 * plus_total - cfg.shots) / cfg.shots
    value = sampler.one_norm * mean
    variance = (sampler.one_norm**2) * _part_variance(mean, cfg.shots)
    return value, variance


def _weighted_amplitude_sum(
    p: pl.PauliSum,
    make_layout,
    cfg: EstimatorConfig,
    rng,
    counter: EvalCounter | None,
    collect_terms: bool = False,
):
    """sum_j lambda_j amp_j with amp_j = amplitude of make_layout(j, phase=1).

    Exhaustive over terms except in shots mode past the sampling threshold,
    where it switches to LCU importance sampling.
    Returns (value, var_re, var_im, per-term amplitudes or None).
    """
    if not p.terms:
        raise ValueError("empty Pauli sum")
    if cfg.sampled and len(p.terms) > cfg.sample_threshold:
        sampler = pl.build_sampler(p)
        re, var_re = _sampled_sum_part(make_layout, sampler, "real", cfg, rng, counter)
        im, var_im = _sampled_sum_part(make_layout, sampler, "imag", cfg, rng, counter)
        return complex(re, im), var_re, var_im, None
    total = 0j
    var_re = var_im = 0.0
    amps = [] if collect_terms else None
    for j, term in enumerate(p.terms):
        amp, v_re, v_im = _estimate_amplitude(make_layout(j, 1.0 + 0j), cfg, rng, counter)
        lam = term.coefficient
        total += lam * amp
        var_re += (lam.real**2) * v_re + (lam.imag**2) * v_im
        var_im += (lam.imag**2) * v_re + (lam.real**2) * v_im
        if amps is not None:
            amps.append(amp)
    return total, var_re, var_im, amps


def transition_amplitude(
    theta,
    p: pl.PauliSum,
    circuit: sv.Circuit,
    v0prep: sv.Circuit,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
    counter: EvalCounter | None = None,
) -> complex:
    """sum_j lambda_j <phi(theta)| sigma_j |v0>."""
    amp, _, _, _ = _transition_amplitude(theta, p, circuit, v0prep, cfg, rng, counter)
    return amp


def _transition_amplitude(theta, p, circuit, v0prep, cfg, rng=None, counter=None):
    if not p.terms:
        raise ValueError("empty Pauli sum")
    if p.qubit_count != circuit.qubit_count or p.qubit_count != v0prep.qubit_count:
        raise ValueError("qubit counts differ")
    if cfg.mode == "exact":
        phi = sv.prepare_state(circuit, theta)
        v0 = sv.prepare_state(v0prep, [])
        amp = sv.inner_product(phi, sv.apply_pauli_sum(v0, p))
        if counter is not None:
            counter.amplitude_evals += 1
        return amp, 0.0, 0.0, None
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    ansatz_ops = tuple(sv.bound_ops(circuit, theta))
    v0_ops = tuple(sv.bound_ops(v0prep, []))

    def make_layout(j, phase):
        return AmplitudeLayout(
            circuit.qubit_count, ansatz_ops, v0_ops, p.terms[j].letters, phase
        )

    return _weighted_amplitude_sum(p, make_layout, cfg, rng, counter, collect_terms=True)


def pauli_expectation(
    theta,
    circuit: sv.Circuit,
    p: pl.PauliSum,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
    counter: EvalCounter | None = None,
) -> tuple[float, float]:
    """(Re <phi|P|phi>, variance).  Imaginary amplitudes are only measured
    for terms whose coefficient has an imaginary component."""
    if not p.terms:
        raise ValueError("empty Pauli sum")
    if cfg.mode == "exact":
        phi = sv.prepare_state(circuit, theta)
        value = sv.inner_product(phi, sv.apply_pauli_sum(phi, p)).real
        if counter is not None:
            counter.amplitude_evals += 1
        return value, 0.0
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    ansatz_ops = tuple(sv.bound_ops(circuit, theta))

    if cfg.sampled and len(p.terms) > cfg.sample_threshold:
        def make_layout(j, phase):
            return AmplitudeLayout(
                circuit.qubit_count, ansatz_ops, ansatz_ops, p.terms[j].letters, phase
            )
        sampler = pl.build_sampler(p)
        re, var_re = _sampled_sum_part(make_layout, sampler, "real", cfg, rng, counter)
        return re, var_re

    value = 0.0
    variance = 0.0
    for term in p.terms:
        layout = AmplitudeLayout(
            circuit.qubit_count, ansatz_ops, ansatz_ops, term.letters
        )
        lam = term.coefficient
        parts = "both" if abs(lam.imag) > REAL_COEFF_TOLERANCE else "real"
        amp, v_re, v_im = _estimate_amplitude(layout, cfg, rng, counter, parts)
        value += (lam * amp).real
        variance += (lam.real**2) * v_re + (lam.imag**2) * v_im
    return value, variance


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------


def _v0_as_circuit(problem: Problem) -> sv.Circuit:
    return problem.v0prep


def estimate_mv0_norm_sq(
    problem: Problem,
    cfg: EstimatorConfig,
    rng=None,
    counter: EvalCounter | None = None,
) -> tuple[float, float]:
    """(||M|v0>||^2, variance): exact value, or <v0|M^dag M|v0> term by term."""
    if cfg.mode == "exact":
        return problem.mv0_norm_sq(), 0.0
    return pauli_expectation([], _v0_as_circuit(problem), problem.mdag_m(), cfg, rng, counter)


def energy_multiply(
    theta,
    problem: Problem,
    circuit: sv.Circuit,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
    counter: EvalCounter | None = None,
    norm_sq: float | None = None,
) -> EnergyReport:
    """E = 1 - |sum_j lambda_j <phi|sigma_j|v0>|^2 / ||M|v0>||^2."""
    if rng is None and cfg.mode == "hadamard_shots":
        rng = np.random.default_rng(cfg.seed)
    local = counter or EvalCounter()
    if norm_sq is None:
        norm_sq, norm_var = estimate_mv0_norm_sq(problem, cfg, rng, local)
    else:
        norm_var = 0.0
    if norm_sq < DEGENERATE_NORM_TOLERANCE:
        raise ValueError("degenerate problem: M|v0> is numerically zero")
    amp, var_re, var_im, term_amps = _transition_amplitude(
        theta, problem.pauli, circuit, problem.v0prep, cfg, rng, local
    )
    overlap_sq = abs(amp) ** 2
    value = 1.0 - overlap_sq / norm_sq
    stderr = None
    if cfg.sampled:
        var_overlap = (2 * amp.real) ** 2 * var_re + (2 * amp.imag) ** 2 * var_im
        var_value = var_overlap / norm_sq**2 + (overlap_sq / norm_sq**2) ** 2 * norm_var
        stderr = math.sqrt(var_value)
    return EnergyReport(
        value,
        stderr,
        cfg.mode,
        cfg.shots if cfg.sampled else None,
        local.amplitude_evals,
        term_amplitudes=term_amps,
    )


def _solve_components(theta, problem, circuit, cfg, rng, counter):
    """(<phi|M^dag M|phi>, <v0|M|phi>, variance of the first, var_re/var_im of the second)."""
    if cfg.mode == "exact":
        phi = sv.prepare_state(circuit, theta)
        mphi = sv.apply_pauli_sum(phi, problem.pauli)
        e1 = float(np.vdot(mphi.amplitudes, mphi.amplitudes).real)
        a = complex(np.vdot(problem.v0_state().amplitudes, mphi.amplitudes))
        if counter is not None:
            counter.amplitude_evals += 2
        return e1, a, 0.0, 0.0, 0.0
    e1, var_e1 = pauli_expectation(theta, circuit, problem.mdag_m(), cfg, rng, counter)
    ansatz_ops = tuple(sv.bound_ops(circuit, theta))
    v0_ops = tuple(sv.bound_ops(problem.v0prep, []))

    def make_layout(j, phase):
        return AmplitudeLayout(
            circuit.qubit_count, v0_ops, ansatz_ops, problem.pauli.terms[j].letters, phase
        )

    a, var_re, var_im, _ = _weighted_amplitude_sum(
        problem.pauli, make_layout, cfg, rng, counter
    )
    return e1, a, var_e1, var_re, var_im


def energy_solve(
    theta,
    problem: Problem,
    circuit: sv.Circuit,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
    counter: EvalCounter | None = None,
) -> EnergyReport:
    """E = <phi|M^dag M|phi> - |<v0|M|phi>|^2, the solve-Hamiltonian energy."""
    if rng is None and cfg.mode == "hadamard_shots":
        rng = np.random.default_rng(cfg.seed)
    local = counter or EvalCounter()
    e1, a, var_e1, var_re, var_im = _solve_components(
        theta, problem, circuit, cfg, rng, local
    )
    value = e1 - abs(a) ** 2
    stderr = None
    if cfg.sampled:
        var = var_e1 + (2 * a.real) ** 2 * var_re + (2 * a.imag) ** 2 * var_im
        stderr = math.sqrt(var)
    return EnergyReport(
        value,
        stderr,
        cfg.mode,
        cfg.shots if cfg.sampled else None,
        local.amplitude_evals,
    )


def multiply_energy_of_state(state: sv.StateVector, problem: Problem) -> float:
    """Exact multiplication energy of an arbitrary normalized state."""
    nsq = problem.mv0_norm_sq()
    if nsq < DEGENERATE_NORM_TOLERANCE:
        raise ValueError("degenerate problem: M|v0> is numerically zero")
    return 1.0 - abs(sv.inner_product(state, problem.mv0_state())) ** 2 / nsq


def solve_energy_of_state(state: sv.StateVector, problem: Problem) -> float:
    """Exact solve-Hamiltonian energy of an arbitrary normalized state."""
    mphi = sv.apply_pauli_sum(state, problem.pauli)
    e1 = float(np.vdot(mphi.amplitudes, mphi.amplitudes).real)
    a = np.vdot(problem.v0_state().amplitudes, mphi.amplitudes)
    return e1 - abs(a) ** 2


def solve_hamiltonian_pauli(problem: Problem) -> pl.PauliSum:
    """Explicit Pauli form M^dag (I - |v0><v0|) M.

    Available when |v0> is a computational basis state, where the projector
    has a closed Pauli expansion.
    """
    v0 = problem.v0_state()
    idx = int(np.argmax(np.abs(v0.amplitudes)))
    if abs(abs(v0.amplitudes[idx]) - 1.0) > 1e-10:
        raise ValueError("explicit Pauli form needs a computational-basis |v0>")
    proj = pl.projector_sum(problem.qubit_count, idx)
    sandwich = pl.sum_product(
        pl.sum_product(problem.adjoint_pauli(), proj), problem.pauli
    )
    return pl.add_sums(problem.mdag_m(), pl.scale_sum(sandwich, -1.0))


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def grad_fd(theta, energy_fn, delta: float = 1e-3) -> np.ndarray:
    """Central finite differences of a scalar energy function."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = delta
        grad[i] = (energy_fn(theta + step) - energy_fn(theta - step)) / (2 * delta)
    return grad


def _insertion_weighted_sum(circuit, theta, slot, p, ket_ops, coeffs, cfg, rng, counter):
    """sum_s conj(f_s) sum_j c_j <0| insert_s(U)^dag sigma_j ket |0>."""
    total = 0j
    for f, bra_ops in sv.insertion_ops(circuit, theta, slot):
        for term, c in zip(p.terms, coeffs):
            layout = AmplitudeLayout(
                circuit.qubit_count, tuple(bra_ops), ket_ops, term.letters
            )
            amp, _, _ = _estimate_amplitude(layout, cfg, rng, counter)
            total += np.conj(f) * c * amp
    return total


def grad_analytic_multiply(
    theta,
    problem: Problem,
    circuit: sv.Circuit,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
    counter: EvalCounter | None = None,
    norm_sq: float | None = None,
) -> np.ndarray:
    """dE/dtheta_i = -2 Re(<d_i phi|M|v0> <v0|M^dag|phi>) / ||M|v0>||^2."""
    if rng is None and cfg.mode == "hadamard_shots":
        rng = np.random.default_rng(cfg.seed)
    local = counter or EvalCounter()
    if norm_sq is None:
        norm_sq, _ = estimate_mv0_norm_sq(problem, cfg, rng, local)
    if norm_sq < DEGENERATE_NORM_TOLERANCE:
        raise ValueError("degenerate problem: M|v0> is numerically zero")
    t = transition_amplitude(theta, problem.pauli, circuit, problem.v0prep, cfg, rng, local)
    if cfg.mode == "exact":
        d = sv.overlap_gradient(circuit, theta, problem.mv0_state())
        local.amplitude_evals += circuit.parameter_count
    else:
        v0_ops = tuple(sv.bound_ops(problem.v0prep, []))
        coeffs = [term.coefficient for term in problem.pauli.terms]
        d = np.array(
            [
                _insertion_weighted_sum(
                    circuit, theta, i, problem.pauli, v0_ops, coeffs, cfg, rng, local
                )
                for i in range(circuit.parameter_count)
            ]
        )
    return -2.0 * np.real(d * np.conj(t)) / norm_sq


def grad_analytic_solve(
    theta,
    problem: Problem,
    circuit: sv.Circuit,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
    counter: EvalCounter | None = None,
) -> np.ndarray:
    """dE/dtheta_i = 2 Re <d_i phi|M^dag M|phi> - 2 Re(<d_i phi|M^dag|v0> <v0|M|phi>)."""
    if rng is None and cfg.mode == "hadamard_shots":
        rng = np.random.default_rng(cfg.seed)
    local = counter or EvalCounter()
    if cfg.mode == "exact":
        phi = sv.prepare_state(circuit, theta)
        mphi = sv.apply_pauli_sum(phi, problem.pauli)
        chi1 = sv.apply_pauli_sum(mphi, problem.adjoint_pauli())
        d1 = sv.overlap_gradient(circuit, theta, chi1)
        d2 = sv.overlap_gradient(circuit, theta, problem.mdag_v0_state())
        w = complex(np.vdot(problem.v0_state().amplitudes, mphi.amplitudes))
        local.amplitude_evals += 2 * circuit.parameter_count + 1
        return 2.0 * np.real(d1) - 2.0 * np.real(d2 * w)
    mdm = problem.mdag_m()
    madj = problem.adjoint_pauli()
    ansatz_ops = tuple(sv.bound_ops(circuit, theta))
    v0_ops = tuple(sv.bound_ops(problem.v0prep, []))

    def make_overlap(j, phase):
        return AmplitudeLayout(
            circuit.qubit_count, v0_ops, ansatz_ops, problem.pauli.terms[j].letters, phase
        )

    w, _, _, _ = _weighted_amplitude_sum(problem.pauli, make_overlap, cfg, rng, local)
    grad = np.zeros(circuit.parameter_count)
    mdm_coeffs = [t.coefficient for t in mdm.terms]
    madj_coeffs = [t.coefficient for t in madj.terms]
    for i in range(circuit.parameter_count):
        d1 = _insertion_weighted_sum(
            circuit, theta, i, mdm, ansatz_ops, mdm_coeffs, cfg, rng, local
        )
        d2 = _insertion_weighted_sum(
            circuit, theta, i, madj, v0_ops, madj_coeffs, cfg, rng, local
        )
        grad[i] = 2.0 * d1.real - 2.0 * (d2 * w).real
    return grad


def ite_metric(
    theta,
    circuit: sv.Circuit,
    cfg: EstimatorConfig,
    rng: np.random.Generator | None = None,
    counter: EvalCounter | None = None,
) -> np.ndarray:
    """Metric M_ij = Re <d_i phi | d_j phi> used by imaginary-time updates."""
    L = circuit.parameter_count
    if cfg.mode == "exact":
        rows = sv.state_derivatives(circuit, theta)
        if counter is not None:
            counter.amplitude_evals += L * L
        return np.real(np.conj(rows) @ rows.T)
    if rng is None and cfg.mode == "hadamard_shots":
        rng = np.random.default_rng(cfg.seed)
    metric = np.zeros((L, L))
    variants = [sv.insertion_ops(circuit, theta, i) for i in range(L)]
    for i in range(L):
        for j in range(i, L):
            total = 0j
            for f_i, bra_ops in variants[i]:
                for f_j, ket_ops in variants[j]:
                    layout = AmplitudeLayout(
                        circuit.qubit_count, tuple(bra_ops), tuple(ket_ops)
                    )
                    amp, _, _ = _estimate_amplitude(layout, cfg, rng, counter)
                    total += np.conj(f_i) * f_j * amp
            metric[i, j] = metric[j, i] = total.real
    return metric


# ---------------------------------------------------------------------------
# Objective closures for the optimizers
# ---------------------------------------------------------------------------


class Objective:
    """Energy/gradient pair for one problem, circuit, and estimator config.

    Caches quantities that do not depend on theta (norms, adjoint sums), so
    optimization loops do not recompute them; in shot modes the normalizer is
    estimated once per problem.
    """

    def __init__(self, problem: Problem, circuit: sv.Circuit, cfg: EstimatorConfig):
        if circuit.qubit_count != problem.qubit_count:
            raise ValueError("circuit and problem qubit counts differ")
        self.problem = problem
        self.circuit = circuit
        self.cfg = cfg
        self.counter = EvalCounter()
        self.rng = (
            np.random.default_rng(cfg.seed) if cfg.mode == "hadamard_shots" else None
        )
        self._norm_sq: float | None = None

    def _multiply_norm_sq(self) -> float:
        if self._norm_sq is None:
            self._norm_sq, _ = estimate_mv0_norm_sq(
                self.problem, self.cfg, self.rng, self.counter
            )
        return self._norm_sq

    def energy_report(self, theta) -> EnergyReport:
        self.counter.energy_evals += 1
        if self.problem.task == "multiply":
            return energy_multiply(
                theta,
                self.problem,
                self.circuit,
                self.cfg,
                self.rng,
                self.counter,
                norm_sq=self._multiply_norm_sq(),
            )
        return energy_solve(
            theta, self.problem, self.circuit, self.cfg, self.rng, self.counter
        )

    def energy(self, theta) -> float:
        return self.energy_report(theta).value

    def gradient(self, theta, method: str = "analytic") -> np.ndarray:
        self.counter.gradient_evals += 1
        if method == "fd":
            return grad_fd(theta, self.energy)
        if method != "analytic":
            raise ValueError("gradient method must be 'fd' or 'analytic'")
        if self.problem.task == "multiply":
            return grad_analytic_multiply(
                theta,
                self.problem,
                self.circuit,
                self.cfg,
                self.rng,
                self.counter,
                norm_sq=self._multiply_norm_sq(),
            )
        return grad_analytic_solve(
            theta, self.problem, self.circuit, self.cfg, self.rng, self.counter
        )

    def value_and_gradient(self, theta) -> tuple[float, np.ndarray]:
        """Energy and analytic gradient sharing one state preparation (exact mode)."""
        if self.cfg.mode != "exact":
            return self.energy(theta), self.gradient(theta)
        self.counter.energy_evals += 1
        self.counter.gradient_evals += 1
        prob, circ = self.problem, self.circuit
        phi = sv.prepare_state(circ, theta)
        if prob.task == "multiply":
            nsq = self._multiply_norm_sq()
            if nsq < DEGENERATE_NORM_TOLERANCE:
                raise ValueError("degenerate problem: M|v0> is numerically zero")
            mv0 = prob.mv0_state()
            t = complex(np.vdot(phi.amplitudes, mv0.amplitudes))
            energy = 1.0 - abs(t) ** 2 / nsq
            d = sv.overlap_gradient(circ, theta, mv0)
            grad = -2.0 * np.real(d * np.conj(t)) / nsq
        else:
            mphi = sv.apply_pauli_sum(phi, prob.pauli)
            e1 = float(np.vdot(mphi.amplitudes, mphi.amplitudes).real)
            a = complex(np.vdot(prob.v0_state().amplitudes, mphi.amplitudes))
            energy = e1 - abs(a) ** 2
            chi1 = sv.apply_pauli_sum(mphi, prob.adjoint_pauli())
            d1 = sv.overlap_gradient(circ, theta, chi1)
            d2 = sv.overlap_gradient(circ, theta, prob.mdag_v0_state())
            grad = 2.0 * np.real(d1) - 2.0 * np.real(d2 * a)
        self.counter.amplitude_evals += 2 * circ.parameter_count + 1
        return energy, grad
