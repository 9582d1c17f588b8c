"""Energy/gradient estimation in exact, circuit-faithful, and sampled modes."""

import math

import numpy as np
import pytest
import scipy.linalg

from vqla import estimator as est
from vqla import pauli as pl
from vqla import statevec as sv
from vqla.problems import make_problem
from conftest import dense_pauli_sum, random_hermitian_problem, random_sparse

REF_2X2 = np.array([[1.5, -0.5], [0.5, 1.5]])
THETA_STAR = math.atan(0.75)

EXACT = est.EstimatorConfig()
HADAMARD = est.EstimatorConfig(mode="hadamard_exact")


@pytest.fixture
def ref_solve():
    return make_problem("solve", REF_2X2, "zero", allow_non_hermitian=True)


@pytest.fixture
def ref_multiply():
    return make_problem("multiply", REF_2X2, "zero")


@pytest.fixture
def one_param_circuit():
    return sv.Circuit(1, (sv.Gate("ry", 0, slot=0),), 1)


def ref_energy(theta: float) -> float:
    # dense-oracle closed form for e^{-i theta Y/2}|0> under H = 1.25I - Z + 0.75X
    return 1.25 - math.cos(theta) + 0.75 * math.sin(theta)


class TestHadamardTest:
    def test_identity_real_part(self):
        layout = est.amplitude_layout("overlap", sv.empty_circuit(1), [],
                                      term="I", v0prep=sv.empty_circuit(1))
        for cfg in (EXACT, HADAMARD):
            assert est.hadamard_test(layout, "real", cfg) == pytest.approx(1.0)

    def test_x_real_part_vanishes(self):
        layout = est.amplitude_layout("overlap", sv.empty_circuit(1), [],
                                      term="X", v0prep=sv.empty_circuit(1))
        for cfg in (EXACT, HADAMARD):
            assert est.hadamard_test(layout, "real", cfg) == pytest.approx(0.0, abs=1e-12)

    def test_double_insertion_amplitude_vs_dense(self):
        # <0| Y e^{-i t Y/2} Z e^{+i t Y/2} Y |0> at t = 0.3
        t = 0.3
        y = np.array([[0, -1j], [1j, 0]])
        z = np.diag([1.0, -1.0])
        expm = scipy.linalg.expm
        u = y @ expm(-0.5j * t * y) @ z @ expm(0.5j * t * y) @ y
        want = u[0, 0]
        side = (("y", 0, None, None, None), ("ry", 0, None, -t, None))
        layout = est.AmplitudeLayout(1, bra=side, ket=side, sandwich="Z")
        for cfg in (EXACT, HADAMARD):
            assert est.hadamard_test(layout, "real", cfg) == pytest.approx(want.real, abs=1e-10)
            assert est.hadamard_test(layout, "imag", cfg) == pytest.approx(want.imag, abs=1e-10)

    def test_invalid_part(self):
        layout = est.amplitude_layout("overlap", sv.empty_circuit(1), [],
                                      term="I", v0prep=sv.empty_circuit(1))
        with pytest.raises(ValueError):
            est.hadamard_test(layout, "abs", EXACT)

    def test_invalid_placement(self):
        with pytest.raises(ValueError):
            est.amplitude_layout("sideways", sv.empty_circuit(1), [], term="I")

    def test_zero_shots_rejected(self):
        with pytest.raises(ValueError):
            est.EstimatorConfig(mode="hadamard_shots", shots=0)

    def test_shots_mean_matches_probability(self):
        cfg = est.EstimatorConfig(mode="hadamard_shots", shots=10**6, seed=5)
        c = sv.Circuit(1, (sv.Gate("ry", 0, slot=0),), 1)
        layout = est.amplitude_layout("overlap", c, [0.8], term="I",
                                      v0prep=sv.empty_circuit(1))
        got = est.hadamard_test(layout, "real", cfg, np.random.default_rng(6))
        assert got == pytest.approx(math.cos(0.4), abs=5e-3)


class TestTransitionAmplitude:
    def test_identity_matrix(self):
        c = sv.build_hardware_ansatz(2, 0)
        got = est.transition_amplitude(
            np.zeros(4), pl.identity_sum(2), c, sv.empty_circuit(2), EXACT
        )
        assert got == pytest.approx(1.0)

    def test_reference_at_zero(self, ref_multiply, one_param_circuit):
        got = est.transition_amplitude(
            [0.0], ref_multiply.pauli, one_param_circuit, ref_multiply.v0prep, EXACT
        )
        assert got == pytest.approx(1.5)

    def test_modes_agree(self, rng):
        for _ in range(5):
            n = int(rng.integers(1, 3))
            p = pl.canonicalize(pl.decompose_elementwise(random_sparse(rng, n)))
            if not p.terms:
                continue
            c = sv.build_hardware_ansatz(n, 1)
            theta = rng.uniform(-1, 1, c.parameter_count)
            a = est.transition_amplitude(theta, p, c, sv.empty_circuit(n), EXACT)
            b = est.transition_amplitude(theta, p, c, sv.empty_circuit(n), HADAMARD)
            assert abs(a - b) < 1e-10

    def test_shots_within_five_stderr(self, rng):
        n = 2
        p = pl.canonicalize(pl.decompose_elementwise(random_sparse(rng, n)))
        c = sv.build_hardware_ansatz(n, 1)
        theta = rng.uniform(-1, 1, c.parameter_count)
        exact = est.transition_amplitude(theta, p, c, sv.empty_circuit(n), EXACT)
        shots = 10**6
        cfg = est.EstimatorConfig(mode="hadamard_shots", shots=shots, seed=2)
        sampled = est.transition_amplitude(
            theta, p, c, sv.empty_circuit(n), cfg, rng=np.random.default_rng(3)
        )
        scale = pl.one_norm(p) / math.sqrt(shots)
        assert abs(sampled.real - exact.real) < 5 * scale
        assert abs(sampled.imag - exact.imag) < 5 * scale

    def test_empty_sum(self, one_param_circuit):
        with pytest.raises(ValueError):
            est.transition_amplitude(
                [0.0], pl.PauliSum((), 1), one_param_circuit, sv.empty_circuit(1), EXACT
            )


class TestHoeffdingSampling:
    def test_sampled_stderr_bounded_by_one_norm(self, rng):
        a = rng.normal(size=(4, 4))
        problem = make_problem("multiply", a + a.T, "zero")
        c = sv.build_hardware_ansatz(2, 1)
        theta = rng.uniform(-0.5, 0.5, c.parameter_count)
        shots = 256
        cfg = est.EstimatorConfig(mode="hadamard_shots", shots=shots, seed=0,
                                  sample_threshold=0)
        exact = est.transition_amplitude(theta, problem.pauli, c, problem.v0prep, EXACT)
        values = [
            est.transition_amplitude(
                theta, problem.pauli, c, problem.v0prep, cfg,
                rng=np.random.default_rng([rep, 99]),
            ).real
            for rep in range(200)
        ]
        bound = pl.one_norm(problem.pauli) / math.sqrt(shots)
        assert np.std(values) <= 1.05 * bound
        assert abs(np.mean(values) - exact.real) <= 4 * np.std(values) / math.sqrt(200)


class TestEnergyMultiply:
    def test_ground_state_energy_zero(self, ref_multiply, one_param_circuit):
        # M|0> normalized = (3, 1)/sqrt(10): reachable at theta = 2*atan(1/3)
        theta = 2 * math.atan(1 / 3)
        report = est.energy_multiply([theta], ref_multiply, one_param_circuit, EXACT)
        assert abs(report.value) < 1e-12

    def test_orthogonal_state_energy_one(self, ref_multiply, one_param_circuit):
        theta = 2 * math.atan(1 / 3) + math.pi
        report = est.energy_multiply([theta], ref_multiply, one_param_circuit, EXACT)
        assert report.value == pytest.approx(1.0, abs=1e-12)

    def test_reference_at_theta_zero(self, ref_multiply, one_param_circuit):
        # 1 - 1.5^2 / 2.5, with ||M|0>||^2 = 2.5
        report = est.energy_multiply([0.0], ref_multiply, one_param_circuit, EXACT)
        assert report.value == pytest.approx(0.1, abs=1e-12)

    def test_degenerate_problem_rejected(self, one_param_circuit):
        m = pl.pauli_sum([(1.0, "I"), (-1.0, "Z")])  # annihilates |0>
        problem = make_problem("multiply", m, "zero")
        with pytest.raises(ValueError, match="degenerate"):
            est.energy_multiply([0.3], problem, one_param_circuit, EXACT)

    def test_range_invariant(self, rng):
        for _ in range(6):
            n = int(rng.integers(1, 3))
            problem = random_hermitian_problem(rng, n, 5.0, task="multiply")
            c = sv.build_hardware_ansatz(n, 1)
            theta = rng.uniform(-np.pi, np.pi, c.parameter_count)
            value = est.energy_multiply(theta, problem, c, EXACT).value
            assert -1e-10 <= value <= 1.0 + 1e-10


class TestEnergySolve:
    def test_reference_closed_form_family(self, ref_solve, one_param_circuit):
        # verified against the dense Hamiltonian oracle in ref_energy
        h = dense_pauli_sum(est.solve_hamiltonian_pauli(ref_solve))
        for theta in np.linspace(-3, 3, 9):
            phi = np.array([math.cos(theta / 2), math.sin(theta / 2)])
            assert (phi @ h @ phi).real == pytest.approx(ref_energy(theta), abs=1e-12)
            report = est.energy_solve([theta], ref_solve, one_param_circuit, EXACT)
            assert report.value == pytest.approx(ref_energy(theta), abs=1e-12)

    def test_reference_key_values(self, ref_solve, one_param_circuit):
        assert est.energy_solve([0.0], ref_solve, one_param_circuit, EXACT).value == pytest.approx(0.25)
        assert abs(est.energy_solve([-THETA_STAR], ref_solve, one_param_circuit, EXACT).value) < 1e-12

    def test_solve_hamiltonian_pauli_form(self, ref_solve):
        h = est.solve_hamiltonian_pauli(ref_solve)
        coeffs = {t.letters: t.coefficient for t in h.terms}
        assert coeffs["I"] == pytest.approx(1.25, abs=1e-12)
        assert coeffs["Z"] == pytest.approx(-1.0, abs=1e-12)
        assert coeffs["X"] == pytest.approx(0.75, abs=1e-12)

    def test_solve_hamiltonian_needs_basis_v0(self, rng):
        v0c = sv.bind(sv.build_hardware_ansatz(1, 0), [0.7, 0.3])
        problem = make_problem("solve", np.diag([1.0, 2.0]), v0c)
        with pytest.raises(ValueError, match="basis"):
            est.solve_hamiltonian_pauli(problem)

    def test_non_hermitian_rejected_without_optin(self):
        with pytest.raises(ValueError, match="Hermitian embedding"):
            make_problem("solve", REF_2X2, "zero")

    def test_psd_invariant(self, rng):
        for _ in range(8):
            n = int(rng.integers(1, 4))
            problem = random_hermitian_problem(rng, n, 10.0)
            c = sv.build_hardware_ansatz(n, 1)
            theta = rng.uniform(-np.pi, np.pi, c.parameter_count)
            assert est.energy_solve(theta, problem, c, EXACT).value >= -1e-10

    def test_modes_agree(self, rng, ref_solve, one_param_circuit):
        for theta in (0.0, 0.4, -1.1):
            a = est.energy_solve([theta], ref_solve, one_param_circuit, EXACT).value
            b = est.energy_solve([theta], ref_solve, one_param_circuit, HADAMARD).value
            assert abs(a - b) < 1e-10
        problem = random_hermitian_problem(rng, 2, 4.0)
        c = sv.build_hardware_ansatz(2, 1)
        theta = rng.uniform(-1, 1, c.parameter_count)
        a = est.energy_solve(theta, problem, c, EXACT).value
        b = est.energy_solve(theta, problem, c, HADAMARD).value
        assert abs(a - b) < 1e-10

    def test_shots_stderr_reported(self, ref_solve, one_param_circuit):
        cfg = est.EstimatorConfig(mode="hadamard_shots", shots=10**4, seed=1)
        report = est.energy_solve([0.3], ref_solve, one_param_circuit, cfg)
        exact = est.energy_solve([0.3], ref_solve, one_param_circuit, EXACT).value
        assert report.stderr is not None and report.stderr > 0
        assert abs(report.value - exact) < 6 * report.stderr


class TestGradients:
    def test_fd_constant_energy(self):
        grad = est.grad_fd(np.zeros(3), lambda theta: 2.5)
        assert np.allclose(grad, 0.0)

    def test_fd_reference_at_zero(self, ref_solve, one_param_circuit):
        # d/dtheta [1.25 - cos t + 0.75 sin t] at 0 = +0.75
        grad = est.grad_fd(
            np.array([0.0]),
            lambda th: est.energy_solve(th, ref_solve, one_param_circuit, EXACT).value,
        )
        assert grad[0] == pytest.approx(0.75, abs=1e-6)

    def test_fd_requires_positive_delta(self):
        with pytest.raises(ValueError):
            est.grad_fd(np.zeros(1), lambda t: 0.0, delta=0.0)

    def test_analytic_solve_reference_closed_form(self, ref_solve, one_param_circuit):
        for theta in (-1.0, -0.2, 0.5):
            grad = est.grad_analytic_solve([theta], ref_solve, one_param_circuit, EXACT)
            want = math.sin(theta) + 0.75 * math.cos(theta)
            assert grad[0] == pytest.approx(want, abs=1e-12)

    def test_analytic_multiply_stationary_at_solution(self, ref_multiply, one_param_circuit):
        theta = 2 * math.atan(1 / 3)
        grad = est.grad_analytic_multiply([theta], ref_multiply, one_param_circuit, EXACT)
        assert abs(grad[0]) < 1e-8

    def test_analytic_solve_stationary_at_solution(self, ref_solve, one_param_circuit):
        grad = est.grad_analytic_solve([-THETA_STAR], ref_solve, one_param_circuit, EXACT)
        assert abs(grad[0]) < 1e-8

    def test_analytic_vs_fd_random_instances(self, rng):
        for _ in range(6):
            n = int(rng.integers(1, 4))
            m = int(rng.integers(0, 3))
            circuit = sv.build_hardware_ansatz(n, m)
            theta = rng.uniform(-0.7, 0.7, circuit.parameter_count)
            solve_p = random_hermitian_problem(rng, n, 3.0)
            # unit spectral scale keeps the fd truncation term representative
            mult_dense = pl.pauli_to_matrix(solve_p.pauli) / 3.0
            mult_p = make_problem("multiply", mult_dense, "zero")
            g = est.grad_analytic_solve(theta, solve_p, circuit, EXACT)
            g_fd = est.grad_fd(
                theta, lambda t: est.energy_solve(t, solve_p, circuit, EXACT).value
            )
            assert np.max(np.abs(g - g_fd)) < 1e-4
            g2 = est.grad_analytic_multiply(theta, mult_p, circuit, EXACT)
            g2_fd = est.grad_fd(
                theta, lambda t: est.energy_multiply(t, mult_p, circuit, EXACT).value
            )
            assert np.max(np.abs(g2 - g2_fd)) < 1e-5

    def test_hadamard_gradients_match_exact(self, rng):
        circuit = sv.build_hardware_ansatz(2, 1)
        theta = rng.uniform(-0.5, 0.5, circuit.parameter_count)
        solve_p = random_hermitian_problem(rng, 2, 3.0)
        a = est.grad_analytic_solve(theta, solve_p, circuit, EXACT)
        b = est.grad_analytic_solve(theta, solve_p, circuit, HADAMARD)
        assert np.max(np.abs(a - b)) < 1e-10
        mult_p = make_problem("multiply", pl.pauli_to_matrix(solve_p.pauli), "zero")
        a = est.grad_analytic_multiply(theta, mult_p, circuit, EXACT)
        b = est.grad_analytic_multiply(theta, mult_p, circuit, HADAMARD)
        assert np.max(np.abs(a - b)) < 1e-10

    def test_value_and_gradient_consistent(self, rng):
        for task in ("solve", "multiply"):
            problem = random_hermitian_problem(rng, 2, 4.0, task=task)
            circuit = sv.build_hardware_ansatz(2, 1)
            objective = est.Objective(problem, circuit, EXACT)
            theta = rng.uniform(-1, 1, circuit.parameter_count)
            e, g = objective.value_and_gradient(theta)
            assert e == pytest.approx(objective.energy(theta), abs=1e-13)
            assert np.max(np.abs(g - objective.gradient(theta))) < 1e-12


class TestIteMetric:
    def test_single_ry_metric_quarter(self, one_param_circuit):
        assert est.ite_metric([0.4], one_param_circuit, EXACT)[0, 0] == pytest.approx(0.25)
        assert est.ite_metric([0.4], one_param_circuit, HADAMARD)[0, 0] == pytest.approx(
            0.25, abs=1e-10
        )

    def test_metric_vs_finite_difference_states(self, rng):
        c = sv.build_hardware_ansatz(2, 1)
        theta = rng.uniform(-1, 1, c.parameter_count)
        metric = est.ite_metric(theta, c, EXACT)
        eps = 1e-5
        rows = []
        for i in range(c.parameter_count):
            shift = np.zeros_like(theta)
            shift[i] = eps
            rows.append(
                (
                    sv.prepare_state(c, theta + shift).amplitudes
                    - sv.prepare_state(c, theta - shift).amplitudes
                )
                / (2 * eps)
            )
        rows = np.array(rows)
        want = np.real(np.conj(rows) @ rows.T)
        assert np.max(np.abs(metric - want)) < 1e-6


class TestEnergyReport:
    def test_json_dict(self):
        report = est.EnergyReport(0.5, 0.01, "hadamard_shots", 128, 12,
                                  term_amplitudes=[1 + 2j])
        out = report.to_json_dict()
        assert out["value"] == 0.5
        assert out["term_amplitudes"] == [[1.0, 2.0]]

    def test_exact_reports_no_stderr(self, ref_solve, one_param_circuit):
        report = est.energy_solve([0.1], ref_solve, one_param_circuit, EXACT)
        assert report.stderr is None
        assert report.amplitude_evals > 0
