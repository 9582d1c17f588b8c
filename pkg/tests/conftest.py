"""Shared dense-matrix oracles and instance generators for the test suite.

Everything here is built independently of the package's statevector kernels:
gates are Kronecker products assembled in place, energies come from dense
Hamiltonians, and reference solutions use numpy's solve/eig/expm directly.
"""

import numpy as np
import pytest
import scipy.linalg

from vqla import pauli as pl
from vqla import statevec as sv
from vqla.problems import make_problem

I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_at(mat: np.ndarray, qubit: int, n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        out = np.kron(out, mat if k == qubit else I2)
    return out


def dense_gate(op, n: int) -> np.ndarray:
    """Dense matrix of one bound circuit operation (independent oracle)."""
    kind, target, control, angle, _ = op
    if kind == "ry":
        return scipy.linalg.expm(-0.5j * angle * kron_at(PAULI["Y"], target, n))
    if kind == "rz":
        return scipy.linalg.expm(-0.5j * angle * kron_at(PAULI["Z"], target, n))
    if kind in ("x", "y", "z"):
        return kron_at(PAULI[kind.upper()], target, n)
    if kind == "cnot":
        dim = 1 << n
        m = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            bit = (col >> (n - 1 - control)) & 1
            row = col ^ ((1 << (n - 1 - target)) if bit else 0)
            m[row, col] = 1.0
        return m
    raise ValueError(kind)


def dense_circuit_state(circuit: sv.Circuit, theta) -> np.ndarray:
    """Reference state built by explicit dense matrix products."""
    n = circuit.qubit_count
    state = np.zeros(1 << n, dtype=complex)
    state[0] = 1.0
    for op in sv.bound_ops(circuit, theta):
        state = dense_gate(op, n) @ state
    return state


def dense_pauli_sum(p: pl.PauliSum) -> np.ndarray:
    """Independent dense expansion of a Pauli sum (kron built here)."""
    dim = 1 << p.qubit_count
    out = np.zeros((dim, dim), dtype=complex)
    for term in p.terms:
        m = np.ones((1, 1), dtype=complex)
        for letter in term.letters:
            m = np.kron(m, PAULI[letter])
        out += term.coefficient * m
    return out


def random_sparse(rng: np.random.Generator, n: int, density: float = 0.4) -> pl.SparseMatrix:
    dim = 1 << n
    entries = []
    for x in range(dim):
        for y in range(dim):
            if rng.random() < density:
                entries.append((x, y, complex(rng.normal(), rng.normal())))
    if not entries:
        entries.append((0, 0, 1.0 + 0j))
    return pl.SparseMatrix(dim, tuple(entries))


def random_hermitian_problem(rng: np.random.Generator, n: int, kappa: float,
                             task: str = "solve", v0: str | sv.Circuit = "zero",
                             seed: int | None = None):
    """Hermitian positive matrix with eigenvalues pinned to [1, kappa]."""
    dim = 1 << n
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    if dim > 2:
        evals = np.concatenate([[1.0, kappa], rng.uniform(1.0, kappa, dim - 2)])
    else:
        evals = np.array([1.0, kappa])
    dense = (q * evals) @ q.conj().T
    dense = 0.5 * (dense + dense.conj().T)
    return make_problem(task, dense, v0, kappa=float(kappa), seed=seed)


def random_state(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def lindblad_rk4(h: np.ndarray, rho0: np.ndarray, jumps, dt: float, steps: int) -> np.ndarray:
    """Fourth-order dense master-equation integrator (trajectory-average oracle)."""

    def rhs(rho):
        out = -1j * (h @ rho - rho @ h)
        for L in jumps:
            ld = L.conj().T
            ldl = ld @ L
            out += L @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)
        return out

    rho = rho0.copy()
    for _ in range(steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
    return rho


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
