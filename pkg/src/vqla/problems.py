"""Problem descriptors shared by the estimator, optimizer, and benchmark layers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import pauli as pl
from . import statevec as sv

TASKS = ("multiply", "solve")

HERMITICITY_TOLERANCE = 1e-10

NON_HERMITIAN_RECIPE = (
    "matrix is not Hermitian; either pass allow_non_hermitian=True to proceed "
    "best-effort, or apply the standard Hermitian embedding first: solve "
    "[[0, M], [M^dag, 0]] y = [v0, 0] on one extra qubit and read the solution "
    "off the second block"
)


@dataclass(eq=False)
class Problem:
    """A linear-algebra task: the matrix (as a Pauli sum), v0, and metadata.

    Instances are immutable after construction; private slots cache dense
    intermediates for the exact estimator path.
    """

    task: str
    pauli: pl.PauliSum
    v0prep: sv.Circuit
    qubit_count: int
    sparse: pl.SparseMatrix | None = None
    kappa: float | None = None
    seed: int | None = None
    allow_non_hermitian: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.pauli.qubit_count != self.qubit_count:
            raise ValueError("matrix qubit count does not match problem")
        if self.v0prep.qubit_count != self.qubit_count:
            raise ValueError("v0 circuit qubit count does not match problem")
        if self.v0prep.parameter_count != 0:
            raise ValueError("v0 circuit must be parameter-free")
        if not self.pauli.terms:
            raise ValueError("matrix has no terms")
        if self.task == "solve" and not self.allow_non_hermitian:
            defect = pl.hermiticity_defect(self.pauli)
            scale = max(abs(t.coefficient) for t in self.pauli.terms)
            if defect > HERMITICITY_TOLERANCE * max(1.0, scale):
                raise ValueError(NON_HERMITIAN_RECIPE)

    # Cached exact-mode intermediates -------------------------------------

    def v0_state(self) -> sv.StateVector:
        if "v0" not in self._cache:
            self._cache["v0"] = sv.prepare_state(self.v0prep, [])
        return self._cache["v0"].copy()

    def mv0_state(self) -> sv.StateVector:
        """Unnormalized M|v0>."""
        if "mv0" not in self._cache:
            self._cache["mv0"] = sv.apply_pauli_sum(self.v0_state(), self.pauli)
        return self._cache["mv0"].copy()

    def mv0_norm_sq(self) -> float:
        if "mv0_norm_sq" not in self._cache:
            self._cache["mv0_norm_sq"] = self.mv0_state().norm() ** 2
        return self._cache["mv0_norm_sq"]

    def adjoint_pauli(self) -> pl.PauliSum:
        if "adjoint" not in self._cache:
            self._cache["adjoint"] = pl.adjoint_sum(self.pauli)
        return self._cache["adjoint"]

    def mdag_m(self) -> pl.PauliSum:
        """M^dag M as a canonical Pauli sum (symbolic product)."""
        if "mdag_m" not in self._cache:
            self._cache["mdag_m"] = pl.sum_product(self.adjoint_pauli(), self.pauli)
        return self._cache["mdag_m"]

    def mdag_v0_state(self) -> sv.StateVector:
        """Unnormalized M^dag |v0>."""
        if "mdag_v0" not in self._cache:
            self._cache["mdag_v0"] = sv.apply_pauli_sum(
                self.v0_state(), self.adjoint_pauli()
            )
        return self._cache["mdag_v0"].copy()

    def dense_matrix(self) -> np.ndarray:
        if "dense" not in self._cache:
            self._cache["dense"] = pl.pauli_to_matrix(self.pauli)
        return self._cache["dense"]


def zero_v0(qubit_count: int) -> sv.Circuit:
    """State preparation for |0...0>: the empty circuit."""
    return sv.empty_circuit(qubit_count)


def make_problem(
    task: str,
    matrix,
    v0prep: sv.Circuit | str | None = None,
    *,
    kappa: float | None = None,
    seed: int | None = None,
    allow_non_hermitian: bool = False,
) -> Problem:
    """Normalize assorted matrix/v0 inputs into a Problem.

    ``matrix`` may be a PauliSum, SparseMatrix, or dense ndarray; ``v0prep``
    may be a parameter-free Circuit, the string "zero", or None (meaning |0>).
    """
    sparse = None
    if isinstance(matrix, pl.PauliSum):
        psum = pl.canonicalize(matrix)
    elif isinstance(matrix, pl.SparseMatrix):
        sparse = matrix
        psum = pl.canonicalize(pl.decompose_elementwise(matrix))
    else:
        sparse = pl.sparse_from_dense(np.asarray(matrix, dtype=complex))
        psum = pl.canonicalize(pl.decompose_elementwise(sparse))
    if not psum.terms:
        raise ValueError("matrix is numerically zero")
    n = psum.qubit_count
    if v0prep is None or v0prep == "zero":
        v0prep = zero_v0(n)
    return Problem(
        task,
        psum,
        v0prep,
        n,
        sparse=sparse,
        kappa=kappa,
        seed=seed,
        allow_non_hermitian=allow_non_hermitian,
    )


def interpolate_problem(problem: Problem, fraction: float) -> Problem:
    """Continuation matrix M(s) = (1 - s) I + s M with metadata carried along.

    For a Hermitian matrix with spectrum in [1, kappa] the interpolant's
    condition number is 1 + s (kappa - 1).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if fraction == 1.0:
        return problem
    interp = pl.add_sums(
        pl.identity_sum(problem.qubit_count, 1.0 - fraction),
        pl.scale_sum(problem.pauli, fraction),
    )
    kappa = None
    if problem.kappa is not None:
        kappa = 1.0 + fraction * (problem.kappa - 1.0)
    return Problem(
        problem.task,
        interp,
        problem.v0prep,
        problem.qubit_count,
        kappa=kappa,
        seed=problem.seed,
        allow_non_hermitian=problem.allow_non_hermitian,
    )


def condition_number_dense(a: np.ndarray, tol: float = 1e-12) -> float:
    """Eigenvalue-magnitude ratio of a Hermitian matrix."""
    a = np.asarray(a)
    if not np.allclose(a, a.conj().T, atol=HERMITICITY_TOLERANCE * max(1.0, np.abs(a).max())):
        raise ValueError("condition number by eigenvalues requires a Hermitian matrix")
    mags = np.abs(np.linalg.eigvalsh(a))
    if mags.min() < tol:
        raise ValueError("matrix is numerically singular")
    return float(mags.max() / mags.min())


def singular_condition_number(a: np.ndarray, tol: float = 1e-12) -> float:
    """Singular-value ratio; works for any matrix."""
    s = np.linalg.svd(np.asarray(a), compute_uv=False)
    if s.min() < tol:
        raise ValueError("matrix is numerically singular")
    return float(s.max() / s.min())
