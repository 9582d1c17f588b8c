"""Pauli-string algebra and decomposition of matrices into weighted unitaries.

Operators are represented as sums sum_j lambda_j sigma_j where each sigma_j is
a tensor product of single-qubit operators from {I, X, Y, Z}.  Qubit 0 is the
most significant bit of a basis-state index, matching the Kronecker-product
order used by :func:`pauli_to_matrix`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

PAULI_LETTERS = "IXYZ"

PAULI_MATRICES = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Dense matrices stay manageable up to this many qubits; oracle-style helpers
# (pauli_to_matrix, dense verification) refuse to go past it.
ORACLE_QUBIT_CAP = 12

# |coeff| below this is floating-point dust and gets pruned on canonicalization.
PRUNE_THRESHOLD = 1e-14

# Single-qubit projector/ladder expansions, e.g. |0><1| = (X + iY)/2.
_PROJECTOR_EXPANSION = {
    (0, 0): (("I", 0.5 + 0j), ("Z", 0.5 + 0j)),
    (0, 1): (("X", 0.5 + 0j), ("Y", 0.5j)),
    (1, 0): (("X", 0.5 + 0j), ("Y", -0.5j)),
    (1, 1): (("I", 0.5 + 0j), ("Z", -0.5 + 0j)),
}


def _build_product_table():
    table = {}
    for a, b in itertools.product(PAULI_LETTERS, repeat=2):
        m = PAULI_MATRICES[a] @ PAULI_MATRICES[b]
        for c in PAULI_LETTERS:
            for phase in (1, -1, 1j, -1j):
                if np.array_equal(m, phase * PAULI_MATRICES[c]):
                    table[a, b] = (complex(phase), c)
    return table


# (letter, letter) -> (unit phase, letter), e.g. ("X", "Y") -> (1j, "Z").
_PRODUCT_TABLE = _build_product_table()


@dataclass(frozen=True)
class PauliTerm:
    """One weighted Pauli string: coefficient times a tensor product of letters."""

    coefficient: complex
    letters: str

    def __post_init__(self):
        if not self.letters or any(c not in PAULI_LETTERS for c in self.letters):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")
        c = complex(self.coefficient)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise ValueError("non-finite Pauli coefficient")
        object.__setattr__(self, "coefficient", c)

    @property
    def qubit_count(self) -> int:
        return len(self.letters)


@dataclass(eq=False)
class PauliSum:
    """A weighted sum of Pauli strings on a fixed number of qubits.

    Treated as immutable after construction; the private ``_kernel`` slot
    caches vectorized application data and is safe to share across threads.
    """

    terms: tuple[PauliTerm, ...]
    qubit_count: int
    _kernel: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.terms = tuple(self.terms)
        if self.qubit_count < 1:
            raise ValueError("qubit_count must be >= 1")
        for t in self.terms:
            if t.qubit_count != self.qubit_count:
                raise ValueError(
                    f"term {t.letters!r} does not act on {self.qubit_count} qubits"
                )

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other):
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.qubit_count == other.qubit_count and self.terms == other.terms


def identity_sum(qubit_count: int, coefficient: complex = 1.0) -> PauliSum:
    return PauliSum((PauliTerm(coefficient, "I" * qubit_count),), qubit_count)


def pauli_sum(terms, qubit_count: int | None = None) -> PauliSum:
    """Build a PauliSum from (coefficient, letters) pairs or PauliTerm objects."""
    built = tuple(
        t if isinstance(t, PauliTerm) else PauliTerm(t[0], t[1]) for t in terms
    )
    if qubit_count is None:
        if not built:
            raise ValueError("qubit_count required for an empty sum")
        qubit_count = built[0].qubit_count
    return PauliSum(built, qubit_count)


def pauli_to_matrix(p: PauliSum | PauliTerm, max_qubits: int = ORACLE_QUBIT_CAP) -> np.ndarray:
    """Dense 2^n x 2^n matrix of a Pauli sum.  Intended as a desk-scale oracle."""
    if isinstance(p, PauliTerm):
        p = PauliSum((p,), p.qubit_count)
    n = p.qubit_count
    if n > max_qubits:
        raise ValueError(f"dense expansion capped at {max_qubits} qubits, got {n}")
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for term in p.terms:
        m = np.ones((1, 1), dtype=complex)
        for letter in term.letters:
            m = np.kron(m, PAULI_MATRICES[letter])
        out += term.coefficient * m
    return out


@dataclass(frozen=True)
class SparseMatrix:
    """Coordinate-list complex matrix of dimension N (not necessarily 2^n)."""

    dimension: int
    entries: tuple[tuple[int, int, complex], ...]

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        seen = set()
        cleaned = []
        for x, y, v in self.entries:
            if not (0 <= x < self.dimension and 0 <= y < self.dimension):
                raise ValueError(f"entry ({x}, {y}) out of range for N={self.dimension}")
            if (x, y) in seen:
                raise ValueError(f"duplicate entry at ({x}, {y})")
            seen.add((x, y))
            cleaned.append((int(x), int(y), complex(v)))
        if not any(v != 0 for _, _, v in cleaned):
            raise ValueError("matrix has no nonzero entry")
        object.__setattr__(self, "entries", tuple(cleaned))

    @property
    def qubit_count(self) -> int:
        return max(1, math.ceil(math.log2(self.dimension)))


def sparse_to_dense(m: SparseMatrix, pad_to_qubits: bool = False) -> np.ndarray:
    dim = (1 << m.qubit_count) if pad_to_qubits else m.dimension
    out = np.zeros((dim, dim), dtype=complex)
    for x, y, v in m.entries:
        out[x, y] = v
    return out


def sparse_from_dense(a: np.ndarray, tol: float = 0.0) -> SparseMatrix:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    entries = [
        (x, y, complex(a[x, y]))
        for x in range(a.shape[0])
        for y in range(a.shape[1])
        if abs(a[x, y]) > tol
    ]
    return SparseMatrix(a.shape[0], tuple(entries))


def decompose_elementwise(m: SparseMatrix) -> PauliSum:
    """Expand each nonzero entry M_xy |x><y| into 2^n Pauli strings.

    The output is not canonicalized: it carries at most nnz * 2^n terms and
    its one-norm equals sum |M_xy| exactly.
    """
    n = m.qubit_count
    terms = []
    for x, y, v in m.entries:
        if v == 0:
            continue
        options = []
        for q in range(n):
            shift = n - 1 - q
            options.append(_PROJECTOR_EXPANSION[(x >> shift) & 1, (y >> shift) & 1])
        for combo in itertools.product(*options):
            letters = "".join(c[0] for c in combo)
            coeff = v
            for _, w in combo:
                coeff *= w
            terms.append(PauliTerm(coeff, letters))
    return PauliSum(tuple(terms), n)


def canonicalize(p: PauliSum) -> PauliSum:
    """Merge equal letter strings, prune dust coefficients, sort lexicographically."""
    acc: dict[str, complex] = {}
    for t in p.terms:
        acc[t.letters] = acc.get(t.letters, 0j) + t.coefficient
    merged = tuple(
        PauliTerm(c, s)
        for s, c in sorted(acc.items())
        if abs(c) >= PRUNE_THRESHOLD
    )
    return PauliSum(merged, p.qubit_count)


def one_norm(p: PauliSum) -> float:
    """Sum of coefficient magnitudes, accumulated exactly via fsum."""
    return math.fsum(abs(t.coefficient) for t in p.terms)


def adjoint_sum(p: PauliSum) -> PauliSum:
    """Hermitian adjoint: Pauli strings are self-adjoint, so conjugate weights."""
    return PauliSum(
        tuple(PauliTerm(t.coefficient.conjugate(), t.letters) for t in p.terms),
        p.qubit_count,
    )


def scale_sum(p: PauliSum, c: complex) -> PauliSum:
    return PauliSum(
        tuple(PauliTerm(c * t.coefficient, t.letters) for t in p.terms),
        p.qubit_count,
    )


def add_sums(*sums: PauliSum) -> PauliSum:
    if not sums:
        raise ValueError("nothing to add")
    n = sums[0].qubit_count
    if any(s.qubit_count != n for s in sums):
        raise ValueError("qubit counts differ")
    terms = tuple(t for s in sums for t in s.terms)
    return canonicalize(PauliSum(terms, n))


def term_product(a: PauliTerm, b: PauliTerm) -> PauliTerm:
    if a.qubit_count != b.qubit_count:
        raise ValueError("qubit counts differ")
    phase = 1 + 0j
    letters = []
    for la, lb in zip(a.letters, b.letters):
        ph, lc = _PRODUCT_TABLE[la, lb]
        phase *= ph
        letters.append(lc)
    return PauliTerm(a.coefficient * b.coefficient * phase, "".join(letters))


def sum_product(a: PauliSum, b: PauliSum, term_cap: int = 4096) -> PauliSum:
    """Symbolic product of two Pauli sums, canonicalized.

    Raises when the raw product would exceed ``term_cap`` terms; the intended
    workloads stay well below it.
    """
    if a.qubit_count != b.qubit_count:
        raise ValueError("qubit counts differ")
    if len(a.terms) * len(b.terms) > term_cap:
        raise ValueError(
            f"product of {len(a.terms)} x {len(b.terms)} terms exceeds cap {term_cap}"
        )
    terms = tuple(term_product(ta, tb) for ta in a.terms for tb in b.terms)
    return canonicalize(PauliSum(terms, a.qubit_count))


def hermiticity_defect(p: PauliSum) -> float:
    """Largest imaginary coefficient magnitude of the canonical form.

    Zero exactly when the represented matrix is Hermitian (Pauli strings form
    a real basis for Hermitian matrices).
    """
    canon = canonicalize(p)
    if not canon.terms:
        return 0.0
    return max(abs(t.coefficient.imag) for t in canon.terms)


def projector_sum(qubit_count: int, basis_index: int) -> PauliSum:
    """Pauli expansion of the rank-one projector onto one basis state."""
    dim = 1 << qubit_count
    if not 0 <= basis_index < dim:
        raise ValueError("basis index out of range")
    m = SparseMatrix(dim, ((basis_index, basis_index, 1.0 + 0j),))
    return canonicalize(decompose_elementwise(m))


# ---------------------------------------------------------------------------
# Importance sampling over terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LcuSampler:
    """Samples term indices with probability |lambda_j| / C, C = sum |lambda_j|."""

    source: PauliSum
    one_norm: float
    probabilities: np.ndarray
    phases: np.ndarray
    _cumulative: np.ndarray = field(repr=False)


def build_sampler(p: PauliSum) -> LcuSampler:
    if not p.terms:
        raise ValueError("cannot sample an empty sum")
    weights = np.array([abs(t.coefficient) for t in p.terms], dtype=float)
    norm = math.fsum(weights)
    if norm <= 0.0:
        raise ValueError("all coefficients vanish; sampler is invalid")
    probs = weights / norm
    probs /= probs.sum()
    phases = np.array(
        [t.coefficient / abs(t.coefficient) if abs(t.coefficient) > 0 else 1.0 for t in p.terms],
        dtype=complex,
    )
    return LcuSampler(p, norm, probs, phases, np.cumsum(probs))


def sample_term(s: LcuSampler, rng: np.random.Generator) -> tuple[int, complex]:
    """Draw one term index and return it with the unit phase of its coefficient."""
    j = int(np.searchsorted(s._cumulative, rng.random(), side="right"))
    j = min(j, len(s.probabilities) - 1)
    return j, complex(s.phases[j])


def sample_term_counts(s: LcuSampler, rng: np.random.Generator, draws: int) -> np.ndarray:
    """Multinomial draw of per-term counts; equivalent to ``draws`` sample_term calls."""
    return rng.multinomial(draws, s.probabilities)


# ---------------------------------------------------------------------------
# Text / file formats
# ---------------------------------------------------------------------------


def pauli_text_dumps(p: PauliSum) -> str:
    """One term per line: "coeff_re coeff_im LETTERS"."""
    lines = [
        f"{t.coefficient.real:.17g} {t.coefficient.imag:.17g} {t.letters}"
        for t in p.terms
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def pauli_text_loads(text: str, qubit_count: int | None = None) -> PauliSum:
    terms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 're im LETTERS', got {raw!r}")
        re_s, im_s, letters = parts
        terms.append(PauliTerm(complex(float(re_s), float(im_s)), letters))
    return pauli_sum(terms, qubit_count)


def sparse_from_json(source: str | dict) -> SparseMatrix:
    """Parse {"n": dimension, "entries": [[x, y, re, im], ...]} (0-indexed)."""
    obj = json.loads(source) if isinstance(source, str) else source
    try:
        dim = int(obj["n"])
        raw = obj["entries"]
    except (KeyError, TypeError) as exc:
        raise ValueError("expected keys 'n' and 'entries'") from exc
    entries = []
    for e in raw:
        if len(e) == 4:
            x, y, re_v, im_v = e
        elif len(e) == 3:
            x, y, re_v = e
            im_v = 0.0
        else:
            raise ValueError(f"bad entry {e!r}")
        entries.append((int(x), int(y), complex(float(re_v), float(im_v))))
    return SparseMatrix(dim, tuple(entries))


def sparse_to_json(m: SparseMatrix) -> dict:
    return {
        "n": m.dimension,
        "entries": [[x, y, v.real, v.imag] for x, y, v in m.entries],
    }


def sparse_from_matrix_market(text: str) -> SparseMatrix:
    """Parse Matrix Market coordinate format (1-indexed, real or complex)."""
    lines = iter(text.splitlines())
    header_field = None
    size_line = None
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("%%MatrixMarket"):
            parts = line.lower().split()
            if "coordinate" not in parts:
                raise ValueError("only coordinate-format Matrix Market input is supported")
            header_field = "complex" if "complex" in parts else "real"
            continue
        if line.startswith("%"):
            continue
        size_line = line
        break
    if size_line is None:
        raise ValueError("missing Matrix Market size line")
    dims = size_line.split()
    if len(dims) != 3:
        raise ValueError(f"bad size line {size_line!r}")
    rows, cols, nnz = (int(d) for d in dims)
    if rows != cols:
        raise ValueError("matrix must be square")
    entries = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        parts = line.split()
        if header_field == "complex" or (header_field is None and len(parts) == 4):
            r, c, re_v, im_v = parts[0], parts[1], parts[2], parts[3]
            v = complex(float(re_v), float(im_v))
        else:
            r, c, re_v = parts[0], parts[1], parts[2]
            v = complex(float(re_v), 0.0)
        entries.append((int(r) - 1, int(c) - 1, v))
    if len(entries) != nnz:
        raise ValueError(f"declared {nnz} entries, found {len(entries)}")
    return SparseMatrix(rows, tuple(entries))


# ---------------------------------------------------------------------------
# Bit-mask structure used by the statevector kernels
# ---------------------------------------------------------------------------


def term_masks(term: PauliTerm) -> tuple[int, int, complex]:
    """(flip mask, sign mask, prefactor) so that sigma|x> = pref*(-1)^par(x & sign) |x ^ flip>.

    Qubit q occupies bit position (n - 1 - q) of a basis index.
    """
    n = term.qubit_count
    flip = 0
    sign = 0
    y_count = 0
    for q, letter in enumerate(term.letters):
        bit = 1 << (n - 1 - q)
        if letter in "XY":
            flip |= bit
        if letter in "ZY":
            sign |= bit
        if letter == "Y":
            y_count += 1
    return flip, sign, 1j ** (y_count % 4)
