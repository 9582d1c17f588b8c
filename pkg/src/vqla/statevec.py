"""Dense statevector simulation of parameterized circuits.

Amplitudes are stored as a flat complex array indexed by the big-endian bit
string of qubit indices (qubit 0 = most significant bit), consistent with the
Kronecker order of :func:`vqla.pauli.pauli_to_matrix`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .pauli import PauliSum, PauliTerm, term_masks

GATE_KINDS = ("ry", "rz", "cnot", "x", "y", "z")
ROTATION_KINDS = ("ry", "rz")

# Pauli generator inserted when differentiating a rotation gate:
# d/da exp(-i a P / 2) = (-i/2) P exp(-i a P / 2).
_GENERATOR = {"ry": "y", "rz": "z"}

NORM_TOLERANCE = 1e-10


@dataclass
class StateVector:
    """2^n complex amplitudes; single-owner mutable."""

    qubit_count: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.qubit_count,):
            raise ValueError("amplitude count does not match qubit count")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.qubit_count, self.amplitudes.copy())

    def require_normalized(self, tol: float = NORM_TOLERANCE) -> "StateVector":
        if abs(self.norm() - 1.0) > tol:
            raise ValueError(f"state norm {self.norm()} deviates from 1")
        return self


def zero_state(qubit_count: int) -> StateVector:
    return basis_state(qubit_count, 0)


def basis_state(qubit_count: int, index: int) -> StateVector:
    amps = np.zeros(1 << qubit_count, dtype=complex)
    amps[index] = 1.0
    return StateVector(qubit_count, amps)


def state_from_amplitudes(vec) -> StateVector:
    vec = np.asarray(vec, dtype=complex).ravel()
    n = int(round(math.log2(len(vec))))
    if 1 << n != len(vec):
        raise ValueError("length is not a power of two")
    return StateVector(n, vec.copy())


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b> with the bra conjugated."""
    if a.qubit_count != b.qubit_count:
        raise ValueError("qubit counts differ")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: StateVector, b: StateVector) -> float:
    return abs(inner_product(a, b)) ** 2


# ---------------------------------------------------------------------------
# Gates and circuits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gate:
    """One circuit element; rotations carry either a parameter slot or a fixed angle."""

    kind: str
    target: int
    control: int | None = None
    slot: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "cnot":
            if self.control is None or self.control == self.target:
                raise ValueError("cnot needs a control distinct from its target")
        elif self.control is not None:
            raise ValueError(f"{self.kind} gate cannot have a control")
        if self.kind in ROTATION_KINDS:
            if (self.slot is None) == (self.angle is None):
                raise ValueError("rotation needs exactly one of slot or angle")
        elif self.slot is not None or self.angle is not None:
            raise ValueError(f"{self.kind} gate takes no parameter")


@dataclass(frozen=True)
class Circuit:
    """Gate sequence with parameter slots, plus an optional parameter-free prefix."""

    qubit_count: int
    gates: tuple[Gate, ...]
    parameter_count: int
    prefix: tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "prefix", tuple(self.prefix))
        if self.qubit_count < 1:
            raise ValueError("qubit_count must be >= 1")
        for g in self.prefix:
            if g.slot is not None:
                raise ValueError("prefix must be parameter-free")
        for g in self.prefix + self.gates:
            qubits = (g.target,) if g.control is None else (g.target, g.control)
            if any(not 0 <= q < self.qubit_count for q in qubits):
                raise ValueError(f"gate {g} addresses a qubit outside the register")
            if g.slot is not None and not 0 <= g.slot < self.parameter_count:
                raise ValueError(f"slot {g.slot} outside [0, {self.parameter_count})")


def empty_circuit(qubit_count: int) -> Circuit:
    return Circuit(qubit_count, (), 0)


# A bound operation: (kind, target, control, angle, slot). ``slot`` is kept so
# gradient sweeps can attribute contributions; it is None for fixed gates.
BoundOp = tuple


def bound_ops(circuit: Circuit, theta) -> list[BoundOp]:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (circuit.parameter_count,):
        raise ValueError(
            f"expected {circuit.parameter_count} parameters, got {theta.shape[0]}"
        )
    if theta.size and not np.all(np.isfinite(theta)):
        raise ValueError("non-finite parameter value")
    ops: list[BoundOp] = []
    for g in circuit.prefix + circuit.gates:
        angle = g.angle if g.slot is None else float(theta[g.slot])
        ops.append((g.kind, g.target, g.control, angle, g.slot))
    return ops


def bind(circuit: Circuit, theta) -> Circuit:
    """Freeze the parameters into fixed gates (parameter-free result)."""
    frozen = tuple(
        Gate(kind, target, control, None, angle)
        for kind, target, control, angle, _ in bound_ops(circuit, theta)
    )
    return Circuit(circuit.qubit_count, (), 0, prefix=frozen)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


_X_MAT = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_Y_MAT = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)


def _apply_1q(amps: np.ndarray, n: int, q: int, u: np.ndarray) -> None:
    # Broadcasted matmul contracts the target-qubit axis in one call.
    t = amps.reshape(1 << q, 2, -1)
    t[...] = np.matmul(u, t)


def _apply_rz(amps: np.ndarray, n: int, q: int, angle: float) -> None:
    t = amps.reshape(1 << q, 2, -1)
    half = 0.5 * angle
    phase = math.cos(half) + 1j * math.sin(half)
    t *= np.array([[phase.conjugate()], [phase]])


def _apply_z(amps: np.ndarray, n: int, q: int) -> None:
    t = amps.reshape(1 << q, 2, -1)
    t[:, 1, :] *= -1.0


def _apply_cnot(amps: np.ndarray, n: int, control: int, target: int) -> None:
    v = amps.reshape((2,) * n)
    sel: list = [slice(None)] * n
    sel[control] = 1
    sub = v[tuple(sel)]
    axis = target if target < control else target - 1
    sub[...] = np.flip(sub, axis=axis).copy()


def apply_op(state: StateVector, op: BoundOp) -> StateVector:
    kind, target, control, angle, _ = op
    n = state.qubit_count
    if not 0 <= target < n or (control is not None and not 0 <= control < n):
        raise ValueError("qubit index out of range")
    amps = state.amplitudes
    if kind == "ry":
        c, s = math.cos(0.5 * angle), math.sin(0.5 * angle)
        _apply_1q(amps, n, target, np.array([[c, -s], [s, c]], dtype=complex))
    elif kind == "rz":
        _apply_rz(amps, n, target, angle)
    elif kind == "cnot":
        _apply_cnot(amps, n, control, target)
    elif kind == "x":
        _apply_1q(amps, n, target, _X_MAT)
    elif kind == "y":
        _apply_1q(amps, n, target, _Y_MAT)
    elif kind == "z":
        _apply_z(amps, n, target)
    else:
        raise ValueError(f"unknown op kind {kind!r}")
    return state


def apply_gate(state: StateVector, gate: Gate, angle: float | None = None) -> StateVector:
    """In-place unitary update; rotations use exp(-i * angle * P / 2)."""
    if gate.kind in ROTATION_KINDS:
        if angle is None:
            angle = gate.angle
        if angle is None:
            raise ValueError("rotation gate needs an angle")
    elif angle is not None:
        raise ValueError(f"{gate.kind} gate takes no angle")
    return apply_op(state, (gate.kind, gate.target, gate.control, angle, None))


def adjoint_op(op: BoundOp) -> BoundOp:
    kind, target, control, angle, slot = op
    if kind in ROTATION_KINDS:
        return (kind, target, control, -angle, slot)
    return op


def apply_ops(state: StateVector, ops) -> StateVector:
    for op in ops:
        apply_op(state, op)
    return state


def apply_ops_adjoint(state: StateVector, ops) -> StateVector:
    for op in reversed(ops):
        apply_op(state, adjoint_op(op))
    return state


def prepare_state(circuit: Circuit, theta) -> StateVector:
    """|phi(theta)> = U(theta)|0...0> including the circuit prefix."""
    state = zero_state(circuit.qubit_count)
    apply_ops(state, bound_ops(circuit, theta))
    return state


# ---------------------------------------------------------------------------
# Pauli-sum application
# ---------------------------------------------------------------------------


def _parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    x ^= x >> 16
    x ^= x >> 8
    x ^= x >> 4
    x ^= x >> 2
    x ^= x >> 1
    return x & 1


def _sum_kernel(p: PauliSum):
    """Permutation/weight table so a sum applies in two vectorized operations."""
    if p._kernel is not None:
        return p._kernel
    dim = 1 << p.qubit_count
    idx = np.arange(dim, dtype=np.int64)
    perms = np.empty((len(p.terms), dim), dtype=np.int64)
    weights = np.empty((len(p.terms), dim), dtype=complex)
    for j, t in enumerate(p.terms):
        flip, sign, pref = term_masks(t)
        perm = idx ^ flip
        par = _parity(perm & sign)
        perms[j] = perm
        weights[j] = (t.coefficient * pref) * (1.0 - 2.0 * par)
    p._kernel = (perms, weights)
    return p._kernel


def apply_pauli_term(state: StateVector, term: PauliTerm) -> StateVector:
    """New (generally unnormalized) state coefficient * sigma |state>."""
    if term.qubit_count != state.qubit_count:
        raise ValueError("qubit counts differ")
    flip, sign, pref = term_masks(term)
    idx = np.arange(state.amplitudes.size, dtype=np.int64)
    perm = idx ^ flip
    par = _parity(perm & sign)
    out = (term.coefficient * pref) * (1.0 - 2.0 * par) * state.amplitudes[perm]
    return StateVector(state.qubit_count, out)


def apply_pauli_sum(state: StateVector, p: PauliSum) -> StateVector:
    """New unnormalized state sum_j lambda_j sigma_j |state>."""
    if not p.terms:
        raise ValueError("cannot apply an empty sum")
    if p.qubit_count != state.qubit_count:
        raise ValueError("qubit counts differ")
    perms, weights = _sum_kernel(p)
    out = (weights * state.amplitudes[perms]).sum(axis=0)
    return StateVector(state.qubit_count, out)


def pauli_expectation_exact(state: StateVector, p: PauliSum) -> complex:
    return inner_product(state, apply_pauli_sum(state, p))


# ---------------------------------------------------------------------------
# Hardware-efficient ansatz
# ---------------------------------------------------------------------------


def build_hardware_ansatz(n: int, depth: int, prefix=None) -> Circuit:
    """Layered ansatz: per-qubit (Ry, Rz), then ``depth`` entangling blocks.

    Each block chains CNOT(q, q+1) down the register, every CNOT followed by
    (Ry, Rz) on its target; one parameter-free reversed CNOT chain closes the
    circuit (omitted at depth 0 so the zero-angle circuit stays trivial).
    Parameter count is 2n + 2(n-1)*depth.
    """
    if n < 1 or depth < 0:
        raise ValueError("need n >= 1 and depth >= 0")
    if prefix is None:
        prefix_gates: tuple[Gate, ...] = ()
    elif isinstance(prefix, Circuit):
        if prefix.parameter_count != 0:
            raise ValueError("prefix circuit must be parameter-free")
        if prefix.qubit_count != n:
            raise ValueError("prefix qubit count differs")
        prefix_gates = prefix.prefix + prefix.gates
    else:
        prefix_gates = tuple(prefix)

    gates: list[Gate] = []
    slot = 0
    for q in range(n):
        gates.append(Gate("ry", q, slot=slot))
        gates.append(Gate("rz", q, slot=slot + 1))
        slot += 2
    for _ in range(depth):
        for q in range(n - 1):
            gates.append(Gate("cnot", q + 1, control=q))
            gates.append(Gate("ry", q + 1, slot=slot))
            gates.append(Gate("rz", q + 1, slot=slot + 1))
            slot += 2
    if depth >= 1:
        for q in reversed(range(n - 1)):
            gates.append(Gate("cnot", q + 1, control=q))
    return Circuit(n, tuple(gates), slot, prefix=prefix_gates)


# ---------------------------------------------------------------------------
# Derivatives
# ---------------------------------------------------------------------------


def insertion_ops(circuit: Circuit, theta, slot: int):
    """Bound op lists realizing d|phi>/d theta_slot = sum_s f_s |phi_s>.

    For each gate carrying ``slot``, yields (f = -i/2, ops with the gate's
    Pauli generator inserted right after it).  Empty when no gate uses the slot.
    """
    if not 0 <= slot < circuit.parameter_count:
        raise ValueError(f"slot {slot} outside [0, {circuit.parameter_count})")
    ops = bound_ops(circuit, theta)
    out = []
    for k, op in enumerate(ops):
        if op[4] == slot:
            pauli_op = (_GENERATOR[op[0]], op[1], None, None, None)
            out.append((-0.5j, ops[: k + 1] + [pauli_op] + ops[k + 1 :]))
    return out


def derivative_state(circuit: Circuit, theta, slot: int):
    """Weighted states whose sum is the exact derivative of prepare_state."""
    result = []
    for f, ops in insertion_ops(circuit, theta, slot):
        state = zero_state(circuit.qubit_count)
        apply_ops(state, ops)
        result.append((f, state))
    return result


def state_derivatives(circuit: Circuit, theta) -> np.ndarray:
    """Stack of d|phi>/d theta_i as rows, built from derivative_state terms."""
    rows = np.zeros((circuit.parameter_count, 1 << circuit.qubit_count), dtype=complex)
    for i in range(circuit.parameter_count):
        for f, st in derivative_state(circuit, theta, i):
            rows[i] += f * st.amplitudes
    return rows


def overlap_gradient(circuit: Circuit, theta, chi: StateVector) -> np.ndarray:
    """All components <d phi / d theta_i | chi> in one forward/backward sweep.

    Equals the assembly sum_s conj(f_s) <phi_s|chi> of derivative_state, at
    O(gates * 2^n) total cost instead of O(L * gates * 2^n).
    """
    if chi.qubit_count != circuit.qubit_count:
        raise ValueError("qubit counts differ")
    ops = bound_ops(circuit, theta)
    grad = np.zeros(circuit.parameter_count, dtype=complex)

    forward: list[np.ndarray] = []
    state = zero_state(circuit.qubit_count)
    for op in ops:
        apply_op(state, op)
        forward.append(state.amplitudes.copy())

    back = chi.copy()
    for k in reversed(range(len(ops))):
        op = ops[k]
        if op[4] is not None:
            probe = StateVector(circuit.qubit_count, forward[k].copy())
            apply_op(probe, (_GENERATOR[op[0]], op[1], None, None, None))
            grad[op[4]] += -0.5j * np.vdot(back.amplitudes, probe.amplitudes)
        apply_op(back, adjoint_op(op))
    return np.conj(grad)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _gate_to_dict(g: Gate) -> dict:
    return {
        "kind": g.kind,
        "target": g.target,
        "control": g.control,
        "slot": g.slot,
        "angle": g.angle,
    }


def _gate_from_dict(d: dict) -> Gate:
    return Gate(
        d["kind"],
        d["target"],
        d.get("control"),
        d.get("slot"),
        d.get("angle"),
    )


def circuit_to_json(c: Circuit) -> str:
    obj = {
        "qubit_count": c.qubit_count,
        "parameter_count": c.parameter_count,
        "prefix": [_gate_to_dict(g) for g in c.prefix],
        "gates": [_gate_to_dict(g) for g in c.gates],
    }
    return json.dumps(obj, indent=2, sort_keys=True)


def circuit_from_json(source: str | dict) -> Circuit:
    obj = json.loads(source) if isinstance(source, str) else source
    return Circuit(
        obj["qubit_count"],
        tuple(_gate_from_dict(d) for d in obj["gates"]),
        obj["parameter_count"],
        prefix=tuple(_gate_from_dict(d) for d in obj.get("prefix", ())),
    )


def state_to_csv(state: StateVector) -> str:
    lines = ["index,re,im"]
    for i, a in enumerate(state.amplitudes):
        lines.append(f"{i},{a.real:.17g},{a.imag:.17g}")
    return "\n".join(lines) + "\n"
