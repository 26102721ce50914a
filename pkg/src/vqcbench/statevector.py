"""Exact statevector simulation for small registers.

Conventions: R_A(phi) = exp(-i phi A / 2) and qubit 0 is the most
significant bit of the basis index.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

MAX_QUBITS = 20


class CapacityError(ValueError):
    pass


class EmbeddingKind(str, enum.Enum):
    ANGLE = "ang"
    AMPLITUDE = "amp"

    @classmethod
    def parse(cls, value) -> "EmbeddingKind":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        if v in ("ang", "angle"):
            return cls.ANGLE
        if v in ("amp", "amplitude"):
            return cls.AMPLITUDE
        raise ValueError(f"unknown embedding {value!r}")

    @property
    def label(self) -> str:
        return "Ang" if self is EmbeddingKind.ANGLE else "Amp"


def qubits_for_embedding(kind: EmbeddingKind, n_features: int) -> int:
    if kind is EmbeddingKind.ANGLE:
        return n_features
    return max(1, math.ceil(math.log2(n_features)))


GATE_KINDS = ("RX", "RY", "RZ", "CNOT")


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int | None = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unsupported gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None or self.control == self.target:
                raise ValueError("CNOT needs a control distinct from its target")
        elif self.control is not None:
            raise ValueError(f"{self.kind} takes no control qubit")

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.kind == "CNOT":
            return (self.control, self.target)
        return (self.target,)

    def inverse(self) -> "Gate":
        if self.kind == "CNOT":
            return self
        return Gate(self.kind, self.target, angle=-self.angle)

    def matrix(self) -> np.ndarray:
        """2x2 matrix for rotations, 4x4 (control, target order) for CNOT."""
        if self.kind == "CNOT":
            return np.array(
                [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
            )
        return rotation_matrix(self.kind, self.angle)


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
    raise ValueError(f"not a rotation: {kind!r}")


_KIND_CODE = {"RX": kernels.RX, "RY": kernels.RY, "RZ": kernels.RZ, "CNOT": kernels.CNOT}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


def gate_to_op(gate: Gate) -> tuple:
    if gate.kind == "CNOT":
        return (kernels.CNOT, gate.control, gate.target, kernels.SRC_CONST, 0, 0.0)
    return (_KIND_CODE[gate.kind], gate.target, 0, kernels.SRC_CONST, 0, float(gate.angle))


def gates_to_program(n_qubits: int, gates) -> kernels.Program:
    return kernels.Program.from_ops(n_qubits, [gate_to_op(g) for g in gates])


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def init_zero(n_qubits: int) -> StateVector:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}")
    amps = np.zeros(1 << int(n_qubits), dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(int(n_qubits), amps)


def _check_qubit(state: StateVector, q) -> None:
    if q is None or not 0 <= q < state.n_qubits:
        raise IndexError(f"qubit {q} out of range for {state.n_qubits}-qubit state")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Return a new state with ``gate`` applied."""
    for q in gate.qubits:
        _check_qubit(state, q)
    psi = state.amplitudes.copy().reshape(1, -1)
    n = state.n_qubits
    if gate.kind == "CNOT":
        _pykernels_cnot(psi, n, gate.control, gate.target)
    else:
        _pykernels_rot(psi, n, gate.target, _KIND_CODE[gate.kind], gate.angle)
    return StateVector(n, psi.reshape(-1))


def apply_gates(state: StateVector, gates) -> StateVector:
    for g in gates:
        state = apply_gate(state, g)
    return state


def _pykernels_rot(psi, n, q, kind, angle):
    from ._pykernels import _rot

    _rot(psi, n, q, kind, angle)


def _pykernels_cnot(psi, n, c, t):
    from ._pykernels import _cnot

    _cnot(psi, n, c, t)


def _unit_interval(features) -> np.ndarray:
    x = np.asarray(features, dtype=float).reshape(-1)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("angle embedding expects features scaled to [0, 1]")
    return x


def angle_embed(state: StateVector, features) -> StateVector:
    """RX(pi * x_i) on qubit i."""
    x = _unit_interval(features)
    if len(x) > state.n_qubits:
        raise ValueError(f"{len(x)} features do not fit on {state.n_qubits} qubits")
    return apply_gates(state, angle_embedding_gates(x))


def angle_embedding_gates(features) -> list[Gate]:
    return [Gate("RX", i, angle=math.pi * float(v)) for i, v in enumerate(features)]


# -- Möttönen state preparation (real, non-negative amplitudes) --------------


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def _multiplexer_matrix(k: int) -> np.ndarray:
    """M[j, i] = (-1)^popcount(j & gray(i)); the CNOT cascade realises alpha = M @ theta."""
    size = 1 << k
    j = np.arange(size)[:, None]
    g = np.array([_gray(i) for i in range(size)])[None, :]
    parity = np.vectorize(lambda v: bin(int(v)).count("1") & 1)(j & g)
    return 1.0 - 2.0 * parity


_MUX_CACHE: dict[int, np.ndarray] = {}


def _mux_inverse(k: int) -> np.ndarray:
    if k not in _MUX_CACHE:
        _MUX_CACHE[k] = _multiplexer_matrix(k).T / float(1 << k)
    return _MUX_CACHE[k]


def padded_unit_vectors(features, n_qubits: int) -> np.ndarray:
    """Zero-pad rows to 2**n_qubits and L2-normalise them; all-zero rows stay zero."""
    x = np.asarray(features, dtype=float)
    x = x.reshape(1, -1) if x.ndim == 1 else x
    dim = 1 << n_qubits
    if x.shape[1] > dim:
        raise ValueError(f"{x.shape[1]} features do not fit in {n_qubits} qubits")
    out = np.zeros((x.shape[0], dim))
    out[:, : x.shape[1]] = x
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    return np.divide(out, norms, out=np.zeros_like(out), where=norms > 0)


def mottonen_angles(features, n_qubits: int) -> np.ndarray:
    """RY angles of the decomposed cascade, one row per input, 2**n - 1 columns.

    Column layout: for target qubit t (controls 0..t-1), 2**t angles starting
    at offset 2**t - 1, in the order the gates appear. The input rows are
    padded and normalised first. Negative entries are prepared by magnitude.
    """
    amps = np.abs(padded_unit_vectors(features, n_qubits))
    probs = amps**2
    batch = probs.shape[0]
    out = np.empty((batch, (1 << n_qubits) - 1))
    for t in range(n_qubits):
        blocks = probs.reshape(batch, 1 << t, 2, 1 << (n_qubits - t - 1)).sum(axis=3)
        alpha = 2.0 * np.arctan2(np.sqrt(blocks[:, :, 1]), np.sqrt(blocks[:, :, 0]))
        out[:, (1 << t) - 1 : (1 << (t + 1)) - 1] = alpha @ _mux_inverse(t).T
    return out


def mottonen_layout(n_qubits: int) -> list[tuple[str, int, int | None, int]]:
    """Gate skeleton ``(kind, target, control, angle_column)``; CNOTs use column -1."""
    layout = []
    for t in range(n_qubits):
        size = 1 << t
        controls = list(range(t))
        for i in range(size):
            layout.append(("RY", t, None, size - 1 + i))
            if t == 0:
                continue
            flipped = _gray(i) ^ _gray((i + 1) % size)
            bit = flipped.bit_length() - 1
            layout.append(("CNOT", t, controls[t - 1 - bit], -1))
    return layout


def mottonen_gates(features, n_qubits: int) -> list[Gate]:
    angles = mottonen_angles(features, n_qubits)[0]
    gates = []
    for kind, target, control, col in mottonen_layout(n_qubits):
        if kind == "CNOT":
            gates.append(Gate("CNOT", target, control=control))
        else:
            gates.append(Gate("RY", target, angle=float(angles[col])))
    return gates


def amplitude_embed(features, n_qubits: int) -> StateVector:
    """Prepare the padded, normalised feature vector from |0...0>."""
    x = np.asarray(features, dtype=float).reshape(-1)
    if np.any(x < 0):
        raise ValueError("amplitude embedding expects non-negative features")
    if not np.any(x):
        raise ValueError("cannot normalise an all-zero feature vector")
    state = init_zero(n_qubits)
    return apply_gates(state, mottonen_gates(x, n_qubits))


def pauli_z_expectation(state: StateVector, qubit: int) -> float:
    _check_qubit(state, qubit)
    n = state.n_qubits
    bits = (np.arange(1 << n) >> (n - 1 - qubit)) & 1
    return float(np.sum(state.probabilities() * (1.0 - 2.0 * bits)))


def cnot_ring(n_qubits: int) -> list[tuple[int, int]]:
    """(control, target) pairs of the entangling block."""
    if n_qubits < 2:
        return []
    if n_qubits == 2:
        return [(0, 1)]
    return [(i, i + 1) for i in range(n_qubits - 1)] + [(n_qubits - 1, 0)]


def kind_name(code: int) -> str:
    return _CODE_KIND[int(code)]
