"""Kernel backend selection and the flat circuit program format.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. ``VQCBENCH_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels

RX, RY, RZ, CNOT = 0, 1, 2, 3
SRC_CONST, SRC_PARAM, SRC_DATA = 0, 1, 2

try:
    from . import _kernels as _native
except ImportError:  # pragma: no cover - depends on the build
    _native = None

_BACKENDS = {"python": _pykernels}
if _native is not None:
    _BACKENDS["native"] = _native


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _default_backend() -> str:
    requested = os.environ.get("VQCBENCH_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise RuntimeError(
                f"VQCBENCH_BACKEND={requested!r} is not available (have {available_backends()})"
            )
        return requested
    return "native" if _native is not None else "python"


_active = _default_backend()


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = name


@dataclass
class Program:
    """A circuit as parallel int/float arrays, ready for the kernels.

    Each op has a kind (RX/RY/RZ/CNOT), two qubit slots, and an angle
    source: a constant, an entry of the shared parameter vector, or a
    column of the per-sample data matrix.
    """

    n_qubits: int
    kinds: np.ndarray
    q0: np.ndarray
    q1: np.ndarray
    src: np.ndarray
    idx: np.ndarray
    consts: np.ndarray

    def __post_init__(self):
        # the compiled kernels do no bounds checking, so validate once here
        n = len(self.kinds)
        if not 1 <= self.n_qubits <= 20:
            raise ValueError(f"n_qubits must be in 1..20, got {self.n_qubits}")
        if any(len(a) != n for a in (self.q0, self.q1, self.src, self.idx, self.consts)):
            raise ValueError("program arrays differ in length")
        if n == 0:
            return
        if self.kinds.min() < RX or self.kinds.max() > CNOT:
            raise ValueError("unknown op kind")
        if self.q0.min() < 0 or self.q0.max() >= self.n_qubits:
            raise ValueError(f"qubit index out of range for {self.n_qubits} qubits")
        cx = self.kinds == CNOT
        if np.any(cx):
            tgt = self.q1[cx]
            if tgt.min() < 0 or tgt.max() >= self.n_qubits or np.any(tgt == self.q0[cx]):
                raise ValueError("CNOT target out of range or equal to its control")
        rot = ~cx
        if np.any((self.src[rot] < SRC_CONST) | (self.src[rot] > SRC_DATA)) or np.any(self.idx[rot] < 0):
            raise ValueError("invalid angle source")

    def check_inputs(self, params, data) -> None:
        rot = self.kinds != CNOT
        for source, width, name in ((SRC_PARAM, len(params), "parameter"), (SRC_DATA, data.shape[1], "data column")):
            used = self.idx[rot & (self.src == source)]
            if used.size and used.max() >= width:
                raise ValueError(f"{name} index {int(used.max())} out of range ({width} available)")

    @classmethod
    def from_ops(cls, n_qubits: int, ops) -> "Program":
        """Build from tuples ``(kind, q0, q1, src, idx, const)``."""
        ops = list(ops)
        cols = list(zip(*ops)) if ops else [()] * 6

        def ints(c):
            return np.ascontiguousarray(np.array(c, dtype=np.int32).reshape(-1))

        return cls(
            n_qubits=n_qubits,
            kinds=ints(cols[0]),
            q0=ints(cols[1]),
            q1=ints(cols[2]),
            src=ints(cols[3]),
            idx=ints(cols[4]),
            consts=np.ascontiguousarray(np.array(cols[5], dtype=np.float64).reshape(-1)),
        )

    def __len__(self) -> int:
        return len(self.kinds)

    def _args(self):
        return (self.kinds, self.q0, self.q1, self.src, self.idx, self.consts)


def _prep(params, data):
    params = np.ascontiguousarray(params, dtype=np.float64).reshape(-1)
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data.reshape(1, -1)
    if data.shape[1] == 0:
        data = np.zeros((data.shape[0], 1))
    return params, data


def simulate_states(program: Program, params, data, backend: str | None = None) -> np.ndarray:
    params, data = _prep(params, data)
    program.check_inputs(params, data)
    impl = _BACKENDS[backend or _active]
    return impl.states(program.n_qubits, *program._args(), params, data)


def expectations(program: Program, params, data, n_meas: int, backend: str | None = None) -> np.ndarray:
    """<Z_k> on the first ``n_meas`` qubits for every row of ``data``."""
    params, data = _prep(params, data)
    program.check_inputs(params, data)
    if not 0 <= n_meas <= program.n_qubits:
        raise ValueError(f"cannot measure {n_meas} of {program.n_qubits} qubits")
    impl = _BACKENDS[backend or _active]
    return np.asarray(impl.forward(program.n_qubits, n_meas, *program._args(), params, data))


def expectations_vjp(program: Program, params, data, weights, backend: str | None = None):
    """Expectations plus d(sum_b sum_k w[b,k] <Z_k>_b)/d params by adjoint sweep."""
    params, data = _prep(params, data)
    program.check_inputs(params, data)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if weights.ndim == 1:
        weights = weights.reshape(1, -1)
    if weights.shape[0] != data.shape[0] or weights.shape[1] > program.n_qubits:
        raise ValueError(f"weights shape {weights.shape} does not match batch {data.shape[0]}")
    impl = _BACKENDS[backend or _active]
    ev, grad = impl.vjp(program.n_qubits, *program._args(), params, data, weights)
    return np.asarray(ev), np.asarray(grad)
