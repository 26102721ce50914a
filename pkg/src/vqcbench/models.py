"""Dense networks and variational quantum circuits behind one interface.

Both model families expose ``forward(X, mode)`` returning a
:class:`ModelOutput`, ``backward(output, grad_logits)`` returning the
gradient of the flat parameter vector, and ``get_flat``/``set_flat``.
"""
from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .statevector import (
    EmbeddingKind,
    cnot_ring,
    mottonen_angles,
    mottonen_layout,
    qubits_for_embedding,
)

PROBABILITIES = "probabilities"
RAW = "raw"


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, z)


def remap_angles(raw):
    """phi = pi * tanh(z) and its elementwise derivative."""
    t = np.tanh(np.asarray(raw, dtype=float))
    return math.pi * t, math.pi * (1.0 - t * t)


@dataclass
class ModelOutput:
    values: np.ndarray
    logits: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)


def _as_batch(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected inputs with {n_features} features, got shape {X.shape}")
    return X


def _head(logits: np.ndarray, mode: str) -> np.ndarray:
    if mode == PROBABILITIES:
        return softmax(logits)
    if mode == RAW:
        return logits
    raise ValueError(f"unknown output mode {mode!r}")


# -- variational quantum circuit ---------------------------------------------


@dataclass(frozen=True)
class CircuitTemplate:
    """Layered circuit shape: (embedding, RZ-RY-RZ per qubit, CNOT ring) x L.

    The input is re-embedded before every variational layer.
    """

    embedding: EmbeddingKind
    n_features: int
    n_qubits: int
    n_layers: int
    n_outputs: int
    data_reuploading: bool = True

    def __post_init__(self):
        object.__setattr__(self, "embedding", EmbeddingKind.parse(self.embedding))
        if self.n_outputs > self.n_qubits:
            raise ValueError("cannot measure more outputs than qubits")
        if self.embedding is EmbeddingKind.ANGLE and self.n_qubits != self.n_features:
            raise ValueError("angle embedding uses one qubit per feature")
        if self.embedding is EmbeddingKind.AMPLITUDE and (1 << self.n_qubits) < self.n_features:
            raise ValueError("too few qubits for amplitude embedding")
        if self.n_layers < 0:
            raise ValueError("n_layers must be non-negative")

    @classmethod
    def for_task(cls, embedding, n_features: int, n_layers: int, n_outputs: int) -> "CircuitTemplate":
        """Qubit count from the embedding; amplitude circuits widen to fit the outputs."""
        kind = EmbeddingKind.parse(embedding)
        n = qubits_for_embedding(kind, n_features)
        if kind is EmbeddingKind.AMPLITUDE:
            n = max(n, n_outputs)
        return cls(kind, n_features, n, n_layers, n_outputs)

    @property
    def n_angles(self) -> int:
        return 3 * self.n_qubits * self.n_layers

    @property
    def n_params(self) -> int:
        return self.n_angles + self.n_outputs + 1

    @property
    def n_data_columns(self) -> int:
        if self.embedding is EmbeddingKind.ANGLE:
            return self.n_features
        return (1 << self.n_qubits) - 1

    def embedding_ops(self) -> list[tuple]:
        if self.embedding is EmbeddingKind.ANGLE:
            return [
                (kernels.RX, q, 0, kernels.SRC_DATA, q, 0.0) for q in range(self.n_features)
            ]
        ops = []
        for kind, target, control, col in mottonen_layout(self.n_qubits):
            if kind == "CNOT":
                ops.append((kernels.CNOT, control, target, kernels.SRC_CONST, 0, 0.0))
            else:
                ops.append((kernels.RY, target, 0, kernels.SRC_DATA, col, 0.0))
        return ops

    def ops(self) -> list[tuple]:
        """Kernel ops; variational angle (l, q, r) lives at index (l*n + q)*3 + r."""
        n = self.n_qubits
        embed = self.embedding_ops()
        ops = []
        for layer in range(self.n_layers):
            if self.data_reuploading or layer == 0:
                ops.extend(embed)
            for q in range(n):
                base = (layer * n + q) * 3
                ops.append((kernels.RZ, q, 0, kernels.SRC_PARAM, base, 0.0))
                ops.append((kernels.RY, q, 0, kernels.SRC_PARAM, base + 1, 0.0))
                ops.append((kernels.RZ, q, 0, kernels.SRC_PARAM, base + 2, 0.0))
            for c, t in cnot_ring(n):
                ops.append((kernels.CNOT, c, t, kernels.SRC_CONST, 0, 0.0))
        return ops

    def program(self) -> kernels.Program:
        return kernels.Program.from_ops(self.n_qubits, self.ops())

    def data_angles(self, X) -> np.ndarray:
        X = _as_batch(X, self.n_features)
        if self.embedding is EmbeddingKind.ANGLE:
            if np.any(X < 0.0) or np.any(X > 1.0):
                raise ValueError("angle embedding expects features scaled to [0, 1]")
            return math.pi * X
        return mottonen_angles(X, self.n_qubits)

    def describe(self) -> str:
        return f"VQC-{self.n_params} ({self.embedding.label}, {self.n_layers})"


@dataclass
class VqcParameters:
    theta: np.ndarray  # raw, shape (L, n_qubits, 3)
    biases: np.ndarray
    scale: float = 1.0

    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta.reshape(-1), self.biases, [self.scale]])


def init_vqc_params(template: CircuitTemplate, rng) -> VqcParameters:
    rng = np.random.default_rng(rng)
    theta = rng.uniform(-1.0, 1.0, size=(template.n_layers, template.n_qubits, 3))
    biases = rng.uniform(-0.001, 0.001, size=template.n_outputs)
    return VqcParameters(theta, biases, 1.0)


class VQC:
    """Variational circuit with output head ``scale * <Z_k> + bias_k``."""

    family = "vqc"

    def __init__(self, template: CircuitTemplate, params: VqcParameters):
        self.template = template
        self.params = params
        self._program = template.program()
        self.circuit_seconds = 0.0
        self.circuit_count = 0
        self.recorder = None

    @property
    def n_params(self) -> int:
        return self.template.n_params

    @property
    def model_id(self) -> str:
        return f"VQC-{self.n_params}"

    def describe(self) -> str:
        return self.template.describe()

    @property
    def program(self) -> kernels.Program:
        return self._program

    def angles(self) -> np.ndarray:
        return remap_angles(self.params.theta.reshape(-1))[0]

    def get_flat(self) -> np.ndarray:
        return self.params.flat()

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        t = self.template
        self.params = VqcParameters(
            flat[: t.n_angles].reshape(t.n_layers, t.n_qubits, 3).copy(),
            flat[t.n_angles : t.n_angles + t.n_outputs].copy(),
            float(flat[-1]),
        )

    def clone(self) -> "VQC":
        other = copy.copy(self)
        other.params = copy.deepcopy(self.params)
        return other

    def expectations(self, X) -> np.ndarray:
        data = self.template.data_angles(X)
        phi = self.angles()
        if self.recorder is not None:
            self.recorder.record(self, np.asarray(X, dtype=float).reshape(len(data), -1), phi)
        start = time.perf_counter()
        ev = kernels.expectations(self._program, phi, data, self.template.n_outputs)
        self.circuit_seconds += time.perf_counter() - start
        self.circuit_count += len(data)
        return ev

    def forward(self, X, mode: str = PROBABILITIES) -> ModelOutput:
        X = _as_batch(X, self.template.n_features)
        ev = self.expectations(X)
        logits = self.params.scale * ev + self.params.biases
        return ModelOutput(_head(logits, mode), logits, {"X": X, "ev": ev})

    def backward(self, out: ModelOutput, grad_logits) -> np.ndarray:
        g = np.asarray(grad_logits, dtype=float)
        ev = out.cache["ev"]
        t = self.template
        data = t.data_angles(out.cache["X"])
        phi, dphi = remap_angles(self.params.theta.reshape(-1))
        start = time.perf_counter()
        _, gphi = kernels.expectations_vjp(self._program, phi, data, g * self.params.scale)
        self.circuit_seconds += time.perf_counter() - start
        grad = np.empty(self.n_params)
        grad[: t.n_angles] = gphi * dphi
        grad[t.n_angles : t.n_angles + t.n_outputs] = g.sum(axis=0)
        grad[-1] = float(np.sum(g * ev))
        return grad

    def architecture(self) -> dict:
        t = self.template
        return {
            "family": "vqc",
            "embedding": t.embedding.value,
            "n_features": t.n_features,
            "n_qubits": t.n_qubits,
            "n_layers": t.n_layers,
            "n_outputs": t.n_outputs,
        }


# -- dense network -------------------------------------------------------------


class DenseNet:
    """Fully connected ReLU network; the output layer is affine."""

    family = "nn"

    def __init__(self, sizes, weights=None, biases=None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes!r}")
        shapes = list(zip(self.sizes[:-1], self.sizes[1:]))
        self.weights = [np.zeros(s) for s in shapes] if weights is None else [np.asarray(w, float) for w in weights]
        self.biases = [np.zeros(s[1]) for s in shapes] if biases is None else [np.asarray(b, float) for b in biases]

    @property
    def n_params(self) -> int:
        return dense_param_count(self.sizes)

    @property
    def model_id(self) -> str:
        return f"NN-{self.n_params}"

    def describe(self) -> str:
        hidden = self.sizes[1:-1]
        return f"{self.model_id} ({len(hidden)}x{hidden[0] if hidden else 0})"

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.reshape(-1), b]
        return np.concatenate(parts)

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        pos = 0
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            self.weights[i] = flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy()
            pos += fan_in * fan_out
            self.biases[i] = flat[pos : pos + fan_out].copy()
            pos += fan_out

    def clone(self) -> "DenseNet":
        return DenseNet(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, X, mode: str = PROBABILITIES) -> ModelOutput:
        a = _as_batch(X, self.sizes[0])
        acts = [a]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == len(self.weights) - 1 else relu(z)
            acts.append(a)
        return ModelOutput(_head(a, mode), a, {"acts": acts})

    def backward(self, out: ModelOutput, grad_logits) -> np.ndarray:
        acts = out.cache["acts"]
        delta = np.asarray(grad_logits, dtype=float)
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            grads.append((acts[i].T @ delta, delta.sum(axis=0)))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        parts = []
        for gw, gb in reversed(grads):
            parts += [gw.reshape(-1), gb]
        return np.concatenate(parts)

    def architecture(self) -> dict:
        return {"family": "nn", "sizes": list(self.sizes)}


def dense_param_count(sizes) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


def init_dense(sizes, rng) -> DenseNet:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    rng = np.random.default_rng(rng)
    net = DenseNet(sizes)
    for i, (fan_in, fan_out) in enumerate(zip(net.sizes[:-1], net.sizes[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        net.weights[i] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        net.biases[i] = rng.uniform(-bound, bound, size=fan_out)
    return net


# -- model specs ---------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Architecture hyperparameters for one grid point."""

    family: str
    n_inputs: int
    n_outputs: int
    hidden_layers: int = 1
    nodes: int = 9
    embedding: str = "ang"
    layers: int = 1

    def __post_init__(self):
        if self.family not in ("nn", "vqc"):
            raise ValueError(f"unknown model family {self.family!r}")
        if self.family == "vqc":
            object.__setattr__(self, "embedding", EmbeddingKind.parse(self.embedding).value)

    @property
    def sizes(self) -> list[int]:
        return [self.n_inputs] + [self.nodes] * self.hidden_layers + [self.n_outputs]

    def template(self) -> CircuitTemplate:
        return CircuitTemplate.for_task(self.embedding, self.n_inputs, self.layers, self.n_outputs)

    def param_count(self) -> int:
        if self.family == "nn":
            return dense_param_count(self.sizes)
        return self.template().n_params

    @property
    def model_id(self) -> str:
        return f"{self.family.upper()}-{self.param_count()}"

    @property
    def tag(self) -> str:
        if self.family == "nn":
            return f"nn-h{self.hidden_layers}-n{self.nodes}"
        return f"vqc-{self.embedding}-l{self.layers}"

    def describe(self) -> str:
        if self.family == "nn":
            return f"{self.model_id} ({self.hidden_layers}x{self.nodes})"
        return self.template().describe()

    def build(self, seed: int):
        return init_params(self, seed)


def init_params(spec: ModelSpec, seed: int):
    """Fresh model, deterministic in ``seed``."""
    rng = np.random.default_rng([int(seed), 7])
    if spec.family == "nn":
        return init_dense(spec.sizes, rng)
    template = spec.template()
    return VQC(template, init_vqc_params(template, rng))


def param_count(model) -> int:
    if isinstance(model, ModelSpec):
        return model.param_count()
    return int(model.n_params)


# -- checkpoints ---------------------------------------------------------------


def checkpoint_dict(model) -> dict:
    return {
        "format": "vqcbench-checkpoint/1",
        "architecture": model.architecture(),
        "n_params": model.n_params,
        "params": [float(v) for v in model.get_flat()],
    }


def model_from_dict(data: dict):
    arch = data["architecture"]
    if arch["family"] == "nn":
        model = DenseNet(arch["sizes"])
    else:
        template = CircuitTemplate(
            EmbeddingKind.parse(arch["embedding"]),
            arch["n_features"],
            arch["n_qubits"],
            arch["n_layers"],
            arch["n_outputs"],
        )
        model = VQC(template, init_vqc_params(template, 0))
    model.set_flat(np.array(data["params"], dtype=float))
    return model


def save_checkpoint(model, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model), indent=1) + "\n")


def load_checkpoint(path):
    return model_from_dict(json.loads(Path(path).read_text()))
