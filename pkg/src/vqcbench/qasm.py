"""Concrete circuits: logging during training, OpenQASM 2 I/O, depth and timing.

Logged circuits are stored as JSON lines (inputs plus bound variational
angles) and turned into gate lists on demand. Hardware timings come from an
external CSV with columns ``circuit_id,hardware_seconds``.
"""
from __future__ import annotations

import ast
import csv
import json
import math
import operator
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .models import CircuitTemplate
from .statevector import EmbeddingKind, Gate, gates_to_program

DEFAULT_SHOTS = 1024
META_PREFIX = "// vqcbench "


@dataclass
class ConcreteCircuit:
    n_qubits: int
    gates: list[Gate]
    measured: tuple[int, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.measured = tuple(int(q) for q in self.measured)
        for g in self.gates:
            if any(not 0 <= q < self.n_qubits for q in g.qubits):
                raise ValueError(f"gate {g} references a qubit outside 0..{self.n_qubits - 1}")
            if not math.isfinite(g.angle):
                raise ValueError(f"gate {g} has a non-finite angle")
        if any(not 0 <= q < self.n_qubits for q in self.measured):
            raise ValueError("measured qubit out of range")

    @classmethod
    def from_template(cls, template: CircuitTemplate, features, angles, metadata=None) -> "ConcreteCircuit":
        """Bind one input row and the remapped variational angles."""
        data = template.data_angles(np.asarray(features, dtype=float).reshape(1, -1))[0]
        angles = np.asarray(angles, dtype=float)
        gates = []
        for kind, q0, q1, src, idx, const in template.ops():
            if kind == kernels.CNOT:
                gates.append(Gate("CNOT", int(q1), control=int(q0)))
                continue
            value = {kernels.SRC_PARAM: angles, kernels.SRC_DATA: data}.get(src)
            angle = const if value is None else value[idx]
            gates.append(Gate(("RX", "RY", "RZ")[kind], int(q0), angle=float(angle)))
        return cls(template.n_qubits, gates, tuple(range(template.n_outputs)), dict(metadata or {}))

    def final_state(self) -> np.ndarray:
        program = gates_to_program(self.n_qubits, self.gates)
        return kernels.simulate_states(program, np.zeros(1), np.zeros((1, 1)))[0]

    def probabilities(self) -> np.ndarray:
        psi = self.final_state()
        return psi.real**2 + psi.imag**2

    def expectations(self) -> np.ndarray:
        probs = self.probabilities()
        basis = np.arange(1 << self.n_qubits)
        return np.array(
            [np.sum(probs * (1.0 - 2.0 * ((basis >> (self.n_qubits - 1 - q)) & 1))) for q in self.measured]
        )


# -- OpenQASM 2 ------------------------------------------------------------------------

_QASM_NAMES = {"RX": "rx", "RY": "ry", "RZ": "rz"}


def format_angle(angle: float) -> str:
    return format(float(angle), ".17g")


def emit_qasm2(circuit: ConcreteCircuit) -> str:
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";']
    if circuit.metadata:
        lines.append(META_PREFIX + json.dumps(circuit.metadata, sort_keys=True))
    lines.append(f"qreg q[{circuit.n_qubits}];")
    if circuit.measured:
        lines.append(f"creg c[{len(circuit.measured)}];")
    for g in circuit.gates:
        if g.kind == "CNOT":
            lines.append(f"cx q[{g.control}],q[{g.target}];")
        elif g.kind in _QASM_NAMES:
            lines.append(f"{_QASM_NAMES[g.kind]}({format_angle(g.angle)}) q[{g.target}];")
        else:  # pragma: no cover - Gate rejects other kinds
            raise ValueError(f"cannot express gate {g.kind} in OpenQASM 2")
    for i, q in enumerate(circuit.measured):
        lines.append(f"measure q[{q}] -> c[{i}];")
    return "\n".join(lines) + "\n"


class QasmError(ValueError):
    pass


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval_angle(text: str) -> float:
    """Arithmetic over numbers and ``pi`` only."""

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = walk(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        raise QasmError(f"unsupported angle expression {text!r}")

    try:
        return walk(ast.parse(text.strip(), mode="eval"))
    except SyntaxError:
        raise QasmError(f"bad angle expression {text!r}") from None


_REG = re.compile(r"^(qreg|creg)\s+([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")
_ROT = re.compile(r"^(rx|ry|rz)\s*\((.*)\)\s*([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")
_CX = re.compile(r"^(cx|CX)\s+([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]\s*,\s*([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")
_MEASURE = re.compile(r"^measure\s+([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]\s*->\s*([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")


def parse_qasm2(text: str) -> ConcreteCircuit:
    """Parse the OpenQASM 2 subset this package emits (one qreg, one creg)."""
    metadata = {}
    body = []
    for raw in text.splitlines():
        if raw.startswith(META_PREFIX):
            metadata = json.loads(raw[len(META_PREFIX):])
            continue
        body.append(raw.split("//", 1)[0])
    statements = [s.strip() for s in " ".join(body).split(";")]
    if statements[-1]:
        raise QasmError(f"missing ';' after {statements[-1]!r}")
    statements = [s for s in statements if s]
    if not statements or not re.fullmatch(r"OPENQASM\s+2(\.0)?", statements[0]):
        raise QasmError("expected 'OPENQASM 2.0;' header")
    qreg = creg = None
    n_qubits = n_clbits = 0
    gates: list[Gate] = []
    measured: dict[int, int] = {}

    def qubit(reg, index):
        if reg != qreg:
            raise QasmError(f"unknown quantum register {reg!r}")
        index = int(index)
        if index >= n_qubits:
            raise QasmError(f"qubit {reg}[{index}] out of range")
        return index

    for stmt in statements[1:]:
        if stmt.startswith("include"):
            continue
        if m := _REG.match(stmt):
            if m.group(1) == "qreg":
                if qreg is not None:
                    raise QasmError("only one qreg is supported")
                qreg, n_qubits = m.group(2), int(m.group(3))
            else:
                if creg is not None:
                    raise QasmError("only one creg is supported")
                creg, n_clbits = m.group(2), int(m.group(3))
        elif m := _ROT.match(stmt):
            gates.append(Gate(m.group(1).upper(), qubit(m.group(3), m.group(4)), angle=_eval_angle(m.group(2))))
        elif m := _CX.match(stmt):
            gates.append(Gate("CNOT", qubit(m.group(4), m.group(5)), control=qubit(m.group(2), m.group(3))))
        elif m := _MEASURE.match(stmt):
            if m.group(3) != creg or int(m.group(4)) >= n_clbits:
                raise QasmError(f"bad classical target in {stmt!r}")
            measured[int(m.group(4))] = qubit(m.group(1), m.group(2))
        elif stmt.startswith("barrier"):
            continue
        else:
            raise QasmError(f"unsupported statement {stmt!r}")
    if qreg is None:
        raise QasmError("no qreg declared")
    return ConcreteCircuit(n_qubits, gates, tuple(measured[i] for i in sorted(measured)), metadata)


def circuit_depth(circuit: ConcreteCircuit) -> int:
    """Greedy ASAP layering; measurement adds one final layer."""
    level = [0] * circuit.n_qubits
    for g in circuit.gates:
        layer = 1 + max(level[q] for q in g.qubits)
        for q in g.qubits:
            level[q] = layer
    depth = max(level, default=0)
    return depth + 1 if circuit.measured else depth


# -- logging during training ---------------------------------------------------------


def log_points(total: int, n_points: int = 5) -> list[int]:
    """``n_points`` evenly spaced 1-based epochs/episodes starting at 1."""
    if total <= 0:
        return []
    if total <= n_points:
        return list(range(1, total + 1))
    step = (total - 1) // (n_points - 1)
    return [1 + i * step for i in range(n_points)]


class CircuitLog:
    """Captures distinct circuit evaluations at selected epochs/episodes.

    The model calls :meth:`record` whenever it simulates circuits; entries
    are kept only while the current point is one of ``points``. Each kept
    circuit is re-simulated on its own to measure its simulator time, and
    the time spent here is reported by :meth:`take_overhead` so it can be
    excluded from training time.
    """

    def __init__(self, points, task: str = "", shots: int = DEFAULT_SHOTS, max_per_point: int | None = None):
        self.points = set(points)
        self.task = task
        self.shots = shots
        self.max_per_point = max_per_point
        self.template: CircuitTemplate | None = None
        self.entries: list[dict] = []
        self._point = None
        self._seen: set = set()
        self._per_point: dict[int, int] = {}
        self._overhead = 0.0

    def set_point(self, point) -> None:
        self._point = point if point in self.points else None

    @property
    def active(self) -> bool:
        return self._point is not None

    def take_overhead(self) -> float:
        spent, self._overhead = self._overhead, 0.0
        return spent

    def record(self, model, X, angles) -> None:
        if self._point is None:
            return
        start = time.perf_counter()
        if self.template is None:
            self.template = model.template
        program = model.program
        data = model.template.data_angles(X)
        angles = np.asarray(angles, dtype=float)
        akey = angles.tobytes()
        for row, drow in zip(X, data):
            key = (self._point, row.tobytes(), akey)
            count = self._per_point.get(self._point, 0)
            if key in self._seen or (self.max_per_point is not None and count >= self.max_per_point):
                continue
            self._seen.add(key)
            self._per_point[self._point] = count + 1
            t0 = time.perf_counter()
            kernels.expectations(program, angles, drow.reshape(1, -1), model.template.n_outputs)
            sim = time.perf_counter() - t0
            self.entries.append(
                {
                    "circuit_id": f"p{self._point:04d}_c{count:05d}",
                    "point": int(self._point),
                    "inputs": [float(v) for v in row],
                    "angles": [float(v) for v in angles],
                    "sim_seconds": sim,
                }
            )
        self._overhead += time.perf_counter() - start

    def header(self) -> dict:
        t = self.template
        return {
            "task": self.task,
            "shots": self.shots,
            "points": sorted(self.points),
            "template": None
            if t is None
            else {
                "embedding": t.embedding.value,
                "n_features": t.n_features,
                "n_qubits": t.n_qubits,
                "n_layers": t.n_layers,
                "n_outputs": t.n_outputs,
            },
        }

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            f.write(json.dumps(self.header()) + "\n")
            for e in self.entries:
                f.write(json.dumps(e) + "\n")


def load_circuit_log(path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty circuit archive")
    return json.loads(lines[0]), [json.loads(line) for line in lines[1:] if line.strip()]


def circuits_from_log(header: dict, entries: list[dict]):
    """Yield ``(entry, ConcreteCircuit)`` pairs."""
    spec = header.get("template")
    if spec is None:
        return
    template = CircuitTemplate(
        EmbeddingKind.parse(spec["embedding"]), spec["n_features"], spec["n_qubits"], spec["n_layers"], spec["n_outputs"]
    )
    for e in entries:
        meta = {"task": header.get("task", ""), "point": e["point"], "shots": header.get("shots", DEFAULT_SHOTS)}
        yield e, ConcreteCircuit.from_template(template, e["inputs"], e["angles"], meta)


# -- timing and extrapolation ----------------------------------------------------------


@dataclass
class TimingRecord:
    circuit_id: str
    simulator_seconds: float
    hardware_seconds: float | None = None

    def __post_init__(self):
        if self.simulator_seconds <= 0:
            raise ValueError(f"{self.circuit_id}: simulator time must be positive")
        if self.hardware_seconds is not None and self.hardware_seconds <= 0:
            raise ValueError(f"{self.circuit_id}: hardware time must be positive")

    @property
    def ratio(self) -> float | None:
        if self.hardware_seconds is None:
            return None
        return self.hardware_seconds / self.simulator_seconds


RATIO_OF_MEANS = "ratio_of_means"
MEAN_OF_RATIOS = "mean_of_ratios"


def compute_ratio(records, mode: str = RATIO_OF_MEANS) -> float:
    """Hardware/simulator time ratio over circuits timed on both."""
    matched = [r for r in records if r.hardware_seconds is not None]
    if not matched:
        raise ValueError("no circuits with both simulator and hardware timings")
    if mode == RATIO_OF_MEANS:
        return float(np.mean([r.hardware_seconds for r in matched]) / np.mean([r.simulator_seconds for r in matched]))
    if mode == MEAN_OF_RATIOS:
        return float(np.mean([r.ratio for r in matched]))
    raise ValueError(f"unknown ratio mode {mode!r}")


def estimate_hw_training_time(total_train_s: float, circuit_sim_s: float, ratio: float) -> float:
    """Classical share unchanged, circuit share scaled by the hardware ratio."""
    if circuit_sim_s < 0 or total_train_s < 0:
        raise ValueError("times must be non-negative")
    if circuit_sim_s > total_train_s * (1 + 1e-9):
        raise ValueError(f"circuit time {circuit_sim_s} exceeds total training time {total_train_s}")
    return (total_train_s - circuit_sim_s) + ratio * circuit_sim_s


def implied_circuit_seconds(total_train_s: float, hw_estimate_s: float, ratio: float) -> float:
    """Invert the estimator: circuit time that maps ``total`` to ``hw_estimate``."""
    return (hw_estimate_s - total_train_s) / (ratio - 1.0)


def read_hardware_times(path) -> dict[str, float]:
    with Path(path).open(newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"circuit_id", "hardware_seconds"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns circuit_id, hardware_seconds")
        return {row["circuit_id"]: float(row["hardware_seconds"]) for row in reader}


MANIFEST_FIELDS = ["circuit_id", "task", "point", "n_qubits", "n_gates", "depth", "sim_seconds", "file"]


def export_run_qasm(run_dir, out_dir=None) -> Path:
    """Write one .qasm file per logged circuit plus ``manifest.csv``; return the manifest path."""
    run_dir = Path(run_dir)
    header, entries = load_circuit_log(run_dir / "circuits.jsonl")
    out_dir = Path(out_dir) if out_dir else run_dir / "qasm"
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with manifest.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        for entry, circuit in circuits_from_log(header, entries):
            name = f"{entry['circuit_id']}.qasm"
            (out_dir / name).write_text(emit_qasm2(circuit))
            writer.writerow(
                {
                    "circuit_id": entry["circuit_id"],
                    "task": header.get("task", ""),
                    "point": entry["point"],
                    "n_qubits": circuit.n_qubits,
                    "n_gates": len(circuit.gates),
                    "depth": circuit_depth(circuit),
                    "sim_seconds": repr(entry["sim_seconds"]),
                    "file": name,
                }
            )
    return manifest


def estimate_run_hardware_time(run_dir, hw_times_csv) -> dict:
    """Ratio (both modes) from matched circuits, applied to the run's circuit time."""
    run_dir = Path(run_dir)
    manifest = run_dir / "qasm" / "manifest.csv"
    if not manifest.exists():
        manifest = export_run_qasm(run_dir)
    with manifest.open(newline="") as f:
        sim = {row["circuit_id"]: float(row["sim_seconds"]) for row in csv.DictReader(f)}
    hw = read_hardware_times(hw_times_csv)
    records = [TimingRecord(cid, s, hw[cid]) for cid, s in sim.items() if cid in hw]
    metrics = json.loads(run_dir.with_suffix(".json").read_text())
    total, circ = metrics["train_seconds"], metrics["circuit_seconds"]
    ratios = {mode: compute_ratio(records, mode) for mode in (MEAN_OF_RATIOS, RATIO_OF_MEANS)}
    return {
        "run": run_dir.name,
        "matched_circuits": len(records),
        "mean_simulator_seconds": float(np.mean([r.simulator_seconds for r in records])),
        "mean_hardware_seconds": float(np.mean([r.hardware_seconds for r in records])),
        "ratio": ratios,
        "train_seconds": total,
        "circuit_seconds": circ,
        "estimated_hardware_seconds": {m: estimate_hw_training_time(total, circ, r) for m, r in ratios.items()},
    }
