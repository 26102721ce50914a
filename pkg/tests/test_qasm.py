import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqcbench import qasm
from vqcbench.cli import main
from vqcbench.models import ModelSpec
from vqcbench.qasm import (
    MEAN_OF_RATIOS,
    RATIO_OF_MEANS,
    CircuitLog,
    ConcreteCircuit,
    QasmError,
    TimingRecord,
    circuit_depth,
    compute_ratio,
    emit_qasm2,
    estimate_hw_training_time,
    implied_circuit_seconds,
    load_circuit_log,
    log_points,
    parse_qasm2,
)
from vqcbench.statevector import Gate
from vqcbench.training import SlConfig, load_dataset, train_sl


def bound_circuit(embedding, features, layers, outputs, seed=0):
    spec = ModelSpec("vqc", features, outputs, embedding=embedding, layers=layers)
    model = spec.build(seed)
    x = np.random.default_rng(seed).uniform(0, 1, features)
    return model, x, ConcreteCircuit.from_template(model.template, x, model.angles(), {"task": "t"})


class TestEmit:
    def test_empty_circuit(self):
        text = emit_qasm2(ConcreteCircuit(1, [], (0,)))
        assert text == 'OPENQASM 2.0;\ninclude "qelib1.inc";\nqreg q[1];\ncreg c[1];\nmeasure q[0] -> c[0];\n'

    def test_single_cnot(self):
        text = emit_qasm2(ConcreteCircuit(2, [Gate("CNOT", 1, control=0)], (0, 1)))
        assert text.count("cx q[0],q[1];") == 1
        assert text.count("cx ") == 1

    def test_vqc28_gate_count(self):
        _, _, circ = bound_circuit("ang", 4, 2, 3)
        assert len(circ.gates) == 4 * 2 + 24 + 8 == 40
        assert emit_qasm2(circ).count("measure") == 3

    def test_angles_keep_full_precision(self):
        circ = ConcreteCircuit(1, [Gate("RX", 0, angle=1 / 3)], (0,))
        assert parse_qasm2(emit_qasm2(circ)).gates[0].angle == 1 / 3

    def test_metadata_line(self):
        _, _, circ = bound_circuit("ang", 4, 1, 3)
        text = emit_qasm2(circ)
        assert '// vqcbench {"task": "t"}' in text
        assert parse_qasm2(text).metadata == {"task": "t"}


class TestRoundTrip:
    @pytest.mark.parametrize("args", [("ang", 4, 2, 3), ("ang", 4, 3, 4), ("amp", 13, 3, 3), ("amp", 30, 4, 2)])
    def test_fixed_point_and_resimulation(self, args):
        model, x, circ = bound_circuit(*args)
        text = emit_qasm2(circ)
        parsed = parse_qasm2(text)
        assert emit_qasm2(parsed) == text
        assert np.max(np.abs(parsed.probabilities() - circ.probabilities())) <= 1e-10
        # and the bound circuit reproduces the model's own expectations
        assert np.allclose(circ.expectations(), model.expectations(x.reshape(1, -1))[0], atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_random_circuits(self, n, seed):
        rng = np.random.default_rng(seed)
        gates = []
        for _ in range(int(rng.integers(0, 30))):
            if n > 1 and rng.random() < 0.3:
                c, t = rng.choice(n, 2, replace=False)
                gates.append(Gate("CNOT", int(t), control=int(c)))
            else:
                gates.append(Gate(("RX", "RY", "RZ")[rng.integers(3)], int(rng.integers(n)), angle=float(rng.normal(0, 5))))
        circ = ConcreteCircuit(n, gates, tuple(range(n)))
        text = emit_qasm2(circ)
        again = parse_qasm2(text)
        assert emit_qasm2(again) == text
        assert np.max(np.abs(again.probabilities() - circ.probabilities())) <= 1e-10

    def test_parses_pi_expressions(self):
        text = 'OPENQASM 2.0;\ninclude "qelib1.inc";\nqreg q[1];\ncreg c[1];\nrx(pi/2) q[0];\nbarrier q;\nmeasure q[0] -> c[0];\n'
        circ = parse_qasm2(text)
        assert circ.gates[0].angle == pytest.approx(math.pi / 2)
        assert circ.expectations()[0] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("bad", [
        "qreg q[1];",
        'OPENQASM 2.0;\nqreg q[1];\nh q[0];\n',
        'OPENQASM 2.0;\nqreg q[1];\nrx(__import__("os")) q[0];\n',
        'OPENQASM 2.0;\nqreg q[1];\nrx(0.1) q[3];\n',
        'OPENQASM 2.0;\nqreg q[1];\nrx(0.1) q[0]\n',
    ])
    def test_rejects(self, bad):
        with pytest.raises(QasmError):
            parse_qasm2(bad)


class TestDepth:
    @pytest.mark.parametrize("layers,depth", [(1, 9), (2, 17), (3, 25), (4, 33)])
    def test_angle_depths(self, layers, depth):
        _, _, circ = bound_circuit("ang", 4, layers, 3)
        assert circuit_depth(circ) == depth == 8 * layers + 1

    def test_single_gate(self):
        assert circuit_depth(ConcreteCircuit(1, [Gate("RX", 0, angle=0.1)], (0,))) == 2

    def test_parallel_gates_share_a_layer(self):
        gates = [Gate("RX", 0, angle=0.1), Gate("RY", 1, angle=0.1), Gate("CNOT", 1, control=0)]
        assert circuit_depth(ConcreteCircuit(2, gates, (0,))) == 3

    def test_amplitude_depths_reported(self):
        # not a reference target; just stable and larger than the angle circuits
        assert circuit_depth(bound_circuit("amp", 13, 3, 3)[2]) > 25
        assert circuit_depth(bound_circuit("amp", 30, 4, 2)[2]) > circuit_depth(bound_circuit("amp", 13, 3, 3)[2])


class TestRatios:
    def test_iris(self):
        r = compute_ratio([TimingRecord("a", 0.011, 0.314)])
        assert r == pytest.approx(28.55, abs=0.01)

    def test_wdbc(self):
        assert compute_ratio([TimingRecord("a", 0.084, 0.329)]) == pytest.approx(3.917, abs=1e-3)

    def test_equal_times(self):
        assert compute_ratio([TimingRecord("a", 0.2, 0.2), TimingRecord("b", 0.5, 0.5)], MEAN_OF_RATIOS) == 1.0

    def test_modes_differ(self):
        recs = [TimingRecord("a", 0.01, 0.3), TimingRecord("b", 0.02, 0.3)]
        assert compute_ratio(recs, RATIO_OF_MEANS) == pytest.approx(0.3 / 0.015)
        assert compute_ratio(recs, MEAN_OF_RATIOS) == pytest.approx((30 + 15) / 2)

    def test_unmatched(self):
        with pytest.raises(ValueError):
            compute_ratio([TimingRecord("a", 0.1)])

    def test_non_positive(self):
        with pytest.raises(ValueError):
            TimingRecord("a", 0.0, 1.0)


class TestEstimator:
    def test_ratio_one(self):
        assert estimate_hw_training_time(92.6, 40.0, 1.0) == pytest.approx(92.6)

    def test_no_quantum_work(self):
        assert estimate_hw_training_time(92.6, 0.0, 28.995) == 92.6

    def test_iris_round_trip(self):
        circuit = implied_circuit_seconds(92.6, 1806.1, 28.995)
        assert circuit == pytest.approx(61.2, abs=0.05)
        assert estimate_hw_training_time(92.6, circuit, 28.995) == pytest.approx(1806.1, rel=1e-12)
        # the table prints one decimal; the rounded split still lands within 1%
        assert estimate_hw_training_time(92.6, round(circuit, 1), 28.995) == pytest.approx(1806.1, rel=0.01)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.1, 1e4), st.floats(0, 1), st.floats(1, 100), st.floats(1, 100))
    def test_monotone_in_ratio(self, total, share, r1, r2):
        circ = total * share
        lo, hi = sorted((r1, r2))
        assert estimate_hw_training_time(total, circ, lo) <= estimate_hw_training_time(total, circ, hi) + 1e-9

    def test_circuit_exceeds_total(self):
        with pytest.raises(ValueError):
            estimate_hw_training_time(10.0, 11.0, 2.0)


class TestLogging:
    def test_points_for_50(self):
        assert log_points(50) == [1, 13, 25, 37, 49]

    def test_points_small(self):
        assert log_points(3) == [1, 2, 3]
        assert log_points(0) == []

    def run(self, seed=0, epochs=3):
        ds = load_dataset("iris", seed)
        log = CircuitLog(log_points(epochs), task="iris", max_per_point=10)
        spec = ModelSpec("vqc", 4, 3, embedding="ang", layers=2)
        train_sl(spec, ds, SlConfig(epochs=epochs), seed=seed, recorder=log)
        return log

    def test_captures_only_selected_points(self):
        log = CircuitLog([2], task="iris")
        train_sl(ModelSpec("vqc", 4, 3, embedding="ang", layers=1), load_dataset("iris"), SlConfig(epochs=3), recorder=log)
        assert log.entries and {e["point"] for e in log.entries} == {2}

    def test_same_seed_same_archive(self, tmp_path):
        a, b = self.run(), self.run()
        strip = lambda log: [{k: v for k, v in e.items() if k != "sim_seconds"} for e in log.entries]
        assert strip(a) == strip(b) and len(a.entries) == 30

    def test_nn_run_has_empty_archive(self, tmp_path):
        log = CircuitLog([1], task="iris")
        train_sl(ModelSpec("nn", 4, 3), load_dataset("iris"), SlConfig(epochs=1), recorder=log)
        log.save(tmp_path / "c.jsonl")
        header, entries = load_circuit_log(tmp_path / "c.jsonl")
        assert entries == [] and header["template"] is None

    def test_save_and_rebuild(self, tmp_path):
        log = self.run()
        log.save(tmp_path / "c.jsonl")
        header, entries = load_circuit_log(tmp_path / "c.jsonl")
        circuits = list(qasm.circuits_from_log(header, entries))
        assert len(circuits) == len(entries) == 30
        assert all(len(c.gates) == 40 for _, c in circuits)


def test_cli_export_and_estimate(tmp_path, capsys):
    out = tmp_path / "runs"
    code = main(["sl", "--task", "iris", "--single", "--family", "vqc", "--embedding", "ang", "--layers", "2",
                 "--seeds", "0", "--epochs", "2", "--out-dir", str(out), "--log-circuits"])
    assert code == 0
    run = out / "iris_vqc-ang-l2_0"
    assert main(["export-qasm", "--run", str(run)]) == 0
    with (run / "qasm" / "manifest.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert rows and all(r["n_gates"] == "40" and r["depth"] == "17" for r in rows)
    parsed = parse_qasm2((run / "qasm" / rows[0]["file"]).read_text())
    assert parsed.n_qubits == 4 and parsed.measured == (0, 1, 2)

    hw = tmp_path / "hw.csv"
    with hw.open("w") as f:
        f.write("circuit_id,hardware_seconds\n")
        for r in rows:
            f.write(f"{r['circuit_id']},{float(r['sim_seconds']) * 10}\n")
    capsys.readouterr()
    assert main(["estimate-hw", "--run", str(run), "--hw-times", str(hw)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["matched_circuits"] == len(rows)
    assert report["ratio"]["mean_of_ratios"] == pytest.approx(10.0)
    metrics = json.loads((out / "iris_vqc-ang-l2_0.json").read_text())
    expected = metrics["train_seconds"] + 9 * metrics["circuit_seconds"]
    assert report["estimated_hardware_seconds"]["ratio_of_means"] == pytest.approx(expected)

