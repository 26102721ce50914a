import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vqcbench.models import (
    PROBABILITIES,
    RAW,
    VQC,
    CircuitTemplate,
    DenseNet,
    ModelSpec,
    VqcParameters,
    dense_param_count,
    load_checkpoint,
    param_count,
    relu,
    save_checkpoint,
    softmax,
)

# (spec, expected count, expected qubits for VQCs)
REFERENCE_COUNTS = [
    (ModelSpec("nn", 4, 3, hidden_layers=1, nodes=9), 75, None),
    (ModelSpec("nn", 13, 3, hidden_layers=1, nodes=6), 105, None),
    (ModelSpec("nn", 30, 2, hidden_layers=1, nodes=3), 101, None),
    (ModelSpec("nn", 4, 4, hidden_layers=1, nodes=12), 112, None),
    (ModelSpec("vqc", 4, 3, embedding="ang", layers=2), 28, 4),
    (ModelSpec("vqc", 13, 3, embedding="amp", layers=3), 40, 4),
    (ModelSpec("vqc", 30, 2, embedding="amp", layers=4), 63, 5),
    (ModelSpec("vqc", 4, 4, embedding="ang", layers=3), 41, 4),
]


@pytest.mark.parametrize("spec,count,qubits", REFERENCE_COUNTS, ids=lambda v: getattr(v, "tag", str(v)))
def test_reference_parameter_counts(spec, count, qubits):
    assert spec.param_count() == count
    model = spec.build(0)
    assert param_count(model) == count == len(model.get_flat())
    assert model.model_id == f"{spec.family.upper()}-{count}"
    if qubits is not None:
        assert spec.template().n_qubits == qubits


def test_descriptions():
    assert ModelSpec("vqc", 4, 3, embedding="ang", layers=2).describe() == "VQC-28 (Ang, 2)"
    assert ModelSpec("nn", 4, 3, nodes=9).describe() == "NN-75 (1x9)"


class TestActivations:
    def test_relu(self):
        assert np.array_equal(relu(np.array([-2.0, 0.0, 3.5])), [0.0, 0.0, 3.5])

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=st.floats(-500, 500)))
    def test_softmax_normalised(self, z):
        p = softmax(z)
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-9)

    def test_softmax_shift_invariant(self):
        z = np.array([[1.0, 2.0, 3.0]])
        assert np.allclose(softmax(z), softmax(z + 1000.0))


class TestDense:
    def test_zero_network_uniform(self):
        net = DenseNet([4, 9, 3])
        assert np.allclose(net.forward(np.ones(4)).values, 1 / 3)

    def test_relu_clamp(self):
        net = DenseNet([1, 1, 1], weights=[np.array([[1.0]]), np.array([[1.0]])], biases=[np.array([-2.0]), np.array([0.0])])
        out = net.forward(np.array([1.0]), RAW)
        assert out.cache["acts"][1][0, 0] == 0.0
        assert out.values[0, 0] == 0.0

    def test_count_formula(self):
        assert dense_param_count([4, 9, 3]) == 75
        assert dense_param_count([4, 6, 6, 3]) == 4 * 6 + 6 + 6 * 6 + 6 + 6 * 3 + 3

    def test_init_range(self):
        net = ModelSpec("nn", 13, 3, nodes=6).build(4)
        for w, b, fan_in in zip(net.weights, net.biases, net.sizes[:-1]):
            bound = 1 / math.sqrt(fan_in)
            assert np.all(np.abs(w) <= bound) and np.all(np.abs(b) <= bound)

    def test_flat_roundtrip(self):
        net = ModelSpec("nn", 4, 3, hidden_layers=2, nodes=6).build(1)
        flat = net.get_flat()
        other = DenseNet(net.sizes)
        other.set_flat(flat)
        assert np.array_equal(other.get_flat(), flat)

    def test_bad_input_width(self):
        with pytest.raises(ValueError):
            DenseNet([4, 3, 2]).forward(np.ones(5))


class TestVqc:
    def test_init_ranges(self):
        for seed in range(5):
            model = ModelSpec("vqc", 13, 3, embedding="amp", layers=3).build(seed)
            assert np.all(np.abs(model.params.theta) <= 1.0)
            assert np.all(np.abs(model.params.biases) <= 0.001)
            assert model.params.scale == 1.0

    def test_deterministic_init(self):
        spec = ModelSpec("vqc", 4, 3, embedding="ang", layers=2)
        assert np.array_equal(spec.build(0).get_flat(), spec.build(0).get_flat())
        assert not np.array_equal(spec.build(0).get_flat(), spec.build(1).get_flat())

    def test_identity_circuit(self):
        template = CircuitTemplate("ang", 4, 4, 2, 3)
        model = VQC(template, VqcParameters(np.zeros((2, 4, 3)), np.zeros(3), 1.0))
        out = model.forward(np.zeros(4))
        assert np.allclose(out.cache["ev"], 1.0, atol=1e-12)
        assert np.allclose(out.values, 1 / 3, atol=1e-12)

    def test_single_qubit_half_turn(self):
        template = CircuitTemplate("ang", 1, 1, 1, 1)
        theta = np.array([[[0.0, math.atanh(0.5), 0.0]]])  # remapped RY angle pi/2
        model = VQC(template, VqcParameters(theta, np.array([0.37]), 1.0))
        out = model.forward(np.zeros(1), RAW)
        assert out.cache["ev"][0, 0] == pytest.approx(0.0, abs=1e-12)
        assert out.values[0, 0] == pytest.approx(0.37, abs=1e-12)

    def test_two_qubit_ring_is_single_cnot(self):
        ops = CircuitTemplate("ang", 2, 2, 1, 1).ops()
        assert sum(op[0] == 3 for op in ops) == 1

    def test_angle_requires_qubit_per_feature(self):
        with pytest.raises(ValueError):
            CircuitTemplate("ang", 4, 3, 1, 3)

    def test_outputs_fit_qubits(self):
        with pytest.raises(ValueError):
            CircuitTemplate("amp", 4, 2, 1, 3)

    def test_amplitude_width(self):
        assert CircuitTemplate.for_task("amp", 30, 4, 2).n_qubits == 5
        assert CircuitTemplate.for_task("amp", 13, 3, 3).n_qubits == 4

    def test_angle_domain(self):
        model = ModelSpec("vqc", 4, 3, embedding="ang", layers=1).build(0)
        with pytest.raises(ValueError):
            model.forward(np.array([0.1, 0.2, 1.5, 0.0]))

    def test_probabilities_sum_to_one(self):
        model = ModelSpec("vqc", 13, 3, embedding="amp", layers=2).build(0)
        X = np.random.default_rng(0).uniform(0, 1, (7, 13))
        assert np.allclose(model.forward(X, PROBABILITIES).values.sum(axis=1), 1.0)

    def test_clone_is_independent(self):
        model = ModelSpec("vqc", 4, 4, embedding="ang", layers=3).build(0)
        other = model.clone()
        other.set_flat(other.get_flat() + 1.0)
        assert not np.array_equal(model.get_flat(), other.get_flat())


@pytest.mark.parametrize("spec", [s for s, _, _ in REFERENCE_COUNTS], ids=lambda s: s.tag)
def test_checkpoint_roundtrip(spec, tmp_path):
    model = spec.build(2)
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.get_flat(), model.get_flat())
    X = np.random.default_rng(1).uniform(0, 1, (3, spec.n_inputs))
    assert np.allclose(loaded.forward(X).values, model.forward(X).values, atol=0)


def test_unknown_family():
    with pytest.raises(ValueError):
        ModelSpec("svm", 4, 3)
