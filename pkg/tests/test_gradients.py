import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqcbench import kernels
from vqcbench.gradients import (
    adjoint_gradient,
    adjoint_jacobian,
    finite_difference_gradient,
    finite_difference_jacobian,
    numerical_gradient,
    parameter_shift_gradient,
    shift_jacobian,
)
from vqcbench.models import PROBABILITIES, CircuitTemplate, ModelSpec, VqcParameters, remap_angles
from vqcbench.training import batch_cross_entropy

N_INSTANCES = 220


def random_program(rng):
    """Random circuit mixing constants, shared parameters and data columns."""
    n = int(rng.integers(1, 5))
    n_params = int(rng.integers(1, 7))
    n_data = int(rng.integers(1, 4))
    ops = []
    for _ in range(int(rng.integers(3, 25))):
        if n > 1 and rng.random() < 0.25:
            c, t = rng.choice(n, size=2, replace=False)
            ops.append((kernels.CNOT, int(c), int(t), kernels.SRC_CONST, 0, 0.0))
            continue
        kind = int(rng.integers(3))
        q = int(rng.integers(n))
        r = rng.random()
        if r < 0.6:
            ops.append((kind, q, 0, kernels.SRC_PARAM, int(rng.integers(n_params)), 0.0))
        elif r < 0.8:
            ops.append((kind, q, 0, kernels.SRC_DATA, int(rng.integers(n_data)), 0.0))
        else:
            ops.append((kind, q, 0, kernels.SRC_CONST, 0, float(rng.uniform(-3, 3))))
    program = kernels.Program.from_ops(n, ops)
    params = rng.uniform(-math.pi, math.pi, n_params)
    data = rng.uniform(0, math.pi, n_data)
    return program, params, data, int(rng.integers(1, n + 1))


def test_three_way_agreement_over_random_instances():
    worst_shift, worst_fd = 0.0, 0.0
    for seed in range(N_INSTANCES):
        program, params, data, n_meas = random_program(np.random.default_rng([seed, 99]))
        adj = adjoint_jacobian(program, params, data, n_meas)
        shf = shift_jacobian(program, params, data, n_meas)
        fd = finite_difference_jacobian(program, params, data, n_meas)
        worst_shift = max(worst_shift, np.max(np.abs(adj - shf)))
        worst_fd = max(worst_fd, np.max(np.abs(adj - fd)), np.max(np.abs(shf - fd)))
    assert worst_shift <= 1e-8
    assert worst_fd <= 1e-4


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_adjoint_matches_shift_property(seed):
    program, params, data, n_meas = random_program(np.random.default_rng(seed))
    adj = adjoint_jacobian(program, params, data, n_meas)
    assert np.allclose(adj, shift_jacobian(program, params, data, n_meas), atol=1e-8, rtol=0)


@pytest.mark.parametrize("shift", [math.pi / 2, 0.3, 1.1])
def test_general_shift_is_exact(shift):
    program, params, data, n_meas = random_program(np.random.default_rng(5))
    adj = adjoint_jacobian(program, params, data, n_meas)
    assert np.allclose(shift_jacobian(program, params, data, n_meas, shift), adj, atol=1e-10)


def single_rx(phi):
    program = kernels.Program.from_ops(1, [(kernels.RX, 0, 0, kernels.SRC_PARAM, 0, 0.0)])
    return program, np.array([phi]), np.zeros(1)


@pytest.mark.parametrize("phi,expected", [(0.0, 0.0), (math.pi / 2, -1.0)])
@pytest.mark.parametrize("method", [adjoint_jacobian, shift_jacobian])
def test_single_rx(method, phi, expected):
    program, params, data = single_rx(phi)
    assert method(program, params, data, 1)[0, 0] == pytest.approx(expected, abs=1e-12)


def test_rz_gradient_zero_at_origin():
    template = CircuitTemplate("ang", 2, 2, 1, 1)
    params = VqcParameters(np.zeros((1, 2, 3)), np.zeros(1), 1.0)
    for method in (adjoint_gradient, parameter_shift_gradient):
        rec = method(template, params, [0.0, 0.0])
        assert np.allclose(rec.dphi[0, 0, :, 0], 0.0, atol=1e-12)
        assert np.allclose(rec.dphi[0, 0, :, 2], 0.0, atol=1e-12)


def test_untouched_parameter_has_zero_gradient():
    # parameter 1 acts on qubit 1 only; qubit 0 is measured and never entangled
    ops = [
        (kernels.RY, 0, 0, kernels.SRC_PARAM, 0, 0.0),
        (kernels.RX, 1, 0, kernels.SRC_PARAM, 1, 0.0),
        (kernels.RZ, 1, 0, kernels.SRC_PARAM, 2, 0.0),
    ]
    program = kernels.Program.from_ops(2, ops)
    params = np.array([0.4, 1.3, -0.7])
    for method in (adjoint_jacobian, shift_jacobian):
        jac = method(program, params, np.zeros(1), 1)
        assert abs(jac[0, 1]) < 1e-14 and abs(jac[0, 2]) < 1e-14
        assert jac[0, 0] == pytest.approx(-math.sin(0.4), abs=1e-12)


@pytest.mark.parametrize("embedding,features,layers,outputs", [
    ("ang", 4, 2, 3),
    ("amp", 13, 3, 3),
    ("amp", 30, 1, 2),
])
def test_template_gradients_agree(embedding, features, layers, outputs):
    rng = np.random.default_rng(features)
    template = CircuitTemplate.for_task(embedding, features, layers, outputs)
    params = VqcParameters(rng.uniform(-1, 1, (layers, template.n_qubits, 3)), np.zeros(outputs), 1.0)
    x = rng.uniform(0, 1, features)
    adj = adjoint_gradient(template, params, x)
    shf = parameter_shift_gradient(template, params, x)
    fd = finite_difference_gradient(template, params, x)
    assert np.allclose(adj.dphi, shf.dphi, atol=1e-8, rtol=0)
    assert np.allclose(adj.dphi, fd.dphi, atol=1e-4, rtol=0)
    assert adj.wrt_raw().shape == (outputs, layers, template.n_qubits, 3)


class TestRemap:
    def test_zero(self):
        phi, d = remap_angles(0.0)
        assert phi == 0.0 and d == pytest.approx(math.pi)

    def test_saturation(self):
        assert remap_angles(50.0)[0] == pytest.approx(math.pi)

    def test_one(self):
        assert remap_angles(1.0)[0] == pytest.approx(math.pi * math.tanh(1.0), abs=1e-15)
        assert remap_angles(1.0)[0] == pytest.approx(2.3926, abs=1e-4)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-5, 5))
    def test_derivative(self, z):
        h = 1e-6
        numeric = (remap_angles(z + h)[0] - remap_angles(z - h)[0]) / (2 * h)
        assert remap_angles(z)[1] == pytest.approx(numeric, abs=1e-6)


def pipeline_check(model, X, y):
    def loss(flat):
        saved = model.get_flat()
        model.set_flat(flat)
        value = batch_cross_entropy(model.forward(X, PROBABILITIES).values, y)[0]
        model.set_flat(saved)
        return value

    out = model.forward(X, PROBABILITIES)
    _, g = batch_cross_entropy(out.values, y)
    analytic = model.backward(out, g)
    numeric = numerical_gradient(loss, model.get_flat(), 1e-5)
    return np.max(np.abs(analytic - numeric))


@pytest.mark.parametrize("spec", [
    ModelSpec("vqc", 4, 3, embedding="ang", layers=2),
    ModelSpec("vqc", 13, 3, embedding="amp", layers=3),
    ModelSpec("vqc", 30, 2, embedding="amp", layers=2),
    ModelSpec("vqc", 4, 4, embedding="ang", layers=3),
    ModelSpec("nn", 4, 3, hidden_layers=2, nodes=6),
    ModelSpec("nn", 13, 3, hidden_layers=1, nodes=6),
], ids=lambda s: s.tag)
def test_full_pipeline_matches_finite_differences(spec):
    rng = np.random.default_rng(17)
    model = spec.build(3)
    # perturb the head so scale and biases are exercised away from init
    flat = model.get_flat()
    model.set_flat(flat + rng.normal(0, 0.05, flat.shape))
    X = rng.uniform(0, 1, (6, spec.n_inputs))
    y = rng.integers(0, spec.n_outputs, 6)
    assert pipeline_check(model, X, y) <= 1e-4
