"""Circuit gradients: adjoint sweep (production) plus two independent oracles.

All three work on a kernel :class:`~vqcbench.kernels.Program` whose
trainable angles are read from a parameter vector. The template-level
wrappers return derivatives of every measured ``<Z_k>`` with respect to the
remapped variational angles, shaped ``(K, L, n_qubits, 3)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .models import CircuitTemplate, VqcParameters, remap_angles


def adjoint_jacobian(program: kernels.Program, params, data_row, n_meas: int) -> np.ndarray:
    """d<Z_k>/d params, shape (n_meas, len(params)); one reverse sweep per k."""
    params = np.asarray(params, dtype=float)
    data = np.atleast_2d(np.asarray(data_row, dtype=float))
    jac = np.empty((n_meas, len(params)))
    for k in range(n_meas):
        w = np.zeros((1, n_meas))
        w[0, k] = 1.0
        _, jac[k] = kernels.expectations_vjp(program, params, data, w)
    return jac


def _split_occurrences(program: kernels.Program):
    """Give every parameterised op its own parameter slot.

    Returns the rewritten program and the original index of each slot, so a
    shift applied to one slot perturbs exactly one gate.
    """
    src = program.src.copy()
    idx = program.idx.copy()
    owners = []
    for g in range(len(program)):
        if program.kinds[g] != kernels.CNOT and src[g] == kernels.SRC_PARAM:
            owners.append(int(idx[g]))
            idx[g] = len(owners) - 1
    split = kernels.Program(
        program.n_qubits, program.kinds, program.q0, program.q1, src, idx, program.consts
    )
    return split, np.array(owners, dtype=int)


def shift_jacobian(program: kernels.Program, params, data_row, n_meas: int, shift: float = math.pi / 2) -> np.ndarray:
    """Parameter-shift rule: (E(phi + s) - E(phi - s)) / (2 sin s), summed over gate occurrences."""
    params = np.asarray(params, dtype=float)
    data = np.atleast_2d(np.asarray(data_row, dtype=float))
    split, owners = _split_occurrences(program)
    base = params[owners] if len(owners) else np.zeros(0)
    jac = np.zeros((n_meas, len(params)))
    for slot, owner in enumerate(owners):
        plus = base.copy()
        minus = base.copy()
        plus[slot] += shift
        minus[slot] -= shift
        e_plus = kernels.expectations(split, plus, data, n_meas)[0]
        e_minus = kernels.expectations(split, minus, data, n_meas)[0]
        jac[:, owner] += (e_plus - e_minus) / (2.0 * math.sin(shift))
    return jac


def finite_difference_jacobian(program: kernels.Program, params, data_row, n_meas: int, h: float = 1e-5) -> np.ndarray:
    """Central differences on the shared parameter vector."""
    params = np.asarray(params, dtype=float)
    data = np.atleast_2d(np.asarray(data_row, dtype=float))
    jac = np.empty((n_meas, len(params)))
    for i in range(len(params)):
        step = np.zeros_like(params)
        step[i] = h
        e_plus = kernels.expectations(program, params + step, data, n_meas)[0]
        e_minus = kernels.expectations(program, params - step, data, n_meas)[0]
        jac[:, i] = (e_plus - e_minus) / (2.0 * h)
    return jac


@dataclass
class GradientRecord:
    """Partials of each measured <Z_k> w.r.t. the remapped angles."""

    expvals: np.ndarray
    dphi: np.ndarray  # (K, L, n_qubits, 3)
    dphi_dtheta: np.ndarray  # (L, n_qubits, 3)

    def wrt_raw(self) -> np.ndarray:
        """Chain rule through phi = pi * tanh(theta)."""
        return self.dphi * self.dphi_dtheta[None]


def _template_args(template: CircuitTemplate, params: VqcParameters, features):
    phi, dphi = remap_angles(params.theta.reshape(-1))
    data = template.data_angles(np.asarray(features, dtype=float).reshape(1, -1))
    return template.program(), phi, dphi, data


def _record(template, params, program, phi, dphi, data, jac) -> GradientRecord:
    shape = (template.n_layers, template.n_qubits, 3)
    ev = kernels.expectations(program, phi, data, template.n_outputs)[0]
    return GradientRecord(ev, jac.reshape((template.n_outputs,) + shape), dphi.reshape(shape))


def adjoint_gradient(template: CircuitTemplate, params: VqcParameters, features) -> GradientRecord:
    program, phi, dphi, data = _template_args(template, params, features)
    jac = adjoint_jacobian(program, phi, data, template.n_outputs)
    return _record(template, params, program, phi, dphi, data, jac)


def parameter_shift_gradient(
    template: CircuitTemplate, params: VqcParameters, features, shift: float = math.pi / 2
) -> GradientRecord:
    program, phi, dphi, data = _template_args(template, params, features)
    jac = shift_jacobian(program, phi, data, template.n_outputs, shift)
    return _record(template, params, program, phi, dphi, data, jac)


def finite_difference_gradient(
    template: CircuitTemplate, params: VqcParameters, features, h: float = 1e-5
) -> GradientRecord:
    program, phi, dphi, data = _template_args(template, params, features)
    jac = finite_difference_jacobian(program, phi, data, template.n_outputs, h)
    return _record(template, params, program, phi, dphi, data, jac)


def numerical_gradient(loss_fn, flat, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of a flat vector."""
    flat = np.asarray(flat, dtype=float)
    grad = np.empty_like(flat)
    for i in range(len(flat)):
        step = np.zeros_like(flat)
        step[i] = h
        grad[i] = (loss_fn(flat + step) - loss_fn(flat - step)) / (2.0 * h)
    return grad
