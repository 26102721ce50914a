"""Pure numpy implementation of the statevector kernels.

Same program format and signatures as the compiled ``_kernels`` module.
The whole batch is simulated at once: the state array has shape
``(batch, 2**n)`` and each gate acts on a reshaped view that exposes the
target qubit as its own axis.
"""
from __future__ import annotations

import numpy as np

RX, RY, RZ, CNOT = 0, 1, 2, 3


def _angles(g, src, idx, consts, params, data):
    s = src[g]
    if s == 1:
        return params[idx[g]]
    if s == 2:
        return data[:, idx[g]]
    return consts[g]


def _rot(psi, n, q, kind, phi):
    batch = psi.shape[0]
    view = psi.reshape(batch, 1 << q, 2, 1 << (n - q - 1))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (batch,))[:, None, None]
    c = np.cos(0.5 * phi)
    s = np.sin(0.5 * phi)
    a = view[:, :, 0, :].copy()
    b = view[:, :, 1, :].copy()
    if kind == RX:
        view[:, :, 0, :] = c * a - 1j * s * b
        view[:, :, 1, :] = -1j * s * a + c * b
    elif kind == RY:
        view[:, :, 0, :] = c * a - s * b
        view[:, :, 1, :] = s * a + c * b
    else:
        view[:, :, 0, :] = (c - 1j * s) * a
        view[:, :, 1, :] = (c + 1j * s) * b


def _cnot(psi, n, control, target):
    batch = psi.shape[0]
    view = psi.reshape((batch,) + (2,) * n)
    sel = [slice(None)] * (n + 1)
    sel[1 + control] = 1
    sub = view[tuple(sel)]
    axis = target if target < control else target - 1
    sub[...] = np.flip(sub, axis=1 + axis).copy()


def _run(n_qubits, kinds, q0, q1, src, idx, consts, params, data):
    batch = data.shape[0]
    psi = np.zeros((batch, 1 << n_qubits), dtype=np.complex128)
    psi[:, 0] = 1.0
    for g in range(len(kinds)):
        if kinds[g] == CNOT:
            _cnot(psi, n_qubits, q0[g], q1[g])
        else:
            _rot(psi, n_qubits, q0[g], kinds[g], _angles(g, src, idx, consts, params, data))
    return psi


def _z_signs(n_qubits, n_meas):
    basis = np.arange(1 << n_qubits)
    return np.stack(
        [1.0 - 2.0 * ((basis >> (n_qubits - 1 - k)) & 1) for k in range(n_meas)]
    )


def _pauli(psi, n, q, kind):
    batch = psi.shape[0]
    view = psi.reshape(batch, 1 << q, 2, 1 << (n - q - 1))
    out = np.empty_like(view)
    if kind == RX:
        out[:, :, 0, :] = view[:, :, 1, :]
        out[:, :, 1, :] = view[:, :, 0, :]
    elif kind == RY:
        out[:, :, 0, :] = -1j * view[:, :, 1, :]
        out[:, :, 1, :] = 1j * view[:, :, 0, :]
    else:
        out[:, :, 0, :] = view[:, :, 0, :]
        out[:, :, 1, :] = -view[:, :, 1, :]
    return out.reshape(batch, -1)


def states(n_qubits, kinds, q0, q1, src, idx, consts, params, data):
    return _run(n_qubits, kinds, q0, q1, src, idx, consts, params, np.asarray(data, dtype=float))


def forward(n_qubits, n_meas, kinds, q0, q1, src, idx, consts, params, data):
    psi = _run(n_qubits, kinds, q0, q1, src, idx, consts, params, np.asarray(data, dtype=float))
    probs = psi.real**2 + psi.imag**2
    return probs @ _z_signs(n_qubits, n_meas).T


def vjp(n_qubits, kinds, q0, q1, src, idx, consts, params, data, weights):
    data = np.asarray(data, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n_meas = weights.shape[1]
    psi = _run(n_qubits, kinds, q0, q1, src, idx, consts, params, data)
    signs = _z_signs(n_qubits, n_meas)
    expvals = (psi.real**2 + psi.imag**2) @ signs.T
    lam = (weights @ signs) * psi
    grad = np.zeros(len(params))
    for g in range(len(kinds) - 1, -1, -1):
        kind = kinds[g]
        if kind == CNOT:
            _cnot(psi, n_qubits, q0[g], q1[g])
            _cnot(lam, n_qubits, q0[g], q1[g])
            continue
        if src[g] == 1:
            grad[idx[g]] += np.sum(np.imag(np.conj(lam) * _pauli(psi, n_qubits, q0[g], kind)))
        phi = -np.asarray(_angles(g, src, idx, consts, params, data))
        _rot(psi, n_qubits, q0[g], kind, phi)
        _rot(lam, n_qubits, q0[g], kind, phi)
    return expvals, grad
