# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Native statevector kernels.

A circuit is a flat program of ops. For op ``g``: ``kinds[g]`` is one of
RX=0, RY=1, RZ=2, CNOT=3; ``q0[g]`` is the rotation target or the CNOT
control; ``q1[g]`` is the CNOT target; ``src[g]`` says where the rotation
angle comes from (0 constant ``consts[g]``, 1 ``params[idx[g]]``,
2 ``data[b, idx[g]]``). Qubit 0 is the most significant bit.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

ctypedef double complex cplx

cdef enum:
    K_RX = 0
    K_RY = 1
    K_RZ = 2
    K_CNOT = 3


cdef inline double _angle(int g, int b, const int[::1] src, const int[::1] idx,
                          const double[::1] consts, const double[::1] params,
                          const double[:, ::1] data) noexcept nogil:
    cdef int s = src[g]
    if s == 1:
        return params[idx[g]]
    if s == 2:
        return data[b, idx[g]]
    return consts[g]


cdef void _rot(cplx* psi, Py_ssize_t dim, Py_ssize_t mask, int kind,
               double phi) noexcept nogil:
    cdef double c = cos(0.5 * phi)
    cdef double s = sin(0.5 * phi)
    cdef Py_ssize_t i, j
    cdef cplx a, b
    cdef cplx ph0, ph1
    if kind == K_RZ:
        ph0 = c - 1j * s
        ph1 = c + 1j * s
        for i in range(dim):
            if i & mask:
                psi[i] = psi[i] * ph1
            else:
                psi[i] = psi[i] * ph0
        return
    for i in range(dim):
        if i & mask:
            continue
        j = i | mask
        a = psi[i]
        b = psi[j]
        if kind == K_RX:
            psi[i] = c * a - 1j * s * b
            psi[j] = -1j * s * a + c * b
        else:
            psi[i] = c * a - s * b
            psi[j] = s * a + c * b


cdef void _cnot(cplx* psi, Py_ssize_t dim, Py_ssize_t cmask,
                Py_ssize_t tmask) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef cplx tmp
    for i in range(dim):
        if (i & cmask) and not (i & tmask):
            j = i | tmask
            tmp = psi[i]
            psi[i] = psi[j]
            psi[j] = tmp


cdef void _run(cplx* psi, int n, Py_ssize_t dim, Py_ssize_t n_ops, int b,
               const int[::1] kinds, const int[::1] q0, const int[::1] q1,
               const int[::1] src, const int[::1] idx, const double[::1] consts,
               const double[::1] params, const double[:, ::1] data) noexcept nogil:
    cdef Py_ssize_t g, i
    for i in range(dim):
        psi[i] = 0
    psi[0] = 1
    for g in range(n_ops):
        if kinds[g] == K_CNOT:
            _cnot(psi, dim, (<Py_ssize_t>1) << (n - 1 - q0[g]),
                  (<Py_ssize_t>1) << (n - 1 - q1[g]))
        else:
            _rot(psi, dim, (<Py_ssize_t>1) << (n - 1 - q0[g]), kinds[g],
                 _angle(g, b, src, idx, consts, params, data))


cdef double _expz(const cplx* psi, Py_ssize_t dim, Py_ssize_t mask) noexcept nogil:
    cdef double acc = 0.0
    cdef double p
    cdef Py_ssize_t i
    for i in range(dim):
        p = psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
        if i & mask:
            acc -= p
        else:
            acc += p
    return acc


cdef double _pauli_overlap_imag(const cplx* lam, const cplx* psi, Py_ssize_t dim,
                                Py_ssize_t mask, int kind) noexcept nogil:
    # Im <lam| P |psi> with P the generator (X, Y or Z) on the masked qubit.
    cdef cplx acc = 0
    cdef Py_ssize_t i, j
    for i in range(dim):
        if i & mask:
            continue
        j = i | mask
        if kind == K_RX:
            acc = acc + lam[i].conjugate() * psi[j] + lam[j].conjugate() * psi[i]
        elif kind == K_RY:
            acc = acc + lam[i].conjugate() * (-1j * psi[j]) + lam[j].conjugate() * (1j * psi[i])
        else:
            acc = acc + lam[i].conjugate() * psi[i] - lam[j].conjugate() * psi[j]
    return acc.imag


def states(int n_qubits, const int[::1] kinds, const int[::1] q0, const int[::1] q1,
           const int[::1] src, const int[::1] idx, const double[::1] consts,
           const double[::1] params, const double[:, ::1] data):
    """Final statevectors, shape (batch, 2**n_qubits)."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n_qubits
    cdef Py_ssize_t batch = data.shape[0]
    cdef Py_ssize_t n_ops = kinds.shape[0]
    out = np.empty((batch, dim), dtype=np.complex128)
    cdef cplx[:, ::1] view = out
    cdef Py_ssize_t b
    with nogil:
        for b in range(batch):
            _run(&view[b, 0], n_qubits, dim, n_ops, <int>b, kinds, q0, q1, src,
                 idx, consts, params, data)
    return out


def forward(int n_qubits, int n_meas, const int[::1] kinds, const int[::1] q0,
            const int[::1] q1, const int[::1] src, const int[::1] idx,
            const double[::1] consts, const double[::1] params,
            const double[:, ::1] data):
    """<Z_k> for k < n_meas, shape (batch, n_meas)."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n_qubits
    cdef Py_ssize_t batch = data.shape[0]
    cdef Py_ssize_t n_ops = kinds.shape[0]
    out = np.empty((batch, n_meas), dtype=np.float64)
    cdef double[:, ::1] ov = out
    psi_arr = np.empty(dim, dtype=np.complex128)
    cdef cplx[::1] psi = psi_arr
    cdef Py_ssize_t b
    cdef int k
    with nogil:
        for b in range(batch):
            _run(&psi[0], n_qubits, dim, n_ops, <int>b, kinds, q0, q1, src, idx,
                 consts, params, data)
            for k in range(n_meas):
                ov[b, k] = _expz(&psi[0], dim, (<Py_ssize_t>1) << (n_qubits - 1 - k))
    return out


def vjp(int n_qubits, const int[::1] kinds, const int[::1] q0, const int[::1] q1,
        const int[::1] src, const int[::1] idx, const double[::1] consts,
        const double[::1] params, const double[:, ::1] data,
        const double[:, ::1] weights):
    """Adjoint sweep for the observable sum_k weights[b, k] Z_k.

    Returns ``(expvals, grad)``: expvals has shape (batch, n_meas) and grad
    has shape (len(params),), summed over the batch.
    """
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n_qubits
    cdef Py_ssize_t batch = data.shape[0]
    cdef Py_ssize_t n_ops = kinds.shape[0]
    cdef int n_meas = weights.shape[1]
    expvals = np.empty((batch, n_meas), dtype=np.float64)
    grad = np.zeros(params.shape[0], dtype=np.float64)
    cdef double[:, ::1] ev = expvals
    cdef double[::1] gv = grad
    psi_arr = np.empty(dim, dtype=np.complex128)
    lam_arr = np.empty(dim, dtype=np.complex128)
    cdef cplx[::1] psi = psi_arr
    cdef cplx[::1] lam = lam_arr
    cdef Py_ssize_t b, i, g
    cdef Py_ssize_t mask
    cdef int k, kind
    cdef double diag, phi
    with nogil:
        for b in range(batch):
            _run(&psi[0], n_qubits, dim, n_ops, <int>b, kinds, q0, q1, src, idx,
                 consts, params, data)
            for k in range(n_meas):
                ev[b, k] = _expz(&psi[0], dim, (<Py_ssize_t>1) << (n_qubits - 1 - k))
            for i in range(dim):
                diag = 0.0
                for k in range(n_meas):
                    if i & ((<Py_ssize_t>1) << (n_qubits - 1 - k)):
                        diag -= weights[b, k]
                    else:
                        diag += weights[b, k]
                lam[i] = diag * psi[i]
            for g in range(n_ops - 1, -1, -1):
                kind = kinds[g]
                if kind == K_CNOT:
                    _cnot(&psi[0], dim, (<Py_ssize_t>1) << (n_qubits - 1 - q0[g]),
                          (<Py_ssize_t>1) << (n_qubits - 1 - q1[g]))
                    _cnot(&lam[0], dim, (<Py_ssize_t>1) << (n_qubits - 1 - q0[g]),
                          (<Py_ssize_t>1) << (n_qubits - 1 - q1[g]))
                    continue
                mask = (<Py_ssize_t>1) << (n_qubits - 1 - q0[g])
                if src[g] == 1:
                    gv[idx[g]] += _pauli_overlap_imag(&lam[0], &psi[0], dim, mask, kind)
                phi = _angle(g, <int>b, src, idx, consts, params, data)
                _rot(&psi[0], dim, mask, kind, -phi)
                _rot(&lam[0], dim, mask, kind, -phi)
    return expvals, grad
