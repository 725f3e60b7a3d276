# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def advance(const double[:, :, ::1] cum, const cnp.int64_t[::1] states, const cnp.int64_t[::1] actions,
            const double[::1] u, cnp.int64_t[::1] out):
    cdef Py_ssize_t p, k, m = cum.shape[2]
    cdef Py_ssize_t n = states.shape[0]
    cdef cnp.int64_t s, a
    cdef double x
    with nogil:
        for p in range(n):
            s = states[p]
            a = actions[p]
            x = u[p]
            k = 0
            while k < m - 1 and cum[s, a, k] <= x:
                k += 1
            out[p] = k
    return np.asarray(out)


cdef inline double _wrap(double raw) noexcept nogil:
    if raw > 1.0:
        raw = raw - 1.0
    elif raw < 0.0:
        raw = raw + 1.0
    if raw <= 0.0 or raw >= 1.0:
        raw = 0.5
    return raw


def wrap_step(theta, double gamma, omega):
    cdef const double[::1] th = np.ascontiguousarray(np.ravel(theta), dtype=np.float64)
    cdef const double[::1] om = np.ascontiguousarray(np.broadcast_to(omega, np.shape(theta)).ravel(), dtype=np.float64)
    out = np.empty(th.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t p
    cdef double g1 = 1.0 - gamma
    for p in range(th.shape[0]):
        o[p] = _wrap(gamma * th[p] + g1 * om[p])
    return out.reshape(np.shape(theta))


def example1_step(double[:, ::1] theta, double[::1] thetabar, const double[::1] omega, double gamma,
                  double cost, double weight, double path_weight, double[:, ::1] acc, double[::1] dacc):
    cdef Py_ssize_t g, p, G = theta.shape[0], N = theta.shape[1]
    cdef double alloc, g1 = 1.0 - gamma, w
    with nogil:
        for p in range(N):
            alloc = 1.0 if thetabar[p] >= cost else 0.0
            w = omega[p]
            dacc[p] = dacc[p] + path_weight * alloc
            for g in range(G):
                acc[g, p] = acc[g, p] + (weight * theta[g, p]) * alloc
                theta[g, p] = _wrap(gamma * theta[g, p] + g1 * w)
            thetabar[p] = _wrap(gamma * thetabar[p] + g1 * w)
