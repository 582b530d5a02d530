# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops of the split-step propagator."""

import numpy as np
cimport cython
from libc.math cimport sqrt


def apply_phases(double complex[:, ::1] psi, const double complex[::1] static,
                 const double complex[::1] periodic):
    """psi[b, i] *= static[i] * periodic[i % len(periodic)], in place."""
    cdef Py_ssize_t nb = psi.shape[0], n = psi.shape[1], p = periodic.shape[0]
    cdef Py_ssize_t b, s, r, i
    cdef double ar, ai, pr, pi, qr, qi
    if static.shape[0] != n or n % p:
        raise ValueError("shape mismatch")
    # real arithmetic: C99 complex products go through a slow NaN-safe helper
    with nogil:
        for b in range(nb):
            for s in range(n // p):
                for r in range(p):
                    i = s * p + r
                    qr = static[i].real * periodic[r].real - static[i].imag * periodic[r].imag
                    qi = static[i].real * periodic[r].imag + static[i].imag * periodic[r].real
                    ar = psi[b, i].real
                    ai = psi[b, i].imag
                    pr = ar * qr - ai * qi
                    pi = ar * qi + ai * qr
                    psi[b, i] = pr + 1j * pi


def moments(const double complex[:, ::1] psi, const double[::1] x):
    """Rows of (sum |psi|^2, sum |psi|^2 x, sum |psi|^2 x^2) per batch member."""
    cdef Py_ssize_t nb = psi.shape[0], n = psi.shape[1], b, i
    cdef double rho, m0, m1, m2
    out = np.empty((nb, 3))
    cdef double[:, ::1] o = out
    with nogil:
        for b in range(nb):
            m0 = 0.0
            m1 = 0.0
            m2 = 0.0
            for i in range(n):
                rho = psi[b, i].real * psi[b, i].real + psi[b, i].imag * psi[b, i].imag
                m0 += rho
                m1 += rho * x[i]
                m2 += rho * x[i] * x[i]
            o[b, 0] = m0
            o[b, 1] = m1
            o[b, 2] = m2
    return out


def edge_amplitude(const double complex[:, ::1] psi, Py_ssize_t width):
    """Largest |psi| within ``width`` points of either end, per member."""
    cdef Py_ssize_t nb = psi.shape[0], n = psi.shape[1], b, i
    cdef double a, best
    out = np.empty(nb)
    cdef double[::1] o = out
    with nogil:
        for b in range(nb):
            best = 0.0
            for i in range(width):
                a = psi[b, i].real * psi[b, i].real + psi[b, i].imag * psi[b, i].imag
                if a > best:
                    best = a
                a = psi[b, n - 1 - i].real * psi[b, n - 1 - i].real + psi[b, n - 1 - i].imag * psi[b, n - 1 - i].imag
                if a > best:
                    best = a
            o[b] = sqrt(best)
    return out
