# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-dimension second-moment scan kernels.

These propagate the exact iterate second moments of stochastic gradient
(optionally preconditioned) and Polyak momentum along the eigendirections
of a quadratic, one step at a time, returning the first step at which the
expected suboptimality 0.5 * sum_i h_i * sigma_i drops to the target.
State arrays are updated in place so a scan can be resumed.
"""

import numpy as np

cimport numpy as cnp


def sg_scan(double[::1] h, double[::1] m, double[::1] s, double[::1] sigma,
            double alpha, double eps, long nmax):
    """Run up to nmax steps; return the 1-based step of first crossing or -1."""
    cdef Py_ssize_t d = h.shape[0]
    cdef Py_ssize_t i
    cdef long t
    cdef double f, r, a2 = alpha * alpha
    for t in range(1, nmax + 1):
        f = 0.0
        for i in range(d):
            r = 1.0 - alpha * m[i] * h[i]
            sigma[i] = r * r * sigma[i] + a2 * m[i] * m[i] * s[i]
            f += h[i] * sigma[i]
        if 0.5 * f <= eps:
            return t
    return -1


def polyak_scan(double[::1] h, double[::1] s, double[:, ::1] st,
                double alpha, double gamma, double eps, long nmax):
    """Joint (theta, v) second-moment scan; st rows are (s_th, s_v, s_thv)."""
    cdef Py_ssize_t d = h.shape[0]
    cdef Py_ssize_t i
    cdef long t
    cdef double f, g, a, b, c
    for t in range(1, nmax + 1):
        f = 0.0
        for i in range(d):
            g = gamma - alpha * h[i]
            a = st[0, i]
            b = st[1, i]
            c = st[2, i]
            st[0, i] = a - 2.0 * alpha * c + alpha * alpha * b
            st[1, i] = h[i] * h[i] * a + g * g * b + 2.0 * h[i] * g * c + s[i]
            st[2, i] = h[i] * a - alpha * g * b + (g - alpha * h[i]) * c
            f += h[i] * st[0, i]
        if 0.5 * f <= eps:
            return t
    return -1
