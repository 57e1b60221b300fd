"""Pure-numpy fallback for the moment-scan kernels.

Arithmetic matches the compiled kernels step for step, so both engines
produce identical crossing counts; only speed differs.
"""

from __future__ import annotations

import numpy as np


def sg_scan(h, m, s, sigma, alpha, eps, nmax):
    r2 = (1.0 - alpha * m * h) ** 2
    inj = (alpha * m) ** 2 * s
    for t in range(1, nmax + 1):
        sigma *= r2
        sigma += inj
        if 0.5 * float(h @ sigma) <= eps:
            return t
    return -1


def polyak_scan(h, s, st, alpha, gamma, eps, nmax):
    g = gamma - alpha * h
    h2 = h * h
    g2 = g * g
    hg2 = 2.0 * h * g
    ag = alpha * g
    gah = g - alpha * h
    a2 = alpha * alpha
    for t in range(1, nmax + 1):
        a, b, c = st[0].copy(), st[1].copy(), st[2].copy()
        st[0] = a - 2.0 * alpha * c + a2 * b
        st[1] = h2 * a + g2 * b + hg2 * c + s
        st[2] = h * a - ag * b + gah * c
        if 0.5 * float(h @ st[0]) <= eps:
            return t
    return -1
