"""Small time-quadrature kernels shared by the solvers."""

from __future__ import annotations

import numpy as np


def phi1(z):
    """``(1 - exp(-z)) / z``, i.e. ``int_0^1 exp(-z x) dx``; equals 1 at ``z = 0``."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = -np.expm1(-z[nz]) / z[nz]
    return out


def psi(z):
    """``int_0^1 exp(-z x) x dx = (1 - exp(-z)(1 + z)) / z^2``; equals 1/2 at ``z = 0``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zs = z[small]
    # Taylor series; truncation error < 1e-16 for |z| < 1e-2
    out[small] = 0.5 - zs / 3 + zs**2 / 8 - zs**3 / 30 + zs**4 / 144 - zs**5 / 840
    zl = z[~small]
    out[~small] = (-np.expm1(-zl) - zl * np.exp(-zl)) / zl**2
    return out


def exp_trapezoid_weights(rate, h: float):
    """Weights ``(w_old, w_new)`` of the product trapezoid rule on one step.

    Approximates ``int_0^h exp(-rate (h - s)) g(s) ds`` by linear interpolation
    of ``g`` between its endpoint values; exact when ``g`` is affine in time.
    """
    z = np.asarray(rate, dtype=float) * h
    p = psi(z)
    return h * p, h * (phi1(z) - p)


def log_mean(a, b):
    """Logarithmic mean ``(a - b) / (ln a - ln b)`` of nonnegative arrays.

    ``h * log_mean(p(0), p(h))`` integrates any positive exponential
    ``p(t) = p0 exp(-c t)`` over ``[0, h]`` exactly.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(np.broadcast(a, b).shape)
    a, b = np.broadcast_arrays(a, b)
    pos = (a > 0) & (b > 0)
    aa, bb = a[pos], b[pos]
    x = bb / aa
    lx = np.log(x)
    close = np.abs(lx) < 1e-4
    res = np.empty_like(aa)
    # series of (x - 1) / ln x about x = 1 in powers of u = ln x
    u = lx[close]
    res[close] = aa[close] * (1 + u / 2 + u**2 / 6 + u**3 / 24)
    res[~close] = aa[~close] * np.expm1(lx[~close]) / lx[~close]
    out[pos] = res
    return out


def trapezoid(values, times) -> float:
    v = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    if v.size < 2:
        return 0.0
    return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(t)))
