"""Modified Bessel functions of the first kind, orders 0 and 1.

Power series below ``SERIES_LIMIT``, Hankel asymptotic expansion above it.
All functions accept scalars or numpy arrays. Negative arguments follow the
parity relations I0(-x) = I0(x) and I1(-x) = -I1(x).

The exponentially scaled forms (``*_e``) return ``exp(-|x|) * I(x)`` and are
what the line kernels use, since the kernels multiply the Bessel values by a
decaying exponential that would otherwise overflow separately.
"""

from __future__ import annotations

import math

import numpy as np

# Series terms are all positive, so there is no cancellation; the only cost of a
# high switch-over is the number of terms.  At 20 the asymptotic expansion's
# smallest term is ~exp(-40), far below double precision.
SERIES_LIMIT = 20.0
_SERIES_TERMS = 80
_ASYMPTOTIC_TERMS = 40


def _series(x, order):
    # sum_k (x/2)^(2k+order) / (k! (k+order)!), evaluated by term recurrence
    q = 0.25 * x * x
    term = np.ones_like(x) if order == 0 else 0.5 * x
    total = term.copy()
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + order))
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    return total


def _asymptotic_scaled(x, order):
    # exp(-x) I_nu(x) ~ 1/sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k
    mu = 4.0 * order * order
    term = np.ones_like(x)
    total = term.copy()
    best = np.abs(term)
    done = np.zeros(x.shape, dtype=bool)
    for k in range(1, _ASYMPTOTIC_TERMS):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        # stop each lane at its smallest term (optimal truncation)
        done |= np.abs(nxt) >= best
        term = np.where(done, 0.0, nxt)
        best = np.where(done, best, np.abs(nxt))
        total = total + term
        if np.all(done | (np.abs(term) <= 1e-17 * np.abs(total))):
            break
    return total / np.sqrt(2.0 * math.pi * x)


def _evaluate(x, order, scaled):
    arr = np.asarray(x, dtype=float)
    a = np.abs(arr)
    out = np.empty_like(a)
    small = a <= SERIES_LIMIT
    if np.any(small):
        s = _series(a[small], order)
        out[small] = s * np.exp(-a[small]) if scaled else s
    big = ~small
    if np.any(big):
        s = _asymptotic_scaled(a[big], order)
        out[big] = s if scaled else s * np.exp(a[big])
    if order == 1:
        out = np.where(arr < 0, -out, out)
    if np.ndim(x) == 0:
        return float(out)
    return out


def bessel_i0(x):
    """Modified Bessel function I0."""
    return _evaluate(x, 0, scaled=False)


def bessel_i1(x):
    """Modified Bessel function I1."""
    return _evaluate(x, 1, scaled=False)


def bessel_i0e(x):
    """exp(-|x|) * I0(x)."""
    return _evaluate(x, 0, scaled=True)


def bessel_i1e(x):
    """exp(-|x|) * I1(x)."""
    return _evaluate(x, 1, scaled=True)


def bessel_i1_over_x_e(x):
    """exp(-|x|) * I1(x) / x, with the removable point x = 0 giving 1/2.

    I1(x)/x is even and analytic, so this form lets the line kernels be
    evaluated at t = 0 without a guard epsilon.
    """
    arr = np.asarray(x, dtype=float)
    a = np.abs(arr)
    out = np.empty_like(a)
    small = a <= SERIES_LIMIT
    if np.any(small):
        # I1(x)/x = 1/2 * sum_k (x^2/4)^k / (k! (k+1)!)
        q = 0.25 * a[small] ** 2
        term = np.full_like(q, 0.5)
        total = term.copy()
        for k in range(1, _SERIES_TERMS):
            term = term * q / (k * (k + 1))
            total = total + term
            if np.all(term <= 1e-17 * total):
                break
        out[small] = total * np.exp(-a[small])
    big = ~small
    if np.any(big):
        out[big] = _asymptotic_scaled(a[big], 1) / a[big]
    if np.ndim(x) == 0:
        return float(out)
    return out
