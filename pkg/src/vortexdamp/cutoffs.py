"""Smooth cutoff chi: 1 for r < 1/2, 0 for r > 3/4, C-infinity in between."""
import numpy as np
from scipy.special import expit


def _step(x):
    """s(x) = psi(x)/(psi(x)+psi(1-x)), psi(x) = exp(-1/x); returns s, s', s'' on 0 < x < 1."""
    h = 1.0 / x - 1.0 / (1.0 - x)
    s = expit(-h)
    sc = expit(h)  # 1 - s without cancellation
    h1 = -1.0 / x**2 - 1.0 / (1.0 - x) ** 2
    h2 = 2.0 / x**3 - 2.0 / (1.0 - x) ** 3
    s1 = -s * sc * h1
    s2 = -s1 * (1.0 - 2.0 * s) * h1 - s * sc * h2
    return s, s1, s2


def chi(r, deriv=0):
    """The cutoff and its first two derivatives (deriv in 0, 1, 2)."""
    r = np.asarray(r, dtype=float)
    x = 4.0 * (r - 0.5)
    out = np.zeros_like(r)
    if deriv == 0:
        out[x <= 0] = 1.0
    mid = (x > 0) & (x < 1)
    if np.any(mid):
        s, s1, s2 = _step(x[mid])
        out[mid] = (1.0 - s, -4.0 * s1, -16.0 * s2)[deriv]
    return out
