"""Radial background vortices: Gaussian family, tabulated profiles, critical radius.

Conventions: u(r) = r^-2 int_0^r Omega(s) s ds is the angular velocity and
beta(r) = -Omega'(r)/r.  Both are positive for the monotone vortices handled here.
"""
from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator, PPoly
from scipy.optimize import brentq


class VortexValidationError(ValueError):
    """Raised when a background profile violates a structural assumption.

    ``violations`` lists every failed check, not just the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("vortex validation failed: " + "; ".join(self.violations))


class OutOfSpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class RadialVortex:
    omega_bg: Callable
    u: Callable
    du: Callable
    d2u: Callable
    d3u: Callable
    beta: Callable
    dbeta: Callable
    u0: float
    params: dict = field(default_factory=dict)
    du_over_r: Callable | None = None
    r_scale: float = 1.0

    @property
    def beta0(self):
        return float(self.beta(np.array([0.0]))[0])

    def identity_residual(self, r):
        """Pointwise beta + u'' + 3u'/r, which vanishes for any radial vortex."""
        r = np.asarray(r, dtype=float)
        dur = self.du_over_r(r) if self.du_over_r is not None else self.du(r) / r
        return self.beta(r) + self.d2u(r) + 3.0 * dur

    def critical_radius(self, c):
        return critical_radius(self, c)


# ---------------------------------------------------------------------------
# Gaussian family

_NSERIES = 30
_S_SWITCH = 2.0


def _g_derivs(s, order=3):
    """Derivatives 0..order of g(s) = (1 - e^-s)/s.

    Series for s < 2 (no cancellation), closed form from the Leibniz rule above.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros((order + 1,) + s.shape)
    small = s < _S_SWITCH
    if np.any(small):
        ss = s[small]
        for m in range(order + 1):
            acc = np.zeros_like(ss)
            # Horner on the tail-to-head series sum_{n>=m} (-1)^n n!/((n-m)!(n+1)!) s^(n-m)
            for n in range(_NSERIES + m, m - 1, -1):
                coef = (-1.0) ** n * factorial(n) / (factorial(n - m) * factorial(n + 1))
                acc = acc * ss + coef
            out[m][small] = acc
    big = ~small
    if np.any(big):
        sb = s[big]
        e = np.exp(-sb)
        for m in range(order + 1):
            acc = np.zeros_like(sb)
            for j in range(m + 1):
                hj = (1.0 - e) if j == 0 else (-1.0) ** (j + 1) * e
                inv = (-1.0) ** (m - j) * factorial(m - j) * sb ** (-1.0 - (m - j))
                acc += (factorial(m) / (factorial(j) * factorial(m - j))) * hj * inv
            out[m][big] = acc
    return out


def build_gaussian_vortex(lam=2 * np.pi, L=1.0):
    """Gaussian vortex Omega = lam/(4 pi L^2) exp(-r^2/4L^2) with analytic derivatives."""
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"circulation lambda must be positive, got {lam}")
    if not (np.isfinite(L) and L > 0):
        raise ValueError(f"length scale L must be positive, got {L}")
    lam = float(lam)
    L = float(L)
    U0 = lam / (8.0 * np.pi * L * L)
    a = 1.0 / (2.0 * L * L)  # ds/dr = a r

    def _s(r):
        r = np.asarray(r, dtype=float)
        return r, r * r / (4.0 * L * L)

    def omega_bg(r):
        r, s = _s(r)
        return 2.0 * U0 * np.exp(-s)

    def u(r):
        r, s = _s(r)
        return U0 * _g_derivs(s, 0)[0]

    def du(r):
        r, s = _s(r)
        return U0 * _g_derivs(s, 1)[1] * a * r

    def du_over_r(r):
        r, s = _s(r)
        return U0 * _g_derivs(s, 1)[1] * a

    def d2u(r):
        r, s = _s(r)
        g = _g_derivs(s, 2)
        return U0 * (g[2] * (a * r) ** 2 + g[1] * a)

    def d3u(r):
        r, s = _s(r)
        g = _g_derivs(s, 3)
        return U0 * (g[3] * (a * r) ** 3 + 3.0 * g[2] * (a * r) * a)

    def beta(r):
        r, s = _s(r)
        return (U0 / (L * L)) * np.exp(-s)

    def dbeta(r):
        r, s = _s(r)
        return -(U0 / (L * L)) * np.exp(-s) * a * r

    return RadialVortex(
        omega_bg=omega_bg, u=u, du=du, d2u=d2u, d3u=d3u, beta=beta, dbeta=dbeta,
        u0=U0, params={"type": "gaussian", "lambda": lam, "L": L},
        du_over_r=du_over_r, r_scale=L,
    )


# ---------------------------------------------------------------------------
# Tabulated profiles

def _moment_ppoly(pp):
    """PPoly of s*Omega(s) for the pieces of ``pp`` (cubic) on x >= 0, then its antiderivative."""
    x = pp.x
    c = pp.c
    xi = x[:-1]
    c0, c1, c2, c3 = c
    cs = np.vstack([c0, c1 + xi * c0, c2 + xi * c1, c3 + xi * c2, xi * c3])
    return PPoly(cs, x).antiderivative()


def build_vortex_from_omega(r_samples, omega_samples, *, identity_tol=1e-4, validate=True):
    """Vortex from tabulated Omega(r) via monotone cubic interpolation.

    Omega is extended evenly to r < 0 before interpolating so that Omega'(0) = 0
    and beta(0) is finite.  u is the exact moment integral of the interpolant.
    Outside the sample range Omega is taken as 0.
    """
    r = np.asarray(r_samples, dtype=float)
    om = np.asarray(omega_samples, dtype=float)
    if r.ndim != 1 or r.shape != om.shape or r.size < 4:
        raise ValueError("need matching 1-D arrays of at least 4 samples")
    if np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("sample radii must be nonnegative and strictly increasing")
    if r[0] > 0:
        # even extrapolation to the origin from Omega ~ a + b r^2
        b = (om[1] - om[0]) / (r[1] ** 2 - r[0] ** 2)
        r = np.concatenate([[0.0], r])
        om = np.concatenate([[om[0] - b * r[1] ** 2], om])
    xs = np.concatenate([-r[:0:-1], r])
    ys = np.concatenate([om[:0:-1], om])
    full = PchipInterpolator(xs, ys, extrapolate=False)
    npos = r.size - 1
    pp = PPoly(full.c[:, -npos:], full.x[-npos - 1:])
    dpp = pp.derivative()
    d2pp = pp.derivative(2)
    mpp = _moment_ppoly(pp)
    rmax = r[-1]
    r1 = r[1]
    m_total = float(mpp(rmax))
    a0 = pp.c[::-1, 0]  # Omega = sum_j a0[j] r^j on [0, r1]

    def _poly_u(rr, deriv):
        # u = sum_j a_j r^j/(j+2) on the first piece
        out = np.zeros_like(rr)
        for j, aj in enumerate(a0):
            cj = aj / (j + 2)
            if j >= deriv:
                fac = 1.0
                for q in range(deriv):
                    fac *= j - q
                out += cj * fac * rr ** (j - deriv)
        return out

    def _eval(rr, fun_inside, fun_first, fun_outside):
        rr = np.asarray(rr, dtype=float)
        out = np.empty_like(rr)
        first = rr < r1
        outside = rr > rmax
        mid = ~first & ~outside
        if np.any(first):
            out[first] = fun_first(rr[first])
        if np.any(mid):
            out[mid] = fun_inside(rr[mid])
        if np.any(outside):
            out[outside] = fun_outside(rr[outside])
        return out

    def omega_bg(rr):
        rr = np.asarray(rr, dtype=float)
        return np.where(rr <= rmax, pp(np.clip(rr, 0, rmax)), 0.0)

    def u(rr):
        return _eval(rr, lambda x: mpp(x) / x**2, lambda x: _poly_u(x, 0), lambda x: m_total / x**2)

    def du(rr):
        return _eval(rr, lambda x: pp(x) / x - 2 * mpp(x) / x**3, lambda x: _poly_u(x, 1),
                     lambda x: -2 * m_total / x**3)

    def du_over_r(rr):
        rr = np.asarray(rr, dtype=float)
        out = np.empty_like(rr)
        first = rr < r1
        # u'/r on the first piece: sum_j j a_j r^(j-2)/(j+2), the j=0 term is absent and j=1 term is
        # singular only if a_1 != 0, which the even extension forbids up to roundoff
        if np.any(first):
            x = rr[first]
            acc = np.zeros_like(x)
            for j, aj in enumerate(a0):
                if j >= 2:
                    acc += j * aj / (j + 2) * x ** (j - 2)
                elif j == 1:
                    acc += aj / 3.0 / np.maximum(x, 1e-300)
            out[first] = acc
        rest = ~first
        if np.any(rest):
            out[rest] = du(rr[rest]) / rr[rest]
        return out

    def d2u(rr):
        return _eval(rr, lambda x: dpp(x) / x - 3 * pp(x) / x**2 + 6 * mpp(x) / x**4,
                     lambda x: _poly_u(x, 2), lambda x: 6 * m_total / x**4)

    def d3u(rr):
        return _eval(rr, lambda x: d2pp(x) / x - 4 * dpp(x) / x**2 + 12 * pp(x) / x**3 - 24 * mpp(x) / x**5,
                     lambda x: _poly_u(x, 3), lambda x: -24 * m_total / x**5)

    def beta(rr):
        def first(x):
            # -Omega'/r = -(a1/r + 2 a2 + 3 a3 r)
            return -(a0[1] / np.maximum(x, 1e-300) + 2 * a0[2] + 3 * a0[3] * x)
        return _eval(rr, lambda x: -dpp(x) / x, first, lambda x: np.zeros_like(x))

    def dbeta(rr):
        def first(x):
            return -(-a0[1] / np.maximum(x, 1e-300) ** 2 + 3 * a0[3])
        return _eval(rr, lambda x: -d2pp(x) / x + dpp(x) / x**2, first, lambda x: np.zeros_like(x))

    u0 = a0[0] / 2.0
    v = RadialVortex(
        omega_bg=omega_bg, u=u, du=du, d2u=d2u, d3u=d3u, beta=beta, dbeta=dbeta,
        u0=float(u0), params={"type": "tabulated", "n_samples": int(r.size), "r_max": float(rmax)},
        du_over_r=du_over_r, r_scale=float(r[np.argmin(np.abs(om - om[0] / 2))]) or 1.0,
    )
    if validate:
        violations = validate_vortex(v, r[1:], identity_tol=identity_tol)
        if violations:
            raise VortexValidationError(violations)
    return v


def validate_vortex(v, r, identity_tol=1e-8):
    """Check positivity, monotonicity, the beta identity and tail decay on radii ``r``.

    Returns the list of violated assumptions (empty if all pass).
    """
    r = np.asarray(r, dtype=float)
    r = r[r > 0]
    out = []
    om = v.omega_bg(r)
    b = v.beta(r)
    if not np.all(b > 0):
        out.append("β not strictly positive")
    if not np.all(v.du(r) < 0):
        out.append("u′ not strictly negative")
    if not np.all(v.u(r) > 0):
        out.append("u not strictly positive")
    scale = max(abs(v.beta0), 1e-300)
    res = np.max(np.abs(v.identity_residual(r))) / scale
    if not res <= identity_tol:
        out.append(f"identity β + u″ + 3u′/r violated (relative residual {res:.3g})")
    # decay: Omega <r>^6 and beta <r>^8 must not grow over the last decade
    rmax = r[-1]
    tail = r >= rmax / 10
    if np.count_nonzero(tail) >= 2:
        jr = 1 + r[tail] ** 2
        for name, vals, p in (("Ω", om[tail], 3), ("β", b[tail], 4)):
            w = np.abs(vals) * jr ** p
            if w[0] > 0 and np.max(w) > 2.0 * w[0]:
                out.append(f"insufficient decay: {name}·⟨r⟩^{2 * p} grows on the last decade")
    return out


def critical_radius(v, c):
    """Unique r_c with u(r_c) = c for c in (0, u(0))."""
    c = float(c)
    if not (0.0 < c < v.u0):
        raise OutOfSpectrumError(f"c = {c} lies outside the continuous spectrum (0, {v.u0})")
    f = lambda r: float(v.u(np.array([r]))[0]) - c
    hi = v.r_scale
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise OutOfSpectrumError(f"no critical radius found for c = {c}")
    rc = brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000)
    return rc


def critical_radii(v, cs):
    """Vectorized critical_radius; NaN for c outside (0, u(0))."""
    cs = np.asarray(cs, dtype=float)
    out = np.full(cs.shape, np.nan)
    for i, c in np.ndenumerate(cs):
        if 0.0 < c < v.u0:
            out[i] = critical_radius(v, c)
    return out


def vortex_from_config(block):
    """Build a vortex from {"type": "gaussian", ...} or {"type": "tabulated", "path": ...}."""
    kind = block.get("type")
    if kind == "gaussian":
        return build_gaussian_vortex(block.get("lambda", 2 * np.pi), block.get("L", 1.0))
    if kind == "tabulated":
        data = np.genfromtxt(block["path"], delimiter=",", comments="#")
        data = np.atleast_2d(data)
        data = data[np.all(np.isfinite(data[:, :2]), axis=1)]
        return build_vortex_from_omega(data[:, 0], data[:, 1])
    raise ValueError(f"unknown vortex type {kind!r}")
