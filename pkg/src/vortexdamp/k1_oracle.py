"""Closed-form evolution of the |k| = 1 mode.

With the neutral mode removed (int omega r^2 dr = 0) the k = 1 problem is solved
explicitly: omega(t) = exp(-i u t) (f11 + f12(t)) where

    f11(r)    = omega(r) + beta/(r^2 u') int_0^r omega rho^2 drho
    f12(r, t) = r beta int_r^inf exp(i (u(r) - u(rho)) t) f11(rho) / (rho u'(rho)) drho
    psi(r, t) = r int_r^inf (u(r) - u(rho)) exp(-i t u(rho)) f11(rho) / (rho u'(rho)) drho

The oscillatory integrals are done panel by panel, with each grid interval split
so that the phase t |Delta u| stays below pi/4 and 6-point Gauss-Legendre on each
piece.
"""
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import ModeField, origin_coefficient

PANEL_BUDGET = 2_000_000
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


class PanelBudgetError(RuntimeError):
    pass


@dataclass
class K1Profile:
    f11: ModeField
    t: float
    f12: ModeField

    @property
    def f(self):
        return self.f11 + self.f12


def _check_k1(field):
    if abs(field.k) != 1:
        raise ValueError("the closed form applies to |k| = 1 only")


def k1_f11(v, omega_in, ortho_tol=1e-8):
    """Time-independent part of the k = 1 profile.

    For r < 1/2 the expression is rewritten so that the O(r) parts cancel
    analytically: with B(r) = int_0^r beta s^3 ds = -r^3 u'(r) and
    w = omega - (omega_10/beta(0)) r beta,  f11 = w - r beta int_0^r w rho^2 / B.
    """
    _check_k1(omega_in)
    g = omega_in.grid
    r = g.nodes
    w = omega_in.values
    mom = g.integrate(w * r**2)
    scale = g.integrate(np.abs(w) * r**2)
    if abs(mom) > ortho_tol * max(scale, 1e-300):
        raise ValueError(
            f"initial data are not orthogonal to the neutral mode (int omega r^2 dr = {abs(mom):.3e}, "
            f"relative {abs(mom) / scale:.3e}); project with evolution.project_orthogonal first")
    if scale == 0.0:
        return omega_in.with_values(np.zeros(r.size))
    beta = v.beta(r)
    du = v.du(r)

    # direct form: the moment integral starts with omega ~ omega_0 (r/r_0) below r_0
    m2 = g.cumulative(w * r**2, initial=w[0] * r[0] ** 3 / 4.0)
    direct = w + beta / (r**2 * du) * m2

    w10 = origin_coefficient(omega_in, 1, rtol=1e-3)
    wt = w - (w10 / v.beta0) * r * beta
    # wt ~ r^3 and beta s^3 ~ s^3 below r_0
    m2t = g.cumulative(wt * r**2, initial=wt[0] * r[0] ** 3 / 6.0)
    B = g.cumulative(beta * r**3, initial=beta[0] * r[0] ** 4 / 4.0)
    series = wt - r * beta * m2t / B

    out = np.where(r < 0.5, series, direct)
    return omega_in.with_values(out)


def _panel_nodes(v, r, t, budget):
    """Subdivide each interval so that |t Delta u| <= pi/4; return quadrature nodes and weights."""
    u = v.u(r)
    dphase = np.abs(t) * np.abs(np.diff(u))
    m = np.maximum(1, np.ceil(dphase / (np.pi / 4))).astype(np.int64)
    total = int(m.sum())
    if total > budget:
        raise PanelBudgetError(
            f"oscillatory quadrature needs {total} panels (budget {budget}) at t = {t:g}; "
            "increase grid / reduce t")
    owner = np.repeat(np.arange(r.size - 1), m)
    start = np.concatenate([[0], np.cumsum(m)[:-1]])
    j = np.arange(total) - np.repeat(start, m)
    h = (r[1:] - r[:-1])[owner] / m[owner]
    a = r[:-1][owner] + j * h
    x = a[:, None] + 0.5 * h[:, None] * (_GL_X + 1.0)
    wq = 0.5 * h[:, None] * _GL_W
    return x.ravel(), wq.ravel(), np.repeat(owner, _GL_X.size)


def _tail_integrals(v, f11, t, moments, budget):
    """int_{r_i}^{r_N} u^m exp(-i t u) f11/(rho u') drho for each m in ``moments``."""
    r = f11.r
    g = f11.values / (r * v.du(r))
    lr = np.log(r)
    spl_re = CubicSpline(lr, g.real)
    spl_im = CubicSpline(lr, g.imag)
    x, wq, owner = _panel_nodes(v, r, t, budget)
    lx = np.log(x)
    gx = spl_re(lx) + 1j * spl_im(lx)
    ux = v.u(x)
    base = wq * gx * np.exp(-1j * t * ux)
    out = []
    for m in moments:
        contrib = base * ux**m if m else base
        per = np.bincount(owner, contrib.real, r.size - 1) + 1j * np.bincount(owner, contrib.imag, r.size - 1)
        I = np.zeros(r.size, complex)
        I[:-1] = np.cumsum(per[::-1])[::-1]
        out.append(I)
    return out


def k1_f12(v, f11, t, budget=PANEL_BUDGET):
    """Decaying part of the k = 1 profile at time t."""
    _check_k1(f11)
    r = f11.r
    if not np.any(f11.values):
        return f11.with_values(np.zeros(r.size))
    (I0,) = _tail_integrals(v, f11, t, (0,), budget)
    return f11.with_values(r * v.beta(r) * np.exp(1j * v.u(r) * t) * I0)


def k1_stream(v, f11, t, budget=PANEL_BUDGET):
    """Stream function psi_1(t) from the closed form."""
    _check_k1(f11)
    r = f11.r
    if not np.any(f11.values):
        return f11.with_values(np.zeros(r.size))
    I0, I1 = _tail_integrals(v, f11, t, (0, 1), budget)
    return f11.with_values(r * (v.u(r) * I0 - I1))


def k1_reconstruct_omega(v, f11, f12, t):
    """omega_1(t) = exp(-i u t) (f11 + f12(t))."""
    return f11.with_values(np.exp(-1j * v.u(f11.r) * t) * (f11.values + f12.values))


def k1_profile(v, omega_in, t, budget=PANEL_BUDGET):
    f11 = k1_f11(v, omega_in)
    return K1Profile(f11, float(t), k1_f12(v, f11, t, budget))


def k1_evolve(v, omega_in, t_out, budget=PANEL_BUDGET):
    """[(t, omega(t), psi(t))] from the closed form."""
    f11 = k1_f11(v, omega_in)
    out = []
    for t in t_out:
        f12 = k1_f12(v, f11, t, budget)
        out.append((float(t), k1_reconstruct_omega(v, f11, f12, t), k1_stream(v, f11, t, budget)))
    return out
