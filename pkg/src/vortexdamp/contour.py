"""Evolution through the resolvent at finite eps, and the f1/f2/fS/fE split.

With Phi(., z) solving Ray_z Phi = omega_in sqrt(r)/(u - z), the resolvent of
L = u - beta (-Delta_k)^-1 is (L - z)^-1 omega_in = (omega_in - beta Phi/sqrt(r))/(u - z),
so Stone's formula gives

    omega(t) = J omega_in - beta/(2 pi i sqrt(r)) int e^{-ikct} [Phi+/(u-c-i eps) - Phi-/(u-c+i eps)] dc
    J(t, r)  = (1/pi) int e^{-ikct} eps/((u-c)^2 + eps^2) dc

over c in [-R, u(0) + 1].  J is evaluated with the same c-quadrature as the
correction so that the t = 0 identity holds to quadrature accuracy rather than
to O(eps).  Each c node needs two Rayleigh solves; they run as one batched,
row-parallel tridiagonal sweep.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .cutoffs import chi
from .grid import ModeField, WeightSpec, weighted_norm
from .rayleigh import (EPS_FLOOR, bvp_bands, data_on, greens_apply, greens_data, rayleigh_potential,
                       refine_grid, spectral_point, y_decomposition)
from .vortex import critical_radii


class UnderResolvedPlan(ValueError):
    pass


@dataclass
class ContourPlan:
    """c-quadrature for the resolvent integral.

    Uniform midpoint cells of width dc on [0, u(0)] (endpoints excluded by half
    a cell), geometrically graded cells (ratio ``grading``) outward to -R_delta
    and u(0) + 1, capped so that no cell exceeds pi/(4 |k| t_max).
    """
    eps: float
    k: int
    u0: float
    t_max: float = 10.0
    alpha: float = 0.05
    R_delta: float = 1.0
    c_nodes: int | None = None
    grading: float = 1.1
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.eps < EPS_FLOOR:
            raise ValueError(f"eps below the floor {EPS_FLOOR:g}")
        self.k = abs(int(self.k))
        if self.k == 0:
            raise ValueError("k = 0 is excluded")
        dmax = np.pi / (4 * self.k * max(self.t_max, 1e-12))
        if self.c_nodes:
            n_in = int(self.c_nodes)
        else:
            n_in = int(np.ceil(self.u0 / min(self.eps / 2, dmax)))
        dc = self.u0 / n_in
        if dc > dmax * (1 + 1e-12):
            raise UnderResolvedPlan(f"c spacing {dc:.3g} exceeds pi/(4|k|t_max) = {dmax:.3g}; "
                                    f"use at least {int(np.ceil(self.u0 / dmax))} nodes on the spectrum")
        inner = np.linspace(0.0, self.u0, n_in + 1)
        left = self._graded(dc, self.R_delta, min(dmax, 0.25))
        right = self._graded(dc, 1.0, min(dmax, 0.25))
        edges = np.concatenate([-left[::-1], inner, self.u0 + right[1:]])
        edges = np.unique(np.concatenate([edges[edges < 0], inner, edges[edges > self.u0]]))
        self.nodes = 0.5 * (edges[1:] + edges[:-1])
        self.weights = np.diff(edges)
        self.dc = dc

    def _graded(self, h0, length, hmax):
        """Cell edges 0 < h0 < ... <= length with spacing growing by ``grading``."""
        e = [0.0]
        h = h0
        while e[-1] < length:
            h = min(h * self.grading, hmax)
            e.append(e[-1] + h)
        e = np.array(e)
        e[-1] = length
        return e

    @property
    def size(self):
        return self.nodes.size

    def check(self, t):
        """Refuse times the plan does not resolve."""
        need = np.pi / (4 * self.k * abs(t)) if t else np.inf
        if np.max(self.weights) > need * (1 + 1e-12):
            raise UnderResolvedPlan(f"plan resolves t <= {self.t_max:g}; t = {t:g} needs dc <= {need:.3g}")

    def chi_sigma(self, c):
        """1 on [-R/2, u0 + 1/2], 0 below -R and above u0 + 3/4."""
        c = np.asarray(c, float)
        R = self.R_delta
        xl = 0.5 + (-R / 2 - c) / (R / 2) * 0.25
        xr = 0.5 + (c - self.u0 - 0.5)
        return chi(np.maximum(xl, xr))

    def chi_I(self, r_c):
        """Cutoff to the region k^5 eps <= min(r_c^(2+a), r_c^-(2+a)); 0 where r_c is undefined."""
        T = (self.k**5 * self.eps) ** (1.0 / (2.0 + self.alpha))
        rc = np.asarray(r_c, float)
        ok = np.isfinite(rc)
        out = np.zeros(rc.shape)
        x = rc[ok]
        out[ok] = chi(x * T) * (1.0 - chi(x / T))
        return out

    def region_III_empty(self):
        T = (self.k**5 * self.eps) ** (1.0 / (2.0 + self.alpha))
        return 0.5 * T >= 0.75 / T

    def to_config(self):
        return {"eps": self.eps, "alpha": self.alpha, "c_nodes": int(self.size), "R_delta": self.R_delta,
                "t_max": self.t_max}


def make_plan(v, k, eps, t_max=10.0, alpha=0.05, R_delta=1.0, c_nodes=None):
    return ContourPlan(eps, k, v.u0, t_max, alpha, R_delta, c_nodes)


@dataclass(eq=False)
class ResolventSweep:
    """Phi(r, c +- i eps) on the base grid for every c node of a plan."""
    plan: ContourPlan
    omega_in: ModeField
    phi_plus: np.ndarray  # (n_c, N)
    phi_minus: np.ndarray
    meta: dict = field(default_factory=dict)


def _batch_solve(v, k, items, base, spline, omega_in, impl, chunk=96):
    """Solve the Rayleigh BVP for many spectral points; returns (n_items, N) on the base grid."""
    out = np.empty((len(items), base.n), complex)
    fallback = []
    ratios = np.empty(len(items))
    for s in range(0, len(items), chunk):
        block = items[s:s + chunk]
        grids = [refine_grid(base, v, sp) for sp in block]
        nmax = max(g.n for g, _, _ in grids)
        m = len(block)
        lo = np.zeros((m, nmax), complex)
        di = np.ones((m, nmax), complex)
        up = np.zeros((m, nmax), complex)
        rhs = np.zeros((m, nmax), complex)
        for j, (sp, (g, idx, _)) in enumerate(zip(block, grids)):
            r = g.nodes
            a, d, b = bvp_bands(r, k, rayleigh_potential(v, k, sp, r))
            f = data_on(omega_in, g, idx, spline) * np.sqrt(r) / (v.u(r) - sp.z)
            f[0] = f[-1] = 0
            sc = 1.0 / np.maximum(np.maximum(np.abs(a[0]), np.abs(d[0])), np.abs(b[0]))
            n = r.size
            lo[j, :n] = a[0] * sc
            di[j, :n] = d[0] * sc
            up[j, :n] = b[0] * sc
            rhs[j, :n] = f * sc
        sol = np.empty((m, nmax), complex)
        ratio = impl.thomas_batch(lo, di, up, rhs, sol)
        ratios[s:s + m] = ratio
        for j, (sp, (g, idx, _)) in enumerate(zip(block, grids)):
            if not (ratio[j] > 1e-12 and np.all(np.isfinite(sol[j, :g.n]))):
                gd = greens_data(v, k, sp, base)
                f = data_on(omega_in, g, idx, spline) * np.sqrt(g.nodes) / (v.u(g.nodes) - sp.z)
                out[s + j] = greens_apply(gd, f).values[idx]
                fallback.append(sp.c)
            else:
                out[s + j] = sol[j, idx]
    return out, fallback, ratios


def resolvent_sweep(v, k, omega_in, plan, impl=None):
    """Batched Rayleigh solves at c_j +- i eps for every node of the plan."""
    k = abs(int(k))
    if omega_in.k not in (k, -k):
        raise ValueError("mismatched k")
    impl = impl or _kernels.active
    base = omega_in.grid
    spline = CubicSpline(np.log(base.nodes), omega_in.values)
    items = [spectral_point(v, c, plan.eps, s) for s in (1, -1) for c in plan.nodes]
    sols, fallback, ratios = _batch_solve(v, k, items, base, spline, omega_in, impl)
    nc = plan.size
    meta = {"n_solves": len(items), "fallback_c": fallback, "min_pivot_ratio": float(np.min(ratios)),
            "engine": impl.name}
    return ResolventSweep(plan, omega_in, sols[:nc], sols[nc:], meta)


def _kernel_parts(v, k, r, plan, t):
    """Per-(c, r) factors shared by the evolution and the decomposition."""
    c = plan.nodes[:, None]
    du = v.u(r)[None, :] - c
    den = du**2 + plan.eps**2
    ph = np.exp(1j * k * (v.u(r)[None, :] - c) * t)  # e^{ik(u - c)t}
    w = plan.weights[:, None]
    return c, du, den, ph, w


def _jfactor(v, k, r, plan, t):
    """e^{ikut} J = (1/pi) sum_c w e^{ik(u-c)t} eps/((u-c)^2 + eps^2)."""
    _, du, den, ph, w = _kernel_parts(v, k, r, plan, t)
    return np.sum(w * ph * plan.eps / den, axis=0) / np.pi


def evolve_contour(v, k, omega_in, t, plan, sweep=None):
    """Finite-eps resolvent representation of omega_k(t)."""
    k = abs(int(k))
    plan.check(t)
    sweep = sweep or resolvent_sweep(v, k, omega_in, plan)
    r = omega_in.r
    _, du, den, ph, w = _kernel_parts(v, k, r, plan, t)
    eps = plan.eps
    br = (sweep.phi_plus * (du + 1j * eps) - sweep.phi_minus * (du - 1j * eps)) / den
    corr = np.sum(w * ph * br, axis=0)
    prof = _jfactor(v, k, r, plan, t) * omega_in.values - v.beta(r) / (2j * np.pi * np.sqrt(r)) * corr
    return omega_in.with_values(np.exp(-1j * k * v.u(r) * t) * prof)


@dataclass
class Decomposition:
    f1: ModeField
    f2: ModeField
    fS: ModeField
    fE: ModeField
    norms: dict
    meta: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.f1 + self.f2 + self.fS + self.fE


def decompose_f(v, k, omega_in, t, plan, sweep=None, delta=0.1):
    """Profile f = e^{iktu} omega split as f1 + f2 + fS + fE at the plan's eps.

    With Y = Phi - chi r^{k+1/2} omega_k0/beta(0), X = Y+ - Y-, A = Y+ + Y-:
      f1 = e^{ikut} J F/sqrt(r) - b [ int i eps E chi_I A/D + int (u-c) E chi_1 X/D ]
      f2 = -b int (u-c) E chi_2 X / D
      fS = -b int E [Y+/(u-c-i eps) - Y-/(u-c+i eps)] chi_sigma (1 - chi_I)
      fE = -b int E [...] (1 - chi_sigma)
    where b = beta/(2 pi i sqrt(r)), E = e^{ik(u-c)t}, D = (u-c)^2 + eps^2.
    The leading sign differs from the +b form because Phi here solves
    Ray_z Phi = +omega sqrt(r)/(u - z).
    """
    k = abs(int(k))
    if k < 2:
        raise ValueError("the f1/f2/fS/fE split is defined for |k| >= 2")
    plan.check(t)
    sweep = sweep or resolvent_sweep(v, k, omega_in, plan)
    r = omega_in.r
    w0, F, _ = y_decomposition(v, k, omega_in)
    h = chi(r) * r ** (k + 0.5) * w0 / v.beta0
    Yp = sweep.phi_plus - h
    Ym = sweep.phi_minus - h
    X = Yp - Ym
    A = Yp + Ym
    c, du, den, ph, w = _kernel_parts(v, k, r, plan, t)
    eps = plan.eps
    rc = critical_radii(v, plan.nodes)
    chiI = plan.chi_I(rc)[:, None]
    sig = plan.chi_sigma(plan.nodes)[:, None]
    has_rc = np.isfinite(rc)[:, None]
    rc_safe = np.where(np.isfinite(rc), rc, 1.0)[:, None]
    inner = np.where(has_rc, chi(r[None, :] / 2) * chi(r[None, :] / rc_safe), 0.0)
    chi2 = inner * chiI
    chi1 = chiI - chi2
    b = v.beta(r) / (2j * np.pi * np.sqrt(r))
    bracket = ((du * X) + 1j * eps * A) / den
    f1 = _jfactor(v, k, r, plan, t) * F.values / np.sqrt(r) - b * (
        np.sum(w * ph * 1j * eps * chiI * A / den, axis=0) + np.sum(w * ph * du * chi1 * X / den, axis=0))
    f2 = -b * np.sum(w * ph * du * chi2 * X / den, axis=0)
    fS = -b * np.sum(w * ph * bracket * sig * (1 - chiI), axis=0)
    fE = -b * np.sum(w * ph * bracket * (1 - sig), axis=0)
    fields = [omega_in.with_values(x) for x in (f1, f2, fS, fE)]
    spec = WeightSpec("f", delta)
    norms = {name: weighted_norm(fld, spec) for name, fld in zip(("f1", "f2", "fS", "fE"), fields)}
    meta = {"region_III_empty": bool(plan.region_III_empty()), "omega_k0": w0, "eps": eps, "t": t}
    if meta["region_III_empty"]:
        meta["warning"] = (f"chi_I vanishes identically for k = {k}, eps = {eps:g}: region III is empty and "
                           "f1, f2 carry only the F/sqrt(r) term")
    return Decomposition(*fields, norms, meta)
