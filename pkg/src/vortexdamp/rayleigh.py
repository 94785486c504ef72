"""Rayleigh problems at z = c +- i eps.

Ray_z = d^2/dr^2 + (1/4 - k^2)/r^2 + beta/(u - z) acts on sqrt(r)-conjugated
stream functions.  This module builds the homogeneous solution through the
fixed point P~ = 1 + T_z[P~], the reduction-of-order pair H_0, H_inf with their
Wronskian M, the Green's function, and two independent inhomogeneous solvers
(Green's function quadrature and a banded finite-difference solve).

All solves run on a copy of the base grid refined around the critical radius,
where beta/(u - z) has a spike of height 1/eps and width eps/|u'(r_c)|.
Results are returned on the base grid.
"""
import csv
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from . import _kernels
from .cutoffs import chi
from .grid import ModeField, RadialGrid, origin_coefficient
from .vortex import OutOfSpectrumError

EPS_FLOOR = 1e-5
COND_LIMIT = 1e12


class NearEigenvalueWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SpectralPoint:
    c: float
    eps: float
    sign: int = 1
    r_c: float | None = None

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    @property
    def z(self):
        return complex(self.c, self.sign * self.eps)


def spectral_point(v, c, eps, sign=1):
    """SpectralPoint with r_c filled in when c lies inside (0, u(0))."""
    try:
        rc = float(v.critical_radius(c))
    except OutOfSpectrumError:
        rc = None
    return SpectralPoint(float(c), float(eps), int(sign), rc)


def _require_eps(sp):
    if sp.eps <= 0:
        raise ValueError("eps = 0 is not supported: resolvent solves need eps > 0")
    if sp.eps < EPS_FLOOR:
        raise ValueError(f"eps = {sp.eps:g} is below the floor {EPS_FLOOR:g}; the critical layer "
                         "cannot be resolved on the default grid")


def refine_grid(grid, v, sp, per_width=20.0):
    """Base grid plus nodes clustered at the critical radius.

    Returns (refined grid, indices of the base nodes, index of r_c or None).
    The target spacing is w/per_width inside |r - r_c| < w = eps/|u'(r_c)| and
    grows linearly (5% per node) away from the layer.
    """
    base = grid.nodes
    rc = sp.r_c
    if rc is None or not (base[0] < rc < base[-1]) or sp.eps <= 0:
        return grid, np.arange(base.size), None
    j = np.searchsorted(base, rc)
    if min(abs(base[j] - rc), abs(base[j - 1] - rc)) < 1e-13 * rc:
        nodes0 = base.copy()
        rc = base[j] if abs(base[j] - rc) < abs(base[j - 1] - rc) else base[j - 1]
    else:
        nodes0 = np.insert(base, j, rc)
    w = sp.eps / abs(float(v.du(np.array([rc]))[0]))
    a, b = nodes0[:-1], nodes0[1:]
    d = np.maximum(np.maximum(a - rc, rc - b), 0.0)
    h_t = (w / per_width) * np.maximum(1.0, d / w)
    m = np.maximum(1, np.ceil((b - a) / h_t)).astype(np.int64)
    owner = np.repeat(np.arange(a.size), m)
    start = np.concatenate([[0], np.cumsum(m)[:-1]])
    jj = np.arange(int(m.sum())) - np.repeat(start, m)
    nodes = np.concatenate([a[owner] + jj * (b - a)[owner] / m[owner], [nodes0[-1]]])
    fine = RadialGrid(nodes, grid.law + "+layer")
    idx = np.searchsorted(nodes, base)
    ic = int(np.searchsorted(nodes, rc))
    return fine, idx, ic


class HomogeneousResult(tuple):
    """(phi, Ptilde) with the derivative and iteration record attached."""

    def __new__(cls, phi, Ptilde, dphi, ic, history):
        obj = super().__new__(cls, (phi, Ptilde))
        obj.dphi = dphi
        obj.ic = ic
        obj.history = history
        return obj


def contraction_weight(r, r_c, A):
    """w~(r) = (A+1)/(2A) (r/r_c)^(A-1) + (A-1)/(2A) (r/r_c)^(-A-1); w~ >= 1 with minimum at r_c."""
    x = np.asarray(r) / r_c
    return (A + 1) / (2 * A) * x ** (A - 1) + (A - 1) / (2 * A) * x ** (-A - 1)


def _from_ref(grid, f, ic):
    """int_{r_i}^{r_ref} f for every node, accumulated outward from r_ref.

    Summing away from the reference node matters: P~ grows like r^-(k+1) toward
    the origin, and a cumulative sum started at r_1 would cancel catastrophically.
    """
    p = grid.panel_integrals(f)
    out = np.zeros(grid.n, dtype=p.dtype)
    out[:ic] = np.cumsum(p[:ic][::-1])[::-1]
    out[ic + 1:] = -np.cumsum(p[ic:])
    return out


def homogeneous_phi(v, k, sp, grid, tol=1e-10, maxiter=200, refine=True):
    """phi = (r/r_c)^{3/2} (u - z) P~ with P~ = 1 + T_z[P~], P~(r_c) = 1, P~'(r_c) = 0.

    T_z[P](r) = (k^2 - 1) int_r^{r_c} rho^-3 (u - z)^-2 int_rho^{r_c} s (u - z)^2 P ds drho,
    iterated until the change in the sup norm weighted by contraction_weight is
    below ``tol`` (the map contracts in that norm with factor (k^2-1)/(A^2-1)).  When c is
    outside the spectrum the node nearest r = 1 plays the role of r_c.
    A numeric ``refine`` is the per_width of refine_grid.
    """
    k = abs(int(k))
    if k < 1:
        raise ValueError("k must be nonzero")
    _require_eps(sp)
    if refine:
        grid, _, ic = refine_grid(grid, v, sp, 20.0 if refine is True else float(refine))
    else:
        ic = None
    r = grid.nodes
    if ic is None:
        ic = int(np.argmin(np.abs(np.log(r))))
    r_ref = r[ic]
    uz = v.u(r) - sp.z
    uz2 = uz * uz
    P = np.ones(r.size, complex)
    J = np.zeros(r.size, complex)
    history = []
    wt = contraction_weight(r, r_ref, k + 0.5)
    if k > 1:
        c2 = k * k - 1.0
        for it in range(maxiter):
            J = _from_ref(grid, r * uz2 * P, ic)
            Pn = 1.0 + c2 * _from_ref(grid, J / (r**3 * uz2), ic)
            change = float(np.max(np.abs(Pn - P) / wt))
            history.append(change)
            P = Pn
            if change <= tol:
                break
        else:
            raise RuntimeError(f"P~ fixed point did not converge in {maxiter} iterations "
                               f"(last change {history[-1]:.2e})")
        J = _from_ref(grid, r * uz2 * P, ic)
    dP = -(k * k - 1.0) * J / (r**3 * uz2)
    q = (r / r_ref) ** 1.5
    phi = q * uz * P
    du = v.du(r)
    dphi = q * (1.5 / r * uz * P + du * P + uz * dP)
    return HomogeneousResult(ModeField(k, phi, grid), ModeField(k, P, grid), dphi, ic, history)


@dataclass(eq=False)
class GreensData:
    phi_hom: ModeField
    H0: ModeField
    Hinf: ModeField
    M: complex
    sp: SpectralPoint = None
    dphi: np.ndarray = None
    I0: np.ndarray = None
    Iinf: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.phi_hom.grid

    def wronskian(self, which="fd"):
        """H0 H_inf' - H_inf H0' at every node.

        ``analytic`` uses phi' from the integral representation; ``fd`` uses
        4th-order finite differences of H0 and H_inf themselves.
        """
        H0, Hi = self.H0.values, self.Hinf.values
        if which == "analytic":
            phi = self.phi_hom.values
            d0 = -self.dphi * self.I0 - 1.0 / phi
            di = self.dphi * self.Iinf - 1.0 / phi
        else:
            d0 = self.grid.derivative(H0)
            di = self.grid.derivative(Hi)
        return H0 * di - Hi * d0


def _edge_slope(r, f, end):
    i, j = (0, 1) if end == 0 else (-2, -1)
    return float(np.log(abs(f[j]) / abs(f[i])) / np.log(r[j] / r[i]))


def build_H0_Hinf_M(v, k, sp, phi, dphi=None, truncate=None):
    """H0 = -phi int_0^r phi^-2,  H_inf = phi int_r^inf phi^-2,  M = int_0^inf phi^-2.

    ``phi`` lives on the (refined) grid returned by homogeneous_phi.  Integrals
    beyond the grid ends use the local power law of phi when it makes phi^-2
    integrable.  For k = 1, phi^-2 ~ r^-3 at the origin and the lower limit is
    the first grid node (``truncate`` defaults to True there), which imposes
    H0(r_min) = 0.
    """
    k = abs(int(k))
    _require_eps(sp)
    if isinstance(phi, HomogeneousResult):
        dphi = phi.dphi if dphi is None else dphi
        phi = phi[0]
    grid = phi.grid
    r = grid.nodes
    p = phi.values
    inv2 = 1.0 / (p * p)
    truncate = (k == 1) if truncate is None else truncate
    s0 = _edge_slope(r, p, 0)
    sN = _edge_slope(r, p, 1)
    tail0 = 0.0 if truncate or s0 >= 0.5 else inv2[0] * r[0] / (1.0 - 2.0 * s0)
    tailN = inv2[-1] * r[-1] / (2.0 * sN - 1.0) if sN > 0.5 else 0.0
    I0 = grid.cumulative(inv2, initial=tail0)
    Iinf = grid.cumulative_right(inv2, tail=tailN)
    M = complex(I0[-1] + tailN)
    H0 = -p * I0
    Hi = p * Iinf
    meta = {"M": M, "tail0": complex(tail0), "tailN": complex(tailN), "truncated_origin": bool(truncate),
            "slopes_phi": (s0, sN)}
    if abs(M) < 1e-14:
        warnings.warn(f"|M| = {abs(M):.2e} at z = {sp.z}: near-eigenvalue, results unreliable",
                      NearEigenvalueWarning)
    gd = GreensData(phi, ModeField(k, H0, grid), ModeField(k, Hi, grid), M, sp, dphi, I0, Iinf, meta)
    if dphi is not None:
        W = gd.wronskian("analytic")
        meta["wronskian_spread_analytic"] = float(np.max(np.abs(W - M)) / abs(M))
    return gd


def greens_data(v, k, sp, grid, refine=True):
    """homogeneous_phi followed by build_H0_Hinf_M (``refine`` as in homogeneous_phi)."""
    hom = homogeneous_phi(v, k, sp, grid, refine=refine)
    gd = build_H0_Hinf_M(v, k, sp, hom[0], dphi=hom.dphi)
    gd.meta["iterations"] = len(hom.history)
    gd.meta["contraction_history"] = hom.history
    gd.meta["ic"] = hom.ic
    return gd


def greens_apply(gd, rhs):
    """Phi(r) = (1/M) [H_inf(r) int_0^r H0 rhs + H0(r) int_r^inf H_inf rhs], O(N)."""
    g = gd.grid
    vals = rhs.values if isinstance(rhs, ModeField) else np.asarray(rhs, complex)
    H0, Hi = gd.H0.values, gd.Hinf.values
    left = g.cumulative(H0 * vals)
    right = g.cumulative_right(Hi * vals)
    out = (Hi * left + H0 * right) / gd.M
    return ModeField(gd.H0.k, out, g)


def greens_matrix(gd):
    """Dense G(r_i, r_j) (for checks only)."""
    H0, Hi = gd.H0.values, gd.Hinf.values
    i = np.arange(H0.size)
    lo = np.minimum(i[:, None], i[None, :])
    hi = np.maximum(i[:, None], i[None, :])
    return H0[lo] * Hi[hi] / gd.M


def k1_greens_apply(gd, rhs):
    """k = 1 Green's function -phi(r_<) H_inf(r_>) / W with W = phi H_inf' - phi' H_inf.

    With H_inf = phi int_r^inf phi^-2 the Wronskian is exactly -1.
    """
    g = gd.grid
    vals = rhs.values if isinstance(rhs, ModeField) else np.asarray(rhs, complex)
    phi, Hi = gd.phi_hom.values, gd.Hinf.values
    left = g.cumulative(phi * vals)
    right = g.cumulative_right(Hi * vals)
    return ModeField(gd.H0.k, -(Hi * left + phi * right), g)


def rayleigh_potential(v, k, sp, r):
    """(1/4 - k^2)/r^2 + beta/(u - z)."""
    return (0.25 - k * k) / r**2 + v.beta(r) / (v.u(r) - sp.z)


def apply_rayleigh(v, k, sp, field):
    """Ray_z applied with 4th-order finite differences."""
    r = field.r
    return field.with_values(field.grid.derivative(field.values, 2) + rayleigh_potential(v, k, sp, r) * field.values)


def rayleigh_residual(v, k, sp, Phi, rhs, trim=3):
    """||Ray_z Phi - rhs|| / ||rhs|| over the interior (L^2 with grid weights)."""
    res = apply_rayleigh(v, k, sp, Phi).values - rhs
    w = Phi.grid.weights.copy()
    w[:trim] = 0
    w[-trim:] = 0
    den = np.sqrt(np.sum(w * np.abs(rhs) ** 2))
    num = np.sqrt(np.sum(w * np.abs(res) ** 2))
    return float(num / den) if den > 0 else float(num)


def bvp_bands(r, k, pot):
    """Tridiagonal (lo, di, up) for d^2/dr^2 + pot with decay conditions.

    Rows 0 and n-1 impose Phi' = (k + 1/2) Phi/r and Phi' = (1/2 - k) Phi/r at
    the midpoints of the end intervals.  ``pot`` may be 2-D (batched rows).
    """
    pot = np.atleast_2d(pot)
    m, n = pot.shape
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    lo = np.zeros((m, n), complex)
    up = np.zeros((m, n), complex)
    di = np.zeros((m, n), complex)
    lo[:, 1:-1] = 2.0 / (hm * (hm + hp))
    up[:, 1:-1] = 2.0 / (hp * (hm + hp))
    di[:, 1:-1] = -2.0 / (hm * hp) + pot[:, 1:-1]
    h0 = r[1] - r[0]
    kap = (k + 0.5) / (0.5 * (r[0] + r[1]))
    di[:, 0] = -1.0 / h0 - kap / 2
    up[:, 0] = 1.0 / h0 - kap / 2
    h1 = r[-1] - r[-2]
    kap = (0.5 - k) / (0.5 * (r[-1] + r[-2]))
    lo[:, -1] = -1.0 / h1 - kap / 2
    di[:, -1] = 1.0 / h1 - kap / 2
    return lo, di, up


def _solve_bvp(v, k, sp, grid, rhs):
    r = grid.nodes
    lo, di, up = bvp_bands(r, k, rayleigh_potential(v, k, sp, r))
    b = np.array(rhs, complex)
    b[0] = 0
    b[-1] = 0
    ab = np.zeros((3, r.size), complex)
    ab[0, 1:] = up[0, :-1]
    ab[1] = di[0]
    ab[2, :-1] = lo[0, 1:]
    # cheap conditioning estimate: smallest pivot of the row-equilibrated system
    out = np.empty((1, r.size), complex)
    s = 1.0 / np.maximum(np.maximum(np.abs(lo), np.abs(di)), np.abs(up))
    ratio = _kernels.numpy_impl.thomas_batch(lo * s, di * s, up * s, b[None, :] * s, out)[0]
    cond = 1.0 / ratio if ratio > 0 else np.inf
    sol = solve_banded((1, 1), ab, b)
    return sol, cond


@dataclass(eq=False)
class RayleighSolution:
    Phi: ModeField
    Y: ModeField
    meta: dict = field(default_factory=dict)
    fine: ModeField = None


def data_on(omega_in, fine, idx, spline=None):
    """omega_in on a refined grid: a cubic spline in log r between base nodes, exact at them."""
    r = fine.nodes
    w = np.array(omega_in.values)
    if r.size != omega_in.grid.n:
        if spline is None:
            spline = CubicSpline(np.log(omega_in.r), w)
        w = spline(np.log(r))
        w[idx] = omega_in.values
    return w


def _rhs_fine(v, sp, omega_in, fine, idx, spline=None):
    """omega sqrt(r)/(u - z) on the refined grid."""
    r = fine.nodes
    return data_on(omega_in, fine, idx, spline) * np.sqrt(r) / (v.u(r) - sp.z)


def solve_inhomogeneous(v, k, sp, omega_in, path="greens", gd=None):
    """Solve Ray_z Phi = omega sqrt(r)/(u - z) with Phi -> 0 at both ends.

    path "greens": Green's function quadrature; "bvp": second-order finite
    differences with decay conditions, falling back to "greens" (with a warning)
    when the pivot-based condition estimate exceeds 1e12.
    """
    k = abs(int(k))
    _require_eps(sp)
    if path not in ("greens", "bvp"):
        raise ValueError(f"unknown path {path!r}")
    base = omega_in.grid
    fine, idx, ic = refine_grid(base, v, sp)
    rhs = _rhs_fine(v, sp, omega_in, fine, idx)
    meta = {"path": path, "n_fine": int(fine.n), "z": sp.z}
    if not np.any(omega_in.values):
        zero = ModeField(k, np.zeros(fine.n), fine)
        Phi = ModeField(k, np.zeros(base.n), base)
        meta["residual"] = 0.0
        return RayleighSolution(Phi, Phi, meta, zero)
    if path == "bvp":
        sol, cond = _solve_bvp(v, k, sp, fine, rhs)
        meta["cond_estimate"] = float(cond)
        if cond > COND_LIMIT or not np.all(np.isfinite(sol)):
            warnings.warn(f"Rayleigh BVP ill-conditioned (estimate {cond:.2e}); using the Green's function path")
            path = "greens"
            meta["path"] = "greens"
            meta["fallback"] = True
    if path == "greens":
        if gd is None or gd.grid.n != fine.n:
            gd = greens_data(v, k, sp, base)
        sol = greens_apply(gd, rhs).values
        meta["M"] = gd.M
    Phi_f = ModeField(k, sol, fine)
    meta["residual"] = rayleigh_residual(v, k, sp, Phi_f, rhs)
    Phi = ModeField(k, sol[idx], base)
    w0, _, _ = y_decomposition(v, k, omega_in)
    Y = Phi.with_values(Phi.values - chi(base.nodes) * base.nodes ** (k + 0.5) * w0 / v.beta0)
    return RayleighSolution(Phi, Y, meta, Phi_f)


def y_decomposition(v, k, omega_in):
    """(omega_k0, F, F_star) for the depletion decomposition.

    omega_k0 = lim omega/r^k (Richardson over the three innermost nodes),
    F = omega sqrt(r) - (beta/beta(0)) chi r^{k+1/2} omega_k0 and
    F_star = -((2k+1) chi' r^{k-1/2} + chi'' r^{k+1/2}) omega_k0 / beta(0).
    """
    k = abs(int(k))
    r = omega_in.r
    try:
        w0 = origin_coefficient(omega_in, k)
    except ValueError as exc:
        raise ValueError(f"origin extrapolation failed: {exc}; omega must behave like "
                         "r^k (a0 + a1 r^2 + ...) near r = 0") from None
    b0 = v.beta0
    F = omega_in.values * np.sqrt(r) - v.beta(r) / b0 * chi(r) * r ** (k + 0.5) * w0
    Fs = -((2 * k + 1) * chi(r, 1) * r ** (k - 0.5) + chi(r, 2) * r ** (k + 0.5)) * w0 / b0
    return w0, omega_in.with_values(F), omega_in.with_values(Fs)


def dump_spectral_point(gd, directory, residuals=None, name=None):
    """CSV (r, Re/Im of phi, H0, H_inf) and JSON (M, residuals) for one spectral point."""
    os.makedirs(directory, exist_ok=True)
    sp = gd.sp
    name = name or f"k{gd.H0.k}_c{sp.c:.6g}_e{sp.eps:.3g}_{'p' if sp.sign > 0 else 'm'}"
    with open(os.path.join(directory, name + ".csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "phi_re", "phi_im", "H0_re", "H0_im", "Hinf_re", "Hinf_im"])
        for row in zip(gd.grid.nodes, gd.phi_hom.values, gd.H0.values, gd.Hinf.values):
            wr.writerow([repr(float(row[0]))] + [repr(float(x)) for c in row[1:] for x in (c.real, c.imag)])
    info = {"c": sp.c, "eps": sp.eps, "sign": sp.sign, "r_c": sp.r_c, "M": [gd.M.real, gd.M.imag],
            "residuals": residuals or {}, "meta": {k: v for k, v in gd.meta.items() if k != "contraction_history"}}
    with open(os.path.join(directory, name + ".json"), "w") as fh:
        json.dump(info, fh, indent=2, default=str)
    return name
