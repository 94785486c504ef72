"""Inversion of -Delta_k psi = omega on the half-line and velocity recovery.

Two independent engines: an O(N) cumulative form of the radial Green's function
and a finite-difference boundary value solve.  They are meant to cross-check.
"""
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels


def _check_k(k):
    if int(k) != k:
        raise ValueError("k must be an integer")
    if k == 0:
        raise ValueError("k = 0 is excluded: the radial mean is time independent, so only k != 0 is evolved")
    return abs(int(k))


def kernel(k, r, rho):
    """G_k(r, rho) = rho/(2k) min(rho/r, r/rho)^k, the Green's function of -Delta_k."""
    k = _check_k(k)
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    return rho / (2.0 * k) * np.minimum(rho / r, r / rho) ** k


class BiotSavartOperator:
    """Precomputed coefficients of the cumulative kernel sum for one (grid, k).

    psi_i = (A_i + B_i)/(2k) with A_i = r_i^-k int_0^r_i rho^(k+1) omega and
    B_i = r_i^k int_r_i^inf rho^(1-k) omega.  Both are advanced by ratio
    recursions so that no power r^k is ever formed (safe for large k).  Panels are
    4th-order cubic-Lagrange; below r_1 omega ~ omega_1 (r/r_1)^k is assumed and
    beyond r_N omega is zero.
    """

    def __init__(self, grid, k):
        self.k = _check_k(k)
        self.grid = grid
        r = grid.nodes
        k = self.k
        W, S = grid.panels
        lr = np.log(r)
        idx = S[:, None] + np.arange(4)
        rho = r[idx]
        lrho = lr[idx]
        # (rho_j / r_{i+1})^k rho_j and (r_i / rho_j)^k rho_j
        self.CA = np.ascontiguousarray(W * np.exp(k * (lrho - lr[1:, None])) * rho / (2.0 * k))
        self.CB = np.ascontiguousarray(W * np.exp(k * (lr[:-1, None] - lrho)) * rho / (2.0 * k))
        self.q = np.exp(k * (lr[:-1] - lr[1:]))
        self.S = S.astype(np.int64)
        self.a0 = r[0] ** 2 / (2.0 * k + 2.0) / (2.0 * k)

    def apply(self, omega_values, impl=None):
        impl = impl or _kernels.active
        w = np.ascontiguousarray(omega_values, dtype=complex)
        out = np.empty_like(w)
        impl.bs_apply(self.CA, self.CB, self.q, self.S, self.a0, w, out)
        return out


@lru_cache(maxsize=32)
def _operator(grid, k):
    return BiotSavartOperator(grid, k)


def get_operator(grid, k):
    return _operator(grid, abs(int(k)))


def solve_streamfunction_kernel(k, omega):
    """psi = int G_k(r, rho) omega(rho) d rho, O(N)."""
    _check_k(k)
    if omega.k != k and omega.k != -k:
        raise ValueError("mismatched k")
    op = get_operator(omega.grid, k)
    return omega.with_values(op.apply(omega.values))


def solve_streamfunction_kernel_dense(k, omega):
    """Reference O(N^2) product rule psi_i = sum_j G_k(r_i, r_j) omega_j w_j."""
    _check_k(k)
    r = omega.r
    G = kernel(k, r[:, None], r[None, :])
    return omega.with_values(G @ (omega.values * omega.grid.weights))


def solve_streamfunction_bvp(k, omega, bc="decay"):
    """Second-order finite differences for psi_xx - k^2 psi = -r^2 omega in x = log r.

    ``bc="decay"`` imposes psi_x = +k psi at r_min and psi_x = -k psi at r_max (the
    exact behaviour of the homogeneous solutions); ``bc="dirichlet"`` sets psi = 0
    at both ends.
    """
    k = _check_k(k)
    r = omega.r
    x = np.log(r)
    n = r.size
    hm = np.empty(n)
    hp = np.empty(n)
    hm[1:] = np.diff(x)
    hp[:-1] = np.diff(x)
    ab = np.zeros((3, n), dtype=complex)
    rhs = -(r**2) * omega.values
    inner = slice(1, n - 1)
    a_lo = 2.0 / (hm[inner] * (hm[inner] + hp[inner]))
    a_up = 2.0 / (hp[inner] * (hm[inner] + hp[inner]))
    ab[1, inner] = -a_lo - a_up - k * k
    ab[2, 0:n - 2] = a_lo  # sub-diagonal entry (i, i-1) stored at ab[2, i-1]
    ab[0, 2:n] = a_up  # super-diagonal entry (i, i+1) stored at ab[0, i+1]
    if bc == "dirichlet":
        ab[1, 0] = 1.0
        ab[1, -1] = 1.0
        ab[0, 1] = 0.0
        ab[2, -2] = 0.0
        rhs = rhs.astype(complex)
        rhs[0] = 0.0
        rhs[-1] = 0.0
    elif bc == "decay":
        # (psi_1 - psi_0)/h = k (psi_0 + psi_1)/2 at the left, -k at the right
        h0 = x[1] - x[0]
        ab[1, 0] = -1.0 / h0 - k / 2.0
        ab[0, 1] = 1.0 / h0 - k / 2.0
        h1 = x[-1] - x[-2]
        ab[2, -2] = -1.0 / h1 + k / 2.0
        ab[1, -1] = 1.0 / h1 + k / 2.0
        rhs = rhs.astype(complex)
        rhs[0] = 0.0
        rhs[-1] = 0.0
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    psi = solve_banded((1, 1), ab, rhs)
    return omega.with_values(psi)


def velocity_components(k, psi):
    """(u^r, u^theta) = (i k psi / r, -d psi/dr); the derivative is 4th-order."""
    k = int(k)
    if psi.k != k:
        raise ValueError("mismatched k")
    ur = 1j * k * psi.values / psi.r
    ut = -psi.grid.derivative(psi.values)
    return psi.with_values(ur), psi.with_values(ut)
