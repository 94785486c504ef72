"""Hot loops with a numba path and a pure-numpy path.

Set VORTEXDAMP_DISABLE_NUMBA=1 (before import) to force the numpy path.  Both
paths are always importable as ``numba_impl`` / ``numpy_impl`` for benchmarking
and cross-checking; ``active`` is the one the package uses.
"""
import os
import types
import warnings

import numpy as np

DISABLED = os.environ.get("VORTEXDAMP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

# an old system TBB makes numba warn on first parallel call; it falls back to another layer
warnings.filterwarnings("ignore", message="The TBB threading layer requires TBB")

try:
    import numba
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED


# ---------------------------------------------------------------------------
# numpy implementations

def _recurrence_np(q, s, x0):
    """x[0] = x0, x[i+1] = q[i] x[i] + s[i] for 0 < q <= 1, overflow-safe by blocks."""
    n = s.size + 1
    x = np.empty(n, dtype=np.result_type(s, x0, complex))
    x[0] = x0
    lq = -np.log(q)
    cl = np.concatenate([[0.0], np.cumsum(lq)])
    i0 = 0
    while i0 < n - 1:
        i1 = int(np.searchsorted(cl, cl[i0] + 600.0, side="right")) - 1
        i1 = min(max(i1, i0 + 1), n - 1)
        # within the block P_j = exp(-(cl[j] - cl[i0]))
        logP = -(cl[i0:i1 + 1] - cl[i0])
        terms = s[i0:i1] * np.exp(-logP[1:])
        acc = np.concatenate([[0.0], np.cumsum(terms)])
        x[i0:i1 + 1] = np.exp(logP) * (x[i0] + acc)
        i0 = i1
    return x


def _bs_apply_np(CA, CB, q, S, a0, omega, out):
    idx = S[:, None] + np.arange(4)
    w = omega[idx]
    sA = np.sum(CA * w, axis=1)
    sB = np.sum(CB * w, axis=1)
    A = _recurrence_np(q, sA, a0 * omega[0])
    B = _recurrence_np(q[::-1], sB[::-1], 0.0)[::-1]
    out[:] = A + B
    return out


def _rk4_np(omega, a, b, CA, CB, q, S, a0, dt, nsteps, wb, wm, norms, moms, n0, growth):
    psi = np.empty_like(omega)

    def rhs(w):
        _bs_apply_np(CA, CB, q, S, a0, w, psi)
        return a * w + b * psi

    w = omega.copy()
    for j in range(nsteps):
        k1 = rhs(w)
        k2 = rhs(w + 0.5 * dt * k1)
        k3 = rhs(w + 0.5 * dt * k2)
        k4 = rhs(w + dt * k3)
        w = w + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        nb = np.sum(wb * np.abs(w) ** 2)
        norms[j] = nb
        moms[j] = np.sum(wm * w)
        tj = (j + 1) * dt
        if nb > n0 * growth ** (2.0 * max(tj, 1.0)):
            omega[:] = w
            return j
    omega[:] = w
    return -1


def _thomas_batch_np(lo, di, up, rhs, out):
    """Row-batched tridiagonal solves; returns the min |pivot| / max |diag| per row."""
    m, n = di.shape
    cp = np.empty((m, n), dtype=complex)
    dp = np.empty((m, n), dtype=complex)
    piv = di[:, 0].copy()
    minpiv = np.abs(piv)
    cp[:, 0] = up[:, 0] / piv
    dp[:, 0] = rhs[:, 0] / piv
    for i in range(1, n):
        piv = di[:, i] - lo[:, i] * cp[:, i - 1]
        minpiv = np.minimum(minpiv, np.abs(piv))
        cp[:, i] = up[:, i] / piv
        dp[:, i] = (rhs[:, i] - lo[:, i] * dp[:, i - 1]) / piv
    out[:, n - 1] = dp[:, n - 1]
    for i in range(n - 2, -1, -1):
        out[:, i] = dp[:, i] - cp[:, i] * out[:, i + 1]
    return minpiv / np.max(np.abs(di), axis=1)


numpy_impl = types.SimpleNamespace(
    recurrence=_recurrence_np, bs_apply=_bs_apply_np, rk4=_rk4_np, thomas_batch=_thomas_batch_np,
    name="numpy",
)


# ---------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(cache=True)
    def _bs_apply_nb(CA, CB, q, S, a0, omega, out):
        n = omega.shape[0]
        A = a0 * omega[0]
        out[0] = A
        for i in range(n - 1):
            s = 0j
            for m in range(4):
                s += CA[i, m] * omega[S[i] + m]
            A = q[i] * A + s
            out[i + 1] = A
        B = 0j
        for i in range(n - 2, -1, -1):
            s = 0j
            for m in range(4):
                s += CB[i, m] * omega[S[i] + m]
            B = q[i] * B + s
            out[i] += B
        return out

    @njit(cache=True)
    def _recurrence_nb(q, s, x0):
        n = s.shape[0] + 1
        x = np.empty(n, dtype=np.complex128)
        x[0] = x0
        for i in range(n - 1):
            x[i + 1] = q[i] * x[i] + s[i]
        return x

    @njit(cache=True)
    def _rhs_nb(w, out, psi, a, b, CA, CB, q, S, a0):
        _bs_apply_nb(CA, CB, q, S, a0, w, psi)
        for i in range(w.shape[0]):
            out[i] = a[i] * w[i] + b[i] * psi[i]

    @njit(cache=True)
    def _rk4_nb(omega, a, b, CA, CB, q, S, a0, dt, nsteps, wb, wm, norms, moms, n0, growth):
        n = omega.shape[0]
        psi = np.empty(n, dtype=np.complex128)
        k1 = np.empty(n, dtype=np.complex128)
        k2 = np.empty(n, dtype=np.complex128)
        k3 = np.empty(n, dtype=np.complex128)
        k4 = np.empty(n, dtype=np.complex128)
        tmp = np.empty(n, dtype=np.complex128)
        w = omega
        for j in range(nsteps):
            _rhs_nb(w, k1, psi, a, b, CA, CB, q, S, a0)
            for i in range(n):
                tmp[i] = w[i] + 0.5 * dt * k1[i]
            _rhs_nb(tmp, k2, psi, a, b, CA, CB, q, S, a0)
            for i in range(n):
                tmp[i] = w[i] + 0.5 * dt * k2[i]
            _rhs_nb(tmp, k3, psi, a, b, CA, CB, q, S, a0)
            for i in range(n):
                tmp[i] = w[i] + dt * k3[i]
            _rhs_nb(tmp, k4, psi, a, b, CA, CB, q, S, a0)
            nb = 0.0
            mom = 0j
            for i in range(n):
                w[i] = w[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                nb += wb[i] * (w[i].real ** 2 + w[i].imag ** 2)
                mom += wm[i] * w[i]
            norms[j] = nb
            moms[j] = mom
            tj = (j + 1) * dt
            if nb > n0 * growth ** (2.0 * max(tj, 1.0)):
                return j
        return -1

    @njit(cache=True, parallel=True)
    def _thomas_batch_nb(lo, di, up, rhs, out):
        m, n = di.shape
        ratio = np.empty(m)
        for row in prange(m):
            cp = np.empty(n, dtype=np.complex128)
            dp = np.empty(n, dtype=np.complex128)
            piv = di[row, 0]
            minpiv = abs(piv)
            dmax = 0.0
            for i in range(n):
                dmax = max(dmax, abs(di[row, i]))
            cp[0] = up[row, 0] / piv
            dp[0] = rhs[row, 0] / piv
            for i in range(1, n):
                piv = di[row, i] - lo[row, i] * cp[i - 1]
                minpiv = min(minpiv, abs(piv))
                cp[i] = up[row, i] / piv
                dp[i] = (rhs[row, i] - lo[row, i] * dp[i - 1]) / piv
            out[row, n - 1] = dp[n - 1]
            for i in range(n - 2, -1, -1):
                out[row, i] = dp[i] - cp[i] * out[row, i + 1]
            ratio[row] = minpiv / dmax
        return ratio

    numba_impl = types.SimpleNamespace(
        recurrence=_recurrence_nb, bs_apply=_bs_apply_nb, rk4=_rk4_nb, thomas_batch=_thomas_batch_nb,
        name="numba",
    )
else:  # pragma: no cover
    numba_impl = None

active = numba_impl if USE_NUMBA else numpy_impl


def set_threads(n):
    """Limit the numba thread pool (no-op on the numpy path)."""
    if USE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
