import json

import numpy as np
import pytest
from scipy.integrate import quad

from vortexdamp import rayleigh
from vortexdamp.diagnostics import fit_log_slope
from vortexdamp.grid import ModeField, make_grid
from vortexdamp.rayleigh import (apply_rayleigh, build_H0_Hinf_M, dump_spectral_point, greens_apply, greens_data,
                                 greens_matrix, homogeneous_phi, k1_greens_apply, refine_grid, solve_inhomogeneous,
                                 spectral_point, y_decomposition)

from conftest import bump


def u_at(v, r):
    return float(v.u(np.array([r]))[0])


def rel(a, b, w=None):
    w = np.ones(a.size) if w is None else w
    return float(np.sqrt(np.sum(w * np.abs(a - b) ** 2) / np.sum(w * np.abs(b) ** 2)))


def test_eps_guards(vortex, grid):
    with pytest.raises(ValueError, match="eps = 0"):
        homogeneous_phi(vortex, 2, spectral_point(vortex, 0.2, 0.0), grid)
    with pytest.raises(ValueError, match="floor"):
        homogeneous_phi(vortex, 2, spectral_point(vortex, 0.2, 1e-7), grid)


def test_refined_grid_resolves_layer(vortex, grid):
    sp = spectral_point(vortex, u_at(vortex, 1.0), 1e-3)
    fine, idx, ic = refine_grid(grid, vortex, sp)
    assert np.array_equal(fine.nodes[idx], grid.nodes)
    assert abs(fine.nodes[ic] - 1.0) < 1e-12
    r = fine.nodes
    assert np.count_nonzero(np.abs(vortex.u(r) - sp.c) <= sp.eps) >= 16


@pytest.mark.parametrize("sign", [1, -1])
def test_k1_homogeneous_is_exact(vortex, grid, sign):
    sp = spectral_point(vortex, u_at(vortex, 1.3), 1e-2, sign)
    phi, P = homogeneous_phi(vortex, 1, sp, grid)
    r = phi.r
    exact = (r / sp.r_c) ** 1.5 * (vortex.u(r) - sp.z)
    assert np.max(np.abs(phi.values - exact) / np.abs(exact)) <= 1e-12
    assert np.all(P.values == 1)


@pytest.mark.parametrize("k", [2, 3])
def test_ptilde_normalization_and_residual(vortex, grid, k):
    sp = spectral_point(vortex, u_at(vortex, 1.0), 1e-2)
    hom = homogeneous_phi(vortex, k, sp, grid)
    phi, P = hom
    fine = phi.grid
    assert abs(P.values[hom.ic] - 1) < 1e-14
    dP = fine.derivative(P.values)
    assert abs(dP[hom.ic]) < 1e-6 * np.max(np.abs(dP))
    res = apply_rayleigh(vortex, k, sp, phi).values
    # interior, relative to the size of the individual terms
    scale = np.abs(fine.derivative(phi.values, 2))
    w = fine.weights.copy()
    w[:3] = w[-3:] = 0
    assert np.sqrt(np.sum(w * np.abs(res) ** 2) / np.sum(w * scale**2)) <= 1e-6


@pytest.mark.parametrize("k", [2, 3])
def test_contraction_rate(vortex, grid, k):
    sp = spectral_point(vortex, u_at(vortex, 0.8), 1e-3)
    hist = np.array(homogeneous_phi(vortex, k, sp, grid).history)
    A = k + 0.5
    bound = (k * k - 1) / (A * A - 1) + 0.1
    ratios = hist[1:] / hist[:-1]
    assert np.all(ratios[hist[1:] > 1e-13] <= bound)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_wronskian_constant(vortex, grid, k):
    sp = spectral_point(vortex, u_at(vortex, 1.0), 1e-3)
    gd = greens_data(vortex, k, sp, grid)
    W = gd.wronskian("fd")
    rng = np.random.default_rng(k)
    pts = rng.choice(np.arange(10, gd.grid.n - 10), 10, replace=False)
    # k = 1: phi^-2 ~ r^-3 makes H0 steep near r_min and the 4th-order differences lose a digit
    tol = 1e-6 if k > 1 else 1e-5
    assert np.max(np.abs(W[pts] - gd.M)) / abs(gd.M) <= tol
    assert gd.meta["wronskian_spread_analytic"] <= 1e-6


def test_k1_wronskian_against_quadrature(vortex, grid):
    sp = spectral_point(vortex, u_at(vortex, 1.0), 1e-2)
    gd = greens_data(vortex, 1, sp, grid)
    rc, z = sp.r_c, sp.z

    def f(s, part):
        val = 1.0 / ((s / rc) ** 3 * (u_at(vortex, s) - z) ** 2)
        return val.real if part == 0 else val.imag

    # k = 1: M is the integral over the grid span (phi^-2 ~ r^-3 is not integrable at 0)
    oracle = sum(quad(f, a, b, args=(p,), limit=400, epsabs=0, epsrel=1e-12)[0] * (1j if p else 1)
                 for p in (0, 1) for a, b in ((grid.nodes[0], rc), (rc, grid.nodes[-1])))
    assert abs(gd.M - oracle) / abs(oracle) <= 1e-6


@pytest.mark.parametrize("k", [2, 3])
def test_wronskian_nonvanishing(vortex, grid, k):
    cs = np.linspace(0.01, 0.24, 64)
    for c in cs:
        for s in (1, -1):
            gd = greens_data(vortex, k, spectral_point(vortex, c, 1e-3, s), grid)
            assert np.isfinite(gd.M) and abs(gd.M) > 1e-8


def test_boundary_asymptotics(vortex, grid):
    k = 2
    sp = spectral_point(vortex, u_at(vortex, 1.0), 1e-2)
    gd = greens_data(vortex, k, sp, grid)
    r = gd.grid.nodes
    assert abs(fit_log_slope(r, np.abs(gd.H0.values), (1e-4, 1e-3))[0] - (k + 0.5)) < 0.2
    assert abs(fit_log_slope(r, np.abs(gd.Hinf.values), (10, 40))[0] - (0.5 - k)) < 0.2


def test_greens_symmetry_and_zero(vortex):
    g = make_grid(1e-3, 30, 300)
    gd = greens_data(vortex, 2, spectral_point(vortex, 0.15, 1e-2), g)
    G = greens_matrix(gd)
    assert np.allclose(G, G.T, rtol=1e-14, atol=0)
    assert not np.any(greens_apply(gd, np.zeros(gd.grid.n)).values)


@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_greens_inverts_rayleigh(vortex, grid, eps):
    sp = spectral_point(vortex, u_at(vortex, 1.0), eps)
    sol = solve_inhomogeneous(vortex, 2, sp, bump(grid, 2), "greens")
    assert sol.meta["residual"] <= 1e-3


def test_zero_data(vortex, grid):
    sp = spectral_point(vortex, 0.2, 1e-2)
    for path in ("greens", "bvp"):
        sol = solve_inhomogeneous(vortex, 2, sp, ModeField(2, np.zeros(grid.n), grid), path)
        assert not np.any(sol.Phi.values)


@pytest.mark.parametrize("k", [2, 3])
def test_dual_path(vortex, grid, k):
    sp = spectral_point(vortex, u_at(vortex, 1.0), 1e-2)
    w = bump(grid, k)
    a = solve_inhomogeneous(vortex, k, sp, w, "greens")
    b = solve_inhomogeneous(vortex, k, sp, w, "bvp")
    assert b.meta["path"] == "bvp"
    assert rel(b.Phi.values, a.Phi.values, grid.weights) <= 1e-3
    assert a.meta["residual"] <= 1e-3 and b.meta["residual"] <= 1e-3


def test_k1_green_function(vortex, grid):
    from vortexdamp.evolution import project_orthogonal
    sp = spectral_point(vortex, u_at(vortex, 1.0), 1e-2)
    w = project_orthogonal(vortex, bump(grid, 1))
    gd = greens_data(vortex, 1, sp, grid)
    fine, idx, _ = refine_grid(grid, vortex, sp)
    rhs = rayleigh._rhs_fine(vortex, sp, w, fine, idx)
    explicit = k1_greens_apply(gd, rhs).values[idx]
    for path in ("greens", "bvp"):
        sol = solve_inhomogeneous(vortex, 1, sp, w, path, gd=gd if path == "greens" else None)
        assert rel(sol.Phi.values, explicit, grid.weights) <= 1e-3


def test_bvp_falls_back_when_ill_conditioned(vortex, grid, monkeypatch):
    monkeypatch.setattr(rayleigh, "COND_LIMIT", 1.0)
    sp = spectral_point(vortex, 0.2, 1e-2)
    with pytest.warns(UserWarning, match="ill-conditioned"):
        sol = solve_inhomogeneous(vortex, 2, sp, bump(grid, 2), "bvp")
    assert sol.meta["path"] == "greens" and sol.meta["fallback"]


def test_eps_stability_away_from_layer(vortex, grid):
    c = u_at(vortex, 1.0)
    w = bump(grid, 2)
    sols = [solve_inhomogeneous(vortex, 2, spectral_point(vortex, c, e), w).Phi.values for e in (4e-3, 2e-3, 1e-3,
                                                                                                   5e-4)]
    r = grid.nodes
    far = np.abs(r - 1.0) > 0.2
    diffs = [np.max(np.abs(a[far] - b[far])) for a, b in zip(sols, sols[1:])]
    assert diffs[0] > diffs[1] > diffs[2]


def test_y_decomposition(vortex, grid):
    r = grid.nodes
    k = 2
    w0, F, Fs = y_decomposition(vortex, k, ModeField(k, r**k * np.exp(-r**2), grid))
    assert abs(w0 - 1) < 1e-8
    assert abs(fit_log_slope(r, np.abs(F.values), (1e-3, 1e-2))[0] - (k + 2.5)) < 0.3
    assert np.all(Fs.values[r < 0.5] == 0)
    w0, F, _ = y_decomposition(vortex, k, ModeField(k, vortex.beta(r) / vortex.beta0 * r**k, grid))
    assert np.max(np.abs(F.values[r < 0.5])) <= 1e-10
    with pytest.raises(ValueError, match="origin extrapolation"):
        y_decomposition(vortex, k, ModeField(k, r * np.exp(-r**2), grid))


def test_dump(vortex, tmp_path):
    g = make_grid(1e-3, 30, 200)
    gd = greens_data(vortex, 2, spectral_point(vortex, 0.2, 1e-2), g)
    name = dump_spectral_point(gd, tmp_path, {"greens": 1e-4})
    info = json.loads((tmp_path / f"{name}.json").read_text())
    assert info["M"] == [gd.M.real, gd.M.imag]
    rows = (tmp_path / f"{name}.csv").read_text().splitlines()
    assert rows[0].startswith("r,phi_re") and len(rows) == gd.grid.n + 1


def test_build_rejects_eps_zero(vortex, grid):
    sp = spectral_point(vortex, 0.2, 1e-2)
    hom = homogeneous_phi(vortex, 2, sp, grid)
    with pytest.raises(ValueError):
        build_H0_Hinf_M(vortex, 2, spectral_point(vortex, 0.2, 0.0), hom)
