import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexdamp.evolution import (EvolveOptions, InstabilityError, conserved_drift, evolve, load_snapshots,
                                  momentum, neutral_mode, project_orthogonal, save_run)
from vortexdamp.grid import make_grid

from conftest import bump, rel_l2


def test_zero_time_returns_input(vortex, grid):
    w = bump(grid, 2)
    run = evolve(vortex, 2, w, [0.0])
    assert np.array_equal(run[0].omega.values, w.values)
    assert conserved_drift(run) == (0.0, 0.0)


def test_k_zero_rejected(vortex, grid):
    with pytest.raises(ValueError, match="k = 0"):
        evolve(vortex, 0, bump(grid, 1), [1.0])


def test_neutral_mode_is_steady(vortex, grid):
    ws = neutral_mode(vortex, grid)
    run = evolve(vortex, 1, ws, [10.0])
    assert rel_l2(run[-1].omega, ws) <= 1e-6


def test_beta_norm_conserved_k2(vortex, grid):
    run = evolve(vortex, 2, bump(grid, 2), [50.0])
    bdrift, mdrift = conserved_drift(run)
    assert bdrift <= 1e-6 and mdrift == 0.0


def test_momentum_conserved_k1(vortex, grid):
    w = project_orthogonal(vortex, bump(grid, 1))
    run = evolve(vortex, 1, w, [5.0, 10.0])
    _, mdrift = conserved_drift(run)
    assert mdrift <= 1e-8


def test_rk4_order(vortex):
    g = make_grid(1e-3, 30, 512)
    w = bump(g, 2)
    # self-convergence under step halving; the beta-norm drift itself saturates at the
    # spatial quadrature floor (~1e-6) once the time error is below it
    sol = [evolve(vortex, 2, w, [20.0], EvolveOptions(C=C))[0].omega for C in (1.0, 2.0, 4.0)]
    ratio = rel_l2(sol[0], sol[1]) / rel_l2(sol[1], sol[2])
    assert 12 < ratio < 20


def test_projection(vortex, grid):
    ws = neutral_mode(vortex, grid)
    assert np.max(np.abs(project_orthogonal(vortex, ws).values)) <= 1e-12 * np.max(np.abs(ws.values))
    g = project_orthogonal(vortex, bump(grid, 1, 2.0, 1.0))
    assert np.max(np.abs(project_orthogonal(vortex, g).values - g.values)) <= 1e-12
    back = project_orthogonal(vortex, ws * 0.7 + g)
    assert np.max(np.abs(back.values - g.values)) <= 1e-10
    with pytest.raises(ValueError):
        project_orthogonal(vortex, bump(grid, 2))


def test_linearity(vortex):
    g = make_grid(1e-3, 30, 512)
    a, b = bump(g, 2, 1.0, 0.5), bump(g, 2, 2.0, 1.0)
    ea = evolve(vortex, 2, a, [3.0])[0].omega
    eb = evolve(vortex, 2, b, [3.0])[0].omega
    eab = evolve(vortex, 2, a * 2.0 + b * (1 - 1j), [3.0])[0].omega
    assert rel_l2(eab, ea * 2.0 + eb * (1 - 1j)) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.floats(0.5, 3.0), st.floats(0.5, 20.0))
def test_passive_limit_is_pure_phase(k, c, t):
    from vortexdamp.vortex import build_gaussian_vortex
    v = build_gaussian_vortex()
    g = make_grid(1e-3, 30, 256)
    w = bump(g, k, c, 0.5)
    out = evolve(v, k, w, [t], EvolveOptions(passive=True))[0].omega
    exact = np.exp(-1j * k * t * v.u(g.nodes)) * w.values
    assert np.max(np.abs(out.values - exact)) <= 1e-8 * np.max(np.abs(w.values))


def test_instability_is_detected(vortex):
    g = make_grid(1e-3, 30, 256)
    with pytest.raises(InstabilityError, match="reduce the step"):
        evolve(vortex, 2, bump(g, 2), [50.0], EvolveOptions(dt=20.0))


def test_save_and_load(vortex, tmp_path):
    g = make_grid(1e-3, 30, 64)
    run = evolve(vortex, 1, project_orthogonal(vortex, bump(g, 1)), [0.0, 1.0])
    save_run(run, tmp_path, config_hash="abc")
    snaps = load_snapshots(tmp_path)
    assert sorted(snaps) == [0.0, 1.0]
    r, vals = snaps[1.0]
    assert np.array_equal(r, g.nodes) and np.array_equal(vals, run[1].omega.values)
    assert abs(momentum(run[0].omega)) < 1e-12
