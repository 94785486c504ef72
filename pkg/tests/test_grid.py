import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from vortexdamp.biot_savart import solve_streamfunction_kernel_dense
from vortexdamp.grid import (ModeField, RadialGrid, WeightSpec, inner_product_beta, make_grid, origin_coefficient,
                             power_weight, weight_values, weighted_norm)


def test_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid(np.array([1.0, 2.0, 2.0, 3.0, 4.0]))
    with pytest.raises(ValueError):
        RadialGrid(np.array([0.0, 1.0, 2.0, 3.0, 4.0]))
    with pytest.raises(ValueError):
        make_grid(1.0, 0.5, 100)


@pytest.mark.parametrize("law", ["geometric", "uniform", "composite"])
def test_quadrature_reproduces_r_dr(law):
    g = make_grid(1e-4, 40.0, 2048, law)
    assert abs(g.integrate(g.nodes) / ((40.0**2 - 1e-8) / 2) - 1) <= 1e-6
    assert np.all(g.weights > 0)
    assert np.all(np.diff(g.nodes) > 0)


def test_composite_spacing_is_continuous():
    g = make_grid(1e-4, 40.0, 2048, "composite", r_split=1.0)
    h = np.diff(g.nodes)
    assert np.max(np.abs(np.diff(h)) / h[1:]) < 0.05


def test_panel_rule_exact_on_cubics():
    g = make_grid(0.1, 3.0, 37)
    r = g.nodes
    for p in range(4):
        exact = (3.0 ** (p + 1) - 0.1 ** (p + 1)) / (p + 1)
        assert abs(g.integrate(r**p) - exact) <= 1e-12 * exact
        cum = g.cumulative(r**p)
        assert np.allclose(cum, (r ** (p + 1) - 0.1 ** (p + 1)) / (p + 1), rtol=1e-12, atol=1e-14)


def test_derivatives_fourth_order():
    errs = []
    for n in (200, 400):
        g = make_grid(0.5, 3.0, n, "uniform")
        r = g.nodes
        errs.append(np.max(np.abs(g.derivative(np.sin(r)) - np.cos(r))))
        assert np.max(np.abs(g.derivative(np.sin(r), 2) + np.sin(r))) < 1e-5
    assert errs[0] / errs[1] > 12


def test_zero_field_has_zero_norm(grid, vortex):
    z = ModeField(2, np.zeros(grid.n), grid)
    for fam in ("psi", "f", "F", "plain"):
        assert weighted_norm(z, WeightSpec(fam, 0.1)) == 0.0
    assert weighted_norm(z, WeightSpec("beta"), vortex) == 0.0


def test_weight_normalization_and_glue():
    spec = WeightSpec("psi", 0.1, 2)
    assert abs(weight_values(np.array([1.0]), spec)[0] - 1.0) < 1e-14
    for fam in ("psi", "f", "F"):
        for k in (1, 2, 3):
            a, b = WeightSpec(fam, 0.1).exponents(k)
            for r in (np.geomspace(1e-4, 0.5, 50), np.geomspace(2, 40, 50)):
                ratio = power_weight(r, a, b) / np.minimum(r**a, r**b)
                assert np.all(ratio <= 2.0) and np.all(ratio >= 0.5)


def test_bad_weight_specs():
    with pytest.raises(ValueError):
        WeightSpec("psi", 0.6)
    with pytest.raises(ValueError):
        WeightSpec("nope", 0.1)
    g = make_grid(1e-3, 10, 64)
    with pytest.raises(ValueError):
        weighted_norm(ModeField(1, np.ones(64), g), WeightSpec("psi", 0.1, 2))


def test_beta_norm_of_neutral_mode(vortex, grid):
    r = grid.nodes
    ws = ModeField(1, r * vortex.beta(r), grid)
    oracle = np.sqrt(quad(lambda s: s**3 * vortex.beta(np.array([s]))[0], 0, 40, epsabs=1e-14, limit=200)[0])
    assert abs(weighted_norm(ws, WeightSpec("beta"), vortex) / oracle - 1) < 1e-8


def _random_field(seed, grid, k=2):
    rng = np.random.default_rng(seed)
    r = grid.nodes
    c = rng.normal(size=3) + 1j * rng.normal(size=3)
    vals = r**k * np.exp(-r**2 / 2) * (c[0] + c[1] * r**2 / (1 + r**2) + c[2] * np.cos(r))
    return ModeField(k, vals, grid)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_beta_inner_product_hermitian(s1, s2):
    from vortexdamp.vortex import build_gaussian_vortex
    v = build_gaussian_vortex()
    g = make_grid(1e-3, 20, 400)
    a, b = _random_field(s1, g), _random_field(s2, g)
    assert abs(inner_product_beta(a, b, v) - np.conj(inner_product_beta(b, a, v))) <= 1e-12 * abs(
        inner_product_beta(a, a, v))
    assert abs(inner_product_beta(a, a, v) - weighted_norm(a, WeightSpec("beta"), v) ** 2) <= 1e-10 * abs(
        inner_product_beta(a, a, v))


@pytest.mark.parametrize("seed", range(5))
def test_linearized_operator_self_adjoint(vortex, seed):
    g = make_grid(1e-3, 20, 600)
    w = _random_field(seed, g)
    psi = solve_streamfunction_kernel_dense(2, w)
    Lw = w.with_values(vortex.u(g.nodes) * w.values - vortex.beta(g.nodes) * psi.values)
    val = inner_product_beta(Lw, w, vortex)
    assert abs(val.imag) <= 1e-8 * inner_product_beta(w, w, vortex).real


def test_origin_coefficient(grid):
    r = grid.nodes
    f = ModeField(2, r**2 * np.exp(-r**2), grid)
    assert abs(origin_coefficient(f) - 1) < 1e-10
    with pytest.raises(ValueError):
        origin_coefficient(ModeField(2, r * np.exp(-r**2), grid))
