"""Radial grids, quadrature, mode fields and the weighted norms used for decay rates."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np


def _panel_weights(r):
    """Cubic-Lagrange weights for each interval [r_i, r_{i+1}].

    Returns (W, S) with int_{r_i}^{r_{i+1}} f ~ sum_m W[i, m] f[S[i] + m].
    The stencil is the 4 nodes around the interval, shifted inward at the ends.
    """
    n = r.size
    if n < 4:
        raise ValueError("need at least 4 nodes")
    i = np.arange(n - 1)
    S = np.clip(i - 1, 0, n - 4)
    h = r[1:] - r[:-1]
    x = r[S[:, None] + np.arange(4)]
    t = (x - r[:-1, None]) / h[:, None]
    V = t[:, :, None] ** np.arange(4)[None, None, :]  # V[i, m, j] = t_m^j
    mom = 1.0 / (np.arange(4) + 1.0)
    W = np.linalg.solve(np.transpose(V, (0, 2, 1)), np.broadcast_to(mom, (n - 1, 4))[..., None])[..., 0]
    return W * h[:, None], S


def derivative_weights(r, npts=5, deriv=1):
    """Finite-difference weights for d^m/dr^m at every node (centered inside, one-sided at the ends)."""
    n = r.size
    if n < npts:
        raise ValueError("grid too small for the stencil")
    i = np.arange(n)
    S = np.clip(i - npts // 2, 0, n - npts)
    x = r[S[:, None] + np.arange(npts)]
    hloc = np.maximum(np.abs(x[:, -1] - x[:, 0]), 1e-300)
    t = (x - r[:, None]) / hloc[:, None]
    V = t[:, :, None] ** np.arange(npts)[None, None, :]
    rhs = np.zeros((n, npts))
    rhs[:, deriv] = float(np.prod(np.arange(1, deriv + 1)))
    D = np.linalg.solve(np.transpose(V, (0, 2, 1)), rhs[..., None])[..., 0]
    return D / hloc[:, None] ** deriv, S


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    law: str = "geometric"

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 5:
            raise ValueError("grid needs at least 5 nodes")
        if not (np.all(r > 0) and np.all(np.diff(r) > 0)):
            raise ValueError("grid nodes must be positive and strictly increasing")
        object.__setattr__(self, "nodes", r)

    @property
    def n(self):
        return self.nodes.size

    @property
    def r(self):
        return self.nodes

    @cached_property
    def panels(self):
        return _panel_weights(self.nodes)

    @cached_property
    def weights(self):
        """Composite 4th-order point weights over [r_1, r_N]."""
        W, S = self.panels
        w = np.zeros(self.n)
        np.add.at(w, (S[:, None] + np.arange(4)).ravel(), W.ravel())
        return w

    @cached_property
    def trapezoid_weights(self):
        r = self.nodes
        w = np.zeros(self.n)
        h = np.diff(r)
        w[:-1] += h / 2
        w[1:] += h / 2
        return w

    @cached_property
    def dweights(self):
        return derivative_weights(self.nodes)

    def integrate(self, f):
        return np.dot(self.weights, f)

    def panel_integrals(self, f):
        W, S = self.panels
        return np.sum(W * f[S[:, None] + np.arange(4)], axis=1)

    def cumulative(self, f, initial=0.0):
        """int_{r_1}^{r_i} f, 4th order, with ``initial`` added."""
        out = np.empty(self.n, dtype=np.result_type(f, float))
        out[0] = 0
        out[1:] = np.cumsum(self.panel_integrals(f))
        return out + initial

    def cumulative_right(self, f, tail=0.0):
        """int_{r_i}^{r_N} f plus ``tail``."""
        p = self.panel_integrals(f)
        out = np.empty(self.n, dtype=np.result_type(f, float))
        out[-1] = 0
        out[:-1] = np.cumsum(p[::-1])[::-1]
        return out + tail

    @cached_property
    def d2weights(self):
        return derivative_weights(self.nodes, 5, 2)

    def derivative(self, f, order=1):
        D, S = self.dweights if order == 1 else self.d2weights
        return np.sum(D * f[S[:, None] + np.arange(D.shape[1])], axis=1)

    def to_config(self):
        return {"r_min": float(self.nodes[0]), "r_max": float(self.nodes[-1]), "n": int(self.n), "law": self.law}


def make_grid(r_min=1e-4, r_max=40.0, n=2048, law="geometric", r_split=1.0):
    """Grid on [r_min, r_max].

    geometric: log-uniform nodes.  uniform: equispaced.  composite: log-uniform up
    to ``r_split`` and equispaced beyond, with the spacing matched at the seam.
    """
    if not (0 < r_min < r_max) or n < 5:
        raise ValueError("need 0 < r_min < r_max and n >= 5")
    if law == "geometric":
        r = np.geomspace(r_min, r_max, n)
    elif law == "uniform":
        r = np.linspace(r_min, r_max, n)
    elif law == "composite":
        if not r_min < r_split < r_max:
            raise ValueError("r_split must lie inside (r_min, r_max)")
        # choose log step q so that n_geo + n_uni = n with spacing continuous at r_split
        def count(q):
            ng = np.log(r_split / r_min) / q
            h = r_split * q
            return ng + (r_max - r_split) / h
        lo, hi = 1e-8, 10.0
        for _ in range(200):
            mid = np.sqrt(lo * hi)
            if count(mid) > n - 1:
                lo = mid
            else:
                hi = mid
        q = hi
        ng = max(int(round(np.log(r_split / r_min) / q)), 2)
        geo = np.geomspace(r_min, r_split, ng + 1)
        nu = n - geo.size
        uni = np.linspace(r_split, r_max, nu + 1)[1:]
        r = np.concatenate([geo, uni])
    else:
        raise ValueError(f"unknown grid law {law!r}")
    return RadialGrid(r, law)


def grid_from_config(block):
    block = dict(block or {})
    return make_grid(block.get("r_min", 1e-4), block.get("r_max", 40.0), int(block.get("n", 2048)),
                     block.get("law", "geometric"))


@dataclass(eq=False)
class ModeField:
    """Complex radial function for one angular wavenumber k."""
    k: int
    values: np.ndarray
    grid: RadialGrid

    def __post_init__(self):
        if int(self.k) != self.k or self.k == 0:
            raise ValueError("mode fields need an integer k != 0")
        self.k = int(self.k)
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise ValueError(f"values length {v.shape} does not match grid size {self.grid.n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("mode field contains non-finite values")
        self.values = v

    @property
    def r(self):
        return self.grid.nodes

    def with_values(self, values):
        return ModeField(self.k, values, self.grid)

    def _check(self, other):
        if other.grid is not self.grid and not np.array_equal(other.grid.nodes, self.grid.nodes):
            raise ValueError("grid mismatch")
        if other.k != self.k:
            raise ValueError("mismatched k")

    def __add__(self, other):
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, a):
        return self.with_values(self.values * a)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


FAMILIES = ("psi", "f", "F", "beta", "plain")


@dataclass(frozen=True)
class WeightSpec:
    family: str
    delta: float = 0.1
    k: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown weight family {self.family!r}")
        if not (0 < self.delta < 0.5):
            raise ValueError("delta must lie in (0, 1/2)")

    def exponents(self, k=None):
        """(a, b): the weight behaves like r^a near 0 and r^b near infinity."""
        k = abs(self.k if self.k is not None else k)
        d = self.delta
        if self.family == "psi":
            return k + 0.5 - d, -k + 0.5 + d
        if self.family == "f":
            return k + 0.5 - d, -k + 0.5 - 6 + d
        if self.family == "F":
            return k + 3 - d, -k + 1 - 6 + d
        raise ValueError(f"family {self.family!r} is not a power-law weight")


def power_weight(r, a, b):
    """Smooth weight equal to 1 at r = 1 and within sqrt(2) of min(r^a, r^b)."""
    lr = np.log(np.asarray(r, dtype=float))
    return np.exp(0.5 * np.log(2.0) - 0.5 * np.logaddexp(-2 * a * lr, -2 * b * lr))


def weight_values(r, spec, k=None, beta=None):
    """1/w^2 density multiplying |g|^2 in the norm integral."""
    if spec.family == "plain":
        return np.ones_like(np.asarray(r, dtype=float))
    if spec.family == "beta":
        if beta is None:
            raise ValueError("the beta family needs the background beta")
        return np.asarray(r) / beta
    a, b = spec.exponents(k)
    return power_weight(r, a, b) ** -2


def _beta_on(grid, vortex, beta):
    if beta is not None:
        return np.asarray(beta, dtype=float)
    if vortex is not None:
        return vortex.beta(grid.nodes)
    return None


def weighted_norm(field, spec, vortex=None, beta=None):
    """(int |g|^2 / w^2 dr)^(1/2); for the beta family (int |g|^2 r/beta dr)^(1/2)."""
    if spec.k is not None and abs(spec.k) != abs(field.k):
        raise ValueError("mismatched k between field and weight spec")
    dens = weight_values(field.r, spec, field.k, _beta_on(field.grid, vortex, beta))
    val = field.grid.integrate(np.abs(field.values) ** 2 * dens)
    return float(np.sqrt(max(val, 0.0)))


def inner_product_beta(g1, g2, vortex=None, beta=None):
    """<g1, g2>_beta = int g1 conj(g2) r/beta dr."""
    g1._check(g2)
    b = _beta_on(g1.grid, vortex, beta)
    if b is None:
        raise ValueError("need the background beta")
    return complex(g1.grid.integrate(g1.values * np.conj(g2.values) * g1.r / b))


def origin_coefficient(field, power=None, rtol=1e-4):
    """lim_{r->0} g(r)/r^p (p = |k| by default) by Richardson extrapolation in r^2.

    Uses the three smallest nodes and assumes g/r^p = a0 + a1 r^2 + a2 r^4 + ...
    Raises ValueError when the three samples are not consistent with that
    expansion (the data do not behave like r^p times an even function).
    """
    p = abs(field.k) if power is None else power
    r = field.r[:3]
    g = field.values[:3] / r**p
    x = r**2
    # quadratic interpolation in x evaluated at x = 0
    L = [np.prod([(0 - x[m]) / (x[j] - x[m]) for m in range(3) if m != j]) for j in range(3)]
    a0 = complex(np.dot(L, g))
    scale = float(np.max(np.abs(g)))
    if scale == 0.0:
        return 0j
    spread = float(np.max(np.abs(g - a0)))
    if spread > rtol * scale:
        raise ValueError(
            f"omega/r^{p} is not smooth at the origin (spread {spread / scale:.2e} relative over the "
            "three innermost nodes); data must have the expansion r^k (a0 + a1 r^2 + ...)")
    return a0
