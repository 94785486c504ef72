"""Method-of-lines RK4 integration of d omega/dt = -ik u omega + ik beta psi."""
import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .biot_savart import get_operator
from .grid import ModeField


class InstabilityError(RuntimeError):
    pass


@dataclass
class EvolutionState:
    t: float
    omega: ModeField
    psi: ModeField
    diagnostics: dict = field(default_factory=dict)


@dataclass
class EvolveOptions:
    C: float = 5.0
    dt: float | None = None  # overrides the C-based step when given
    passive: bool = False  # force beta = 0
    growth_limit: float = 0.01  # allowed relative L^2_beta growth per unit time
    impl: object = None


class EvolutionRun(list):
    """List of EvolutionState plus the per-step conservation history."""

    def __init__(self, states=(), history=None, meta=None):
        super().__init__(states)
        self.history = history or {}
        self.meta = meta or {}


def default_dt(v, k, C=5.0):
    return 0.1 / (abs(k) * v.u0 * C)


def _beta_weights(grid, beta):
    with np.errstate(divide="ignore"):
        return np.where(beta > 0, grid.weights * grid.nodes / np.where(beta > 0, beta, 1.0), 0.0)


def beta_norm(omega, beta):
    return float(np.sqrt(np.sum(_beta_weights(omega.grid, beta) * np.abs(omega.values) ** 2)))


def momentum(omega):
    return complex(omega.grid.integrate(omega.values * omega.r**2))


def evolve(v, k, omega_in, t_out, opts=None):
    """Integrate one mode and return snapshots at the requested times.

    The step is 0.1/(|k| u(0) C) shortened so that every output time is hit
    exactly.  The L^2_beta norm and, for |k| = 1, the moment int omega r^2 dr are
    recorded after every step.
    """
    opts = opts or EvolveOptions()
    if isinstance(opts, dict):
        opts = EvolveOptions(**opts)
    if k == 0:
        raise ValueError("k = 0 is excluded: the radial mean does not evolve")
    if omega_in.k != k:
        raise ValueError("mismatched k")
    t_out = [float(t) for t in t_out]
    if any(t < 0 for t in t_out) or any(b < a for a, b in zip(t_out, t_out[1:])):
        raise ValueError("t_out must be nondecreasing and start at t >= 0")
    impl = opts.impl or _kernels.active
    grid = omega_in.grid
    r = grid.nodes
    op = get_operator(grid, k)
    beta = v.beta(r)
    a = np.ascontiguousarray(-1j * k * v.u(r))
    b = np.zeros(r.size, complex) if opts.passive else np.ascontiguousarray(1j * k * beta)
    wb = _beta_weights(grid, beta)
    wm = grid.weights * r**2 if abs(k) == 1 else np.zeros(r.size)
    dt_nom = opts.dt or default_dt(v, k, opts.C)
    growth = 1.0 + opts.growth_limit

    w = np.array(omega_in.values, dtype=complex)
    n0 = float(np.sum(wb * np.abs(w) ** 2))
    m0 = complex(np.sum(wm * w))
    ts, norms, moms = [0.0], [n0], [m0]
    states = []
    t = 0.0
    t_start = time.perf_counter()
    for tk in t_out:
        span = tk - t
        if span > 0:
            nsteps = int(np.ceil(span / dt_nom - 1e-9))
            dt = span / nsteps
            nrm = np.empty(nsteps)
            mom = np.empty(nsteps, complex)
            # the growth test is relative to the norm at the segment start, scaled by elapsed time
            nseg = float(np.sum(wb * np.abs(w) ** 2))
            fail = impl.rk4(w, a, b, op.CA, op.CB, op.q, op.S, op.a0, dt, nsteps, wb, wm, nrm, mom,
                            max(nseg, n0), growth)
            if fail >= 0:
                raise InstabilityError(
                    f"L2_beta norm grew by more than {100 * opts.growth_limit:g}% per unit time "
                    f"at t = {t + (fail + 1) * dt:.4g} (dt = {dt:.3g}); reduce the step or refine the grid")
            ts.extend(t + dt * np.arange(1, nsteps + 1))
            norms.extend(nrm)
            moms.extend(mom)
            t = tk
        om = omega_in.with_values(w.copy())
        psi = om.with_values(op.apply(w, impl))
        diag = {"beta_norm": float(np.sqrt(np.sum(wb * np.abs(w) ** 2)))}
        if abs(k) == 1:
            diag["momentum"] = complex(np.sum(wm * w))
        states.append(EvolutionState(tk, om, psi, diag))
    hist = {"t": np.array(ts), "beta_norm": np.sqrt(np.array(norms)), "momentum": np.array(moms),
            "scale_momentum": float(grid.integrate(np.abs(omega_in.values) * r**2))}
    meta = {"dt_nominal": dt_nom, "wall_time": time.perf_counter() - t_start, "engine": impl.name,
            "passive": bool(opts.passive)}
    return EvolutionRun(states, hist, meta)


def conserved_drift(states):
    """(max relative change of the L^2_beta norm, max momentum change / int |omega| r^2 dr).

    Uses the per-step history when available, otherwise the snapshots.  The
    momentum drift is 0 for |k| != 1.
    """
    hist = getattr(states, "history", None)
    if hist and len(hist.get("t", ())) > 0:
        nb = hist["beta_norm"]
        mom = hist["momentum"]
        scale = hist.get("scale_momentum") or 1.0
    else:
        if len(states) == 0:
            return 0.0, 0.0
        nb = np.array([s.diagnostics.get("beta_norm", 0.0) for s in states])
        mom = np.array([s.diagnostics.get("momentum", 0.0) for s in states])
        s0 = states[0].omega
        scale = float(s0.grid.integrate(np.abs(s0.values) * s0.r**2)) or 1.0
    bdrift = float(np.max(np.abs(nb / nb[0] - 1.0))) if nb[0] > 0 else 0.0
    k = states[0].omega.k if len(states) else 0
    mdrift = float(np.max(np.abs(mom - mom[0])) / scale) if abs(k) == 1 else 0.0
    return bdrift, mdrift


def neutral_mode(v, grid, k=1):
    r = grid.nodes
    return ModeField(k, r * v.beta(r), grid)


def project_orthogonal(v, omega, tol=1e-14):
    """Remove the neutral mode r beta so that int omega r^2 dr = 0 (|k| = 1 only)."""
    if abs(omega.k) != 1:
        raise ValueError("the neutral-mode projection is defined for |k| = 1")
    r = omega.r
    ws = r * v.beta(r)
    den = omega.grid.integrate(ws * r**2)
    if abs(den) < tol:
        raise ValueError("neutral mode has vanishing moment; vortex is degenerate")
    c = omega.grid.integrate(omega.values * r**2) / den
    return omega.with_values(omega.values - c * ws)


def save_run(run, directory, config_hash=None, extra=None):
    """Write snapshots.csv (t, r, re, im) and manifest.json."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "snapshots.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "r", "re", "im"])
        for s in run:
            for ri, val in zip(s.omega.r, s.omega.values):
                wr.writerow([repr(float(s.t)), repr(float(ri)), repr(float(val.real)), repr(float(val.imag))])
    bdrift, mdrift = conserved_drift(run)
    man = {
        "config_hash": config_hash,
        "k": run[0].omega.k if len(run) else None,
        "times": [float(s.t) for s in run],
        "beta_norm_drift": bdrift,
        "momentum_drift": mdrift,
        "meta": getattr(run, "meta", {}),
    }
    if extra:
        man.update(extra)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(man, fh, indent=2, default=str)
    return path


def load_snapshots(directory):
    """Read snapshots.csv back as {t: (r, values)}."""
    data = np.genfromtxt(os.path.join(directory, "snapshots.csv"), delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    out = {}
    for t in np.unique(data[:, 0]):
        rows = data[data[:, 0] == t]
        out[float(t)] = (rows[:, 1], rows[:, 2] + 1j * rows[:, 3])
    return out
