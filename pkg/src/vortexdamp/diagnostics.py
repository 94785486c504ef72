"""Decay-rate fits, origin depletion and scattering profiles from evolution runs."""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from .biot_savart import velocity_components
from .grid import WeightSpec, weighted_norm

MIN_POINTS = 8


class WindowError(ValueError):
    pass


def fit_log_slope(xs, ys, window=None, min_points=MIN_POINTS):
    """OLS slope of log y against log x on ``window`` = (lo, hi) in x; returns (slope, stderr)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys differ in shape")
    sel = np.ones(xs.size, bool) if window is None else (xs >= window[0]) & (xs <= window[1])
    if sel.sum() < min_points:
        raise WindowError(f"only {int(sel.sum())} samples in window {window}; need {min_points}")
    x, y = xs[sel], ys[sel]
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("log-slope fit needs positive finite data in the window")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(ly) == 0.0:
        return 0.0, 0.0
    res = linregress(lx, ly)
    return float(res.slope), float(res.stderr)


def profile(v, state):
    """Gliding-frame profile f = exp(i k t u) omega."""
    om = state.omega
    return om.with_values(np.exp(1j * om.k * state.t * v.u(om.r)) * om.values)


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(x)) for x in row])


def check_band(value, band):
    lo, hi = band
    return bool(lo <= value <= hi)


@dataclass
class DampingReport:
    t: np.ndarray
    psi_norm: np.ndarray
    rur_norm: np.ndarray
    rutheta_norm: np.ndarray
    slopes: dict
    window: tuple
    delta: float
    flags: dict = field(default_factory=dict)

    def apply_bands(self, bands):
        """bands: {"psi_norm": (lo, hi), ...}; sets and returns pass/fail per fitted slope."""
        self.flags = {name: check_band(self.slopes[name][0], band) for name, band in bands.items()}
        return self.flags

    @property
    def passed(self):
        return all(self.flags.values())

    def to_csv(self, path):
        _write_csv(path, ["t", "psi_norm", "rur_norm", "rutheta_norm"],
                   zip(self.t, self.psi_norm, self.rur_norm, self.rutheta_norm))

    def summary(self):
        return {"window": list(self.window), "delta": self.delta,
                "slopes": {k: {"slope": s, "stderr": e} for k, (s, e) in self.slopes.items()},
                "flags": self.flags}


def damping_report(v, k, run, delta=0.1, window=None):
    """Weighted norms of psi, r u^r, r u^theta per snapshot and their late-time log-slopes.

    The default window is the last decade [t_max/10, t_max].
    """
    states = [s for s in run if s.t > 0]
    if not states:
        raise WindowError("run has no snapshots at t > 0")
    spec = WeightSpec("psi", delta, abs(k))
    rows = []
    for s in states:
        if s.psi.k != k:
            raise ValueError("snapshot k does not match")
        ur, ut = velocity_components(k, s.psi)
        r = s.psi.r
        rows.append((s.t, weighted_norm(s.psi, spec), weighted_norm(ur.with_values(r * ur.values), spec),
                     weighted_norm(ut.with_values(r * ut.values), spec)))
    rows = np.array(rows)
    t = rows[:, 0]
    if window is None:
        window = (t[-1] / 10.0, t[-1])
    window = (float(window[0]), float(window[1]))
    names = ("psi_norm", "rur_norm", "rutheta_norm")
    slopes = {name: fit_log_slope(t, rows[:, j + 1], window) for j, name in enumerate(names)}
    return DampingReport(t, rows[:, 1], rows[:, 2], rows[:, 3], slopes, window, delta)


@dataclass
class DepletionReport:
    steady_slope: float
    steady_stderr: float
    initial_slope: float
    initial_stderr: float
    t: np.ndarray
    slope: np.ndarray
    stderr: np.ndarray
    r_window: tuple
    n_avg: int

    def to_csv(self, path):
        _write_csv(path, ["t", "slope", "stderr"], zip(self.t, self.slope, self.stderr))

    def summary(self):
        return {"steady_slope": self.steady_slope, "steady_stderr": self.steady_stderr,
                "initial_slope": self.initial_slope, "initial_stderr": self.initial_stderr,
                "r_window": list(self.r_window), "n_avg": self.n_avg}


def origin_slope(field_values, r, r_window):
    return fit_log_slope(r, np.abs(field_values), r_window)


def _check_window(r, r_window):
    lo, hi = r_window
    if not (0 < lo < hi) or lo < r[0] or hi > r[-1]:
        raise WindowError(f"r window {r_window} lies outside the grid [{r[0]:g}, {r[-1]:g}]")
    if np.count_nonzero((r >= lo) & (r <= hi)) < MIN_POINTS:
        raise WindowError(f"r window {r_window} is not resolved by the grid")


def depletion_report(v, k, run, r_window=(1e-3, 1e-2), n_avg=5, omega_in=None):
    """Origin log-slope of the late-time profile against that of the initial profile.

    The late profile is |f| averaged over the last ``n_avg`` snapshots.  The
    initial profile is ``omega_in`` or the t = 0 snapshot.
    """
    states = list(run)
    if len(states) < 3:
        raise WindowError("need snapshots at 3 or more late times")
    r = states[0].omega.r
    _check_window(r, r_window)
    if omega_in is None:
        if states[0].t != 0:
            raise ValueError("no t = 0 snapshot; pass omega_in")
        omega_in = states[0].omega
    if omega_in.k != k:
        raise ValueError("initial data k does not match")
    late = [s for s in states if s.t > 0][-n_avg:]
    if len(late) < 3:
        raise WindowError("need snapshots at 3 or more late times")
    mean_abs = np.mean([np.abs(profile(v, s).values) for s in late], axis=0)
    s_slope, s_err = origin_slope(mean_abs, r, r_window)
    i_slope, i_err = origin_slope(omega_in.values, r, r_window)
    per = np.array([(s.t,) + origin_slope(profile(v, s).values, r, r_window) for s in states])
    return DepletionReport(s_slope, s_err, i_slope, i_err, per[:, 0], per[:, 1], per[:, 2],
                           tuple(r_window), len(late))


@dataclass
class ScatteringResult:
    omega_inf: object
    t_pairs: np.ndarray
    cauchy_tail: np.ndarray
    decreasing: bool


def scattering_profile(v, run, delta=0.1, n_pairs=4, profiles=None):
    """Latest profile and ||f(t_i) - f(t_{i+1})||_{L^2_f} over the last ``n_pairs`` pairs.

    ``profiles`` may supply [(t, f)] directly (e.g. from the k = 1 closed form).
    """
    if profiles is None:
        profiles = [(s.t, profile(v, s)) for s in run]
    if len(profiles) < n_pairs + 1:
        raise WindowError(f"need at least {n_pairs + 1} snapshots for {n_pairs} pairs")
    late = profiles[-(n_pairs + 1):]
    k = late[-1][1].k
    spec = WeightSpec("f", delta, abs(k))
    tail = np.array([weighted_norm(b - a, spec) for (_, a), (_, b) in zip(late[:-1], late[1:])])
    tp = np.array([ta for ta, _ in late[:-1]])
    decreasing = bool(np.all(np.diff(tail) < 0))
    return ScatteringResult(late[-1][1], tp, tail, decreasing)


def write_summary(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=float)
