"""RunConfig: declarative description of one run, validated before any compute."""
import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import ModeField, grid_from_config
from .vortex import vortex_from_config

ENGINES = ("timestep", "contour", "k1_oracle", "passive")
FAMILIES = ("bump", "power_gauss", "tabulated", "neutral")
GRID_LAWS = ("geometric", "uniform", "composite")

DEFAULTS = {
    "name": "run",
    "vortex": {"type": "gaussian", "lambda": 2 * np.pi, "L": 1.0},
    "grid": {"r_min": 1e-4, "r_max": 40.0, "n": 2048, "law": "geometric"},
    "timestep": {"C": 5.0, "dt": None},
    "contour": {"eps": 1e-3, "alpha": 0.05, "R_delta": 1.0, "c_nodes": None},
    "diagnostics": {"delta": 0.1},
    "deterministic": True,
}


class ConfigError(ValueError):
    def __init__(self, field, reason):
        super().__init__(f"config field {field!r}: {reason}")
        self.field = field
        self.reason = reason


def _num(block, key, where, positive=False, integer=False, required=True, default=None):
    if key not in block or block[key] is None:
        if required:
            raise ConfigError(f"{where}.{key}", "missing")
        return default
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}", f"expected a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(f"{where}.{key}", "expected an integer")
    if not np.isfinite(val):
        raise ConfigError(f"{where}.{key}", "must be finite")
    if positive and val <= 0:
        raise ConfigError(f"{where}.{key}", "must be positive")
    return int(val) if integer else float(val)


def _band(val, where):
    if not (isinstance(val, (list, tuple)) and len(val) == 2 and all(isinstance(x, (int, float)) for x in val)
            and val[0] <= val[1]):
        raise ConfigError(where, "expected [lo, hi] with lo <= hi")
    return [float(val[0]), float(val[1])]


def _merge(defaults, user):
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **val}
        else:
            out[key] = val
    return out


def _time_grid(block):
    if not isinstance(block, dict):
        raise ConfigError("times", "expected an object")
    if "t_out" in block:
        ts = block["t_out"]
        if not isinstance(ts, list) or not ts:
            raise ConfigError("times.t_out", "expected a nonempty list")
        try:
            ts = [float(t) for t in ts]
        except (TypeError, ValueError):
            raise ConfigError("times.t_out", "entries must be numbers") from None
    else:
        t_max = _num(block, "t_max", "times", positive=True)
        n = _num(block, "n", "times", positive=True, integer=True)
        spacing = block.get("spacing", "linear")
        if spacing == "linear":
            ts = list(np.linspace(0.0, t_max, n + 1)[1:])
        elif spacing == "geometric":
            t_min = _num(block, "t_min", "times", positive=True)
            if t_min >= t_max:
                raise ConfigError("times.t_min", "must be below t_max")
            ts = list(np.geomspace(t_min, t_max, n))
        else:
            raise ConfigError("times.spacing", f"unknown spacing {spacing!r}")
        if block.get("include_zero", True):
            ts = [0.0] + ts
    if any(t < 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ConfigError("times", "output times must be nonnegative and strictly increasing")
    return [float(t) for t in ts]


def _check_initial(block, k):
    if not isinstance(block, dict):
        raise ConfigError("initial", "expected an object")
    fam = block.get("family")
    if fam not in FAMILIES:
        raise ConfigError("initial.family", f"expected one of {FAMILIES}, got {fam!r}")
    if fam == "bump":
        _num(block, "center", "initial", positive=True)
        _num(block, "width", "initial", positive=True)
    if fam == "tabulated" and not isinstance(block.get("path"), str):
        raise ConfigError("initial.path", "tabulated data need a CSV path")
    if fam == "neutral" and abs(k) != 1:
        raise ConfigError("initial.family", "the neutral mode r beta exists for |k| = 1 only")
    _num(block, "amplitude", "initial", required=False)
    if "project" in block and not isinstance(block["project"], bool):
        raise ConfigError("initial.project", "expected true/false")
    if block.get("project") and abs(k) != 1:
        raise ConfigError("initial.project", "the neutral-mode projection applies to |k| = 1 only")


def _check_diagnostics(block):
    if not isinstance(block, dict):
        raise ConfigError("diagnostics", "expected an object")
    delta = _num(block, "delta", "diagnostics", positive=True)
    if not delta < 0.5:
        raise ConfigError("diagnostics.delta", "must lie in (0, 1/2)")
    dmp = block.get("damping")
    if dmp is not None:
        if "window" in dmp:
            _band(dmp["window"], "diagnostics.damping.window")
        for name, band in dmp.get("bands", {}).items():
            if name not in ("psi_norm", "rur_norm", "rutheta_norm"):
                raise ConfigError(f"diagnostics.damping.bands.{name}", "unknown norm")
            _band(band, f"diagnostics.damping.bands.{name}")
    dep = block.get("depletion")
    if dep is not None:
        if "r_window" in dep:
            _band(dep["r_window"], "diagnostics.depletion.r_window")
        for key in ("steady_band", "initial_band"):
            if key in dep:
                _band(dep[key], f"diagnostics.depletion.{key}")
    drift = block.get("drift")
    if drift is not None:
        for key in ("l2_max", "beta_norm_max", "momentum_max"):
            if key in drift:
                _num(drift, key, "diagnostics.drift", positive=True)


@dataclass
class RunConfig:
    raw: dict
    times: list

    @property
    def k(self):
        return self.raw["k"]

    @property
    def engine(self):
        return self.raw["engine"]

    @property
    def name(self):
        return self.raw["name"]

    @property
    def diagnostics(self):
        return self.raw["diagnostics"]

    def hash(self):
        """sha256 of the canonical JSON of everything except the output location."""
        body = {k: v for k, v in self.raw.items() if k != "output"}
        return hashlib.sha256(json.dumps(body, sort_keys=True, default=float).encode()).hexdigest()

    def sub_hash(self, *keys):
        body = {k: self.raw.get(k) for k in keys}
        return hashlib.sha256(json.dumps(body, sort_keys=True, default=float).encode()).hexdigest()[:16]

    def build_vortex(self):
        return vortex_from_config(self.raw["vortex"])

    def build_grid(self):
        return grid_from_config(self.raw["grid"])

    def build_initial(self, v, grid):
        blk = self.raw["initial"]
        k = self.k
        r = grid.nodes
        amp = float(blk.get("amplitude", 1.0))
        fam = blk["family"]
        if fam == "bump":
            c, w = float(blk["center"]), float(blk["width"])
            vals = (r / c) ** abs(k) * np.exp(-(((r**2 - c**2) / (2 * c * w)) ** 2))
        elif fam == "power_gauss":
            vals = r ** abs(k) * np.exp(-(r**2))
        elif fam == "neutral":
            vals = r * v.beta(r)
        else:
            data = np.atleast_2d(np.genfromtxt(blk["path"], delimiter=",", comments="#"))
            im = data[:, 2] if data.shape[1] > 2 else np.zeros(data.shape[0])
            vals = np.zeros(r.size, complex)
            inside = (r >= data[0, 0]) & (r <= data[-1, 0])
            vals[inside] = CubicSpline(data[:, 0], data[:, 1])(r[inside]) + 1j * CubicSpline(data[:, 0], im)(r[inside])
        om = ModeField(k, amp * vals, grid)
        if blk.get("project"):
            from .evolution import project_orthogonal
            om = project_orthogonal(v, om)
        return om


def validate_config(cfg):
    """Fill defaults and check every field; raises ConfigError naming the field."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "expected a JSON object")
    raw = _merge(DEFAULTS, cfg)
    if "k" not in raw:
        raise ConfigError("k", "missing")
    k = raw["k"]
    if isinstance(k, bool) or not isinstance(k, int):
        raise ConfigError("k", f"expected an integer, got {k!r}")
    if k == 0:
        raise ConfigError("k", "k = 0 rejected: we restrict to k ≠ 0 (the radial mean is time independent)")
    if raw.get("engine") not in ENGINES:
        raise ConfigError("engine", f"expected one of {ENGINES}, got {raw.get('engine')!r}")
    if raw["engine"] == "k1_oracle" and abs(k) != 1:
        raise ConfigError("engine", "the k1_oracle engine needs |k| = 1")
    vb = raw["vortex"]
    if vb.get("type") == "gaussian":
        _num(vb, "lambda", "vortex", positive=True)
        _num(vb, "L", "vortex", positive=True)
    elif vb.get("type") == "tabulated":
        if not isinstance(vb.get("path"), str):
            raise ConfigError("vortex.path", "tabulated vortex needs a CSV path")
    else:
        raise ConfigError("vortex.type", f"expected 'gaussian' or 'tabulated', got {vb.get('type')!r}")
    gb = raw["grid"]
    r_min = _num(gb, "r_min", "grid", positive=True)
    r_max = _num(gb, "r_max", "grid", positive=True)
    if r_min >= r_max:
        raise ConfigError("grid.r_max", "must exceed r_min")
    if _num(gb, "n", "grid", integer=True) < 16:
        raise ConfigError("grid.n", "need at least 16 nodes")
    if gb.get("law") not in GRID_LAWS:
        raise ConfigError("grid.law", f"expected one of {GRID_LAWS}")
    _check_initial(raw.get("initial"), k)
    if "times" not in raw:
        raise ConfigError("times", "missing")
    times = _time_grid(raw["times"])
    ts = raw["timestep"]
    _num(ts, "C", "timestep", positive=True)
    _num(ts, "dt", "timestep", positive=True, required=False)
    cb = raw["contour"]
    _num(cb, "eps", "contour", positive=True)
    _num(cb, "alpha", "contour", positive=True)
    _num(cb, "R_delta", "contour", positive=True)
    _num(cb, "c_nodes", "contour", positive=True, integer=True, required=False)
    _check_diagnostics(raw["diagnostics"])
    if not isinstance(raw["deterministic"], bool):
        raise ConfigError("deterministic", "expected true/false")
    if "output" in raw and not isinstance(raw["output"], str):
        raise ConfigError("output", "expected a directory name")
    return RunConfig(raw, times)


def load_config(path):
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return validate_config(cfg)
