import json
import os

import pytest
from click.testing import CliRunner

from vortexdamp.cli import main
from vortexdamp.config import ConfigError, validate_config

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def small(cfg, n=512):
    cfg = dict(cfg)
    cfg["grid"] = {"r_min": 1e-4, "r_max": 40.0, "n": n, "law": "geometric"}
    return cfg


def write(tmp_path, name, cfg):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_k_zero_rejected():
    with pytest.raises(ConfigError, match="we restrict to k ≠ 0"):
        validate_config({"k": 0, "engine": "timestep", "initial": {"family": "power_gauss"},
                         "times": {"t_max": 1, "n": 2}})


@pytest.mark.parametrize("patch,field", [
    ({"engine": "spectral"}, "engine"),
    ({"initial": {"family": "bump", "center": 1.0}}, "initial.width"),
    ({"grid": {"n": 8}}, "grid.n"),
    ({"times": {"t_out": [1.0, 0.5]}}, "times"),
    ({"diagnostics": {"delta": 0.7}}, "diagnostics.delta"),
    ({"k": 2, "engine": "k1_oracle"}, "engine"),
    ({"vortex": {"type": "gaussian", "lambda": -1}}, "vortex.lambda"),
])
def test_schema_errors_name_the_field(patch, field):
    cfg = {"k": 1, "engine": "timestep", "initial": {"family": "power_gauss"}, "times": {"t_max": 1, "n": 2}}
    cfg.update(patch)
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert exc.value.field == field


def test_hash_ignores_output_location():
    base = {"k": 1, "engine": "timestep", "initial": {"family": "power_gauss"}, "times": {"t_max": 1, "n": 2}}
    a = validate_config(dict(base, output="x")).hash()
    b = validate_config(dict(base, output="y")).hash()
    c = validate_config(dict(base, k=-1)).hash()
    assert a == b != c


def test_steady_config(tmp_path):
    with open(os.path.join(CONFIGS, "steady_k1.json")) as fh:
        cfg = json.load(fh)
    res = CliRunner().invoke(main, ["run", write(tmp_path, "s", cfg), "--out", str(tmp_path / "rec")])
    assert res.exit_code == 0, res.output
    man = json.loads((tmp_path / "rec" / "manifest.json").read_text())
    assert man["reports"]["drift"]["values"]["l2"] <= 1e-6
    assert len(man["config_hash"]) == 64
    assert json.loads((tmp_path / "rec" / "report.json").read_text())["config_hash"] == man["config_hash"]


def test_failed_band_gives_nonzero_exit(tmp_path):
    cfg = small({"name": "d", "k": 2, "engine": "timestep", "initial": {"family": "power_gauss"},
                 "times": {"t_min": 2.0, "t_max": 40.0, "n": 12, "spacing": "geometric"},
                 "diagnostics": {"delta": 0.1, "damping": {"window": [4, 40], "bands": {"psi_norm": [5, 6]}}}})
    res = CliRunner().invoke(main, ["run", write(tmp_path, "d", cfg), "--out", str(tmp_path / "rec")])
    assert res.exit_code == 1 and "FAIL" in res.output
    header = (tmp_path / "rec" / "damping.csv").read_text().splitlines()[0]
    assert header == "t,psi_norm,rur_norm,rutheta_norm"


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("VORTEXDAMP_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg = small({"name": "e", "k": 3, "engine": "passive", "initial": {"family": "power_gauss"},
                 "times": {"t_out": [0.0, 1.0]}})
    res = CliRunner().invoke(main, ["--threads", "1", "run", write(tmp_path, "e", cfg)])
    assert res.exit_code == 0, res.output
    (rec,) = os.listdir(tmp_path / "root")
    assert rec.startswith("e-")


def test_determinism(tmp_path):
    cfg = small({"name": "det", "k": 2, "engine": "timestep", "initial": {"family": "bump", "center": 1.0,
                                                                            "width": 0.5},
                 "times": {"t_out": [0.0, 2.0]}})
    p = write(tmp_path, "det", cfg)
    for d in ("a", "b"):
        assert CliRunner().invoke(main, ["run", p, "--out", str(tmp_path / d)]).exit_code == 0
    assert (tmp_path / "a" / "snapshots.csv").read_bytes() == (tmp_path / "b" / "snapshots.csv").read_bytes()


def test_compare(tmp_path):
    common = {"k": 1, "initial": {"family": "bump", "center": 1.0, "width": 0.5, "project": True},
              "times": {"t_out": [0.0, 10.0]}}
    runner = CliRunner()
    for eng in ("timestep", "k1_oracle"):
        p = write(tmp_path, eng, small(dict(common, engine=eng, name=eng), 1024))
        assert runner.invoke(main, ["run", p, "--out", str(tmp_path / eng)]).exit_code == 0
    res = runner.invoke(main, ["compare", str(tmp_path / "timestep"), str(tmp_path / "k1_oracle")])
    assert res.exit_code == 0, res.output
    rep = json.loads(res.output)
    assert rep["relative_l2"]["10.0"] <= 1e-3
    same = json.loads(runner.invoke(main, ["compare", str(tmp_path / "timestep"), str(tmp_path / "timestep")]).output)
    assert same["max_relative_l2"] == 0.0
    other = small(dict(common, engine="timestep", name="o", k=-1), 1024)
    other["initial"] = dict(common["initial"])
    p = write(tmp_path, "o", other)
    runner.invoke(main, ["run", p, "--out", str(tmp_path / "o")])
    res = runner.invoke(main, ["compare", str(tmp_path / "timestep"), str(tmp_path / "o")])
    assert res.exit_code != 0 and "incompatible" in res.output


def test_validate_vortex(tmp_path):
    res = CliRunner().invoke(main, ["validate-vortex", os.path.join(CONFIGS, "steady_k1.json")])
    assert res.exit_code == 0 and "vortex ok" in res.output
    import numpy as np
    r = np.linspace(0, 40, 2000)
    csv = tmp_path / "om.csv"
    np.savetxt(csv, np.column_stack([r, (1 + r**2) ** -2]), delimiter=",")
    cfg = {"k": 1, "engine": "timestep", "initial": {"family": "power_gauss"}, "times": {"t_max": 1, "n": 2},
           "vortex": {"type": "tabulated", "path": str(csv)}}
    res = CliRunner().invoke(main, ["validate-vortex", write(tmp_path, "bad", cfg)])
    assert res.exit_code != 0 and "decay" in res.output


def test_tabulated_initial_data(tmp_path):
    import numpy as np
    r = np.geomspace(1e-4, 40, 3000)
    csv = tmp_path / "w.csv"
    np.savetxt(csv, np.column_stack([r, r**2 * np.exp(-r**2), 0 * r]), delimiter=",")
    a = validate_config(small({"k": 2, "engine": "timestep", "initial": {"family": "tabulated", "path": str(csv)},
                               "times": {"t_max": 1, "n": 1}}))
    b = validate_config(small({"k": 2, "engine": "timestep", "initial": {"family": "power_gauss"},
                               "times": {"t_max": 1, "n": 1}}))
    v = a.build_vortex()
    g = a.build_grid()
    assert np.max(np.abs(a.build_initial(v, g).values - b.build_initial(v, g).values)) < 1e-6
