"""Command-line scenario runner: run, compare, validate-vortex."""
import json
import os
import platform
import sys
import time

import click
import numpy as np
import scipy

from . import __version__, _kernels
from .biot_savart import solve_streamfunction_kernel
from .config import ConfigError, load_config
from .contour import evolve_contour, make_plan, resolvent_sweep
from .diagnostics import (check_band, damping_report, depletion_report, scattering_profile, write_summary,
                          WindowError)
from .evolution import (EvolutionRun, EvolutionState, EvolveOptions, beta_norm, evolve, load_snapshots, momentum,
                        save_run)
from .grid import RadialGrid
from .k1_oracle import k1_evolve
from .vortex import VortexValidationError, validate_vortex

OUTPUT_ENV = "VORTEXDAMP_OUTPUT_ROOT"


def output_root():
    return os.environ.get(OUTPUT_ENV, os.path.join(os.getcwd(), "runs"))


def _states_from_pairs(v, pairs):
    states = []
    for t, om, psi in pairs:
        diag = {"beta_norm": beta_norm(om, v.beta(om.r))}
        if abs(om.k) == 1:
            diag["momentum"] = momentum(om)
        states.append(EvolutionState(t, om, psi, diag))
    return states


def run_engine(cfg, v, omega_in):
    """Execute the configured engine; returns (list of EvolutionState, meta)."""
    eng = cfg.engine
    k = cfg.k
    ts = cfg.raw["timestep"]
    if eng in ("timestep", "passive"):
        opts = EvolveOptions(C=ts["C"], dt=ts.get("dt"), passive=(eng == "passive"))
        run = evolve(v, k, omega_in, cfg.times, opts)
        return run, dict(run.meta)
    t0 = time.perf_counter()
    if eng == "k1_oracle":
        states = _states_from_pairs(v, k1_evolve(v, omega_in, cfg.times))
        return EvolutionRun(states, meta={"engine": "k1_oracle"}), {"wall_time": time.perf_counter() - t0}
    cb = cfg.raw["contour"]
    plan = make_plan(v, k, cb["eps"], t_max=max(cfg.times), alpha=cb["alpha"], R_delta=cb["R_delta"],
                     c_nodes=cb.get("c_nodes"))
    sweep = resolvent_sweep(v, k, omega_in, plan)
    pairs = []
    for t in cfg.times:
        om = evolve_contour(v, k, omega_in, t, plan, sweep)
        pairs.append((t, om, solve_streamfunction_kernel(k, om)))
    meta = {"engine": "contour", "plan": plan.to_config(), "sweep": {k_: v_ for k_, v_ in sweep.meta.items()},
            "wall_time": time.perf_counter() - t0}
    return EvolutionRun(_states_from_pairs(v, pairs), meta=meta), meta


def _l2_drift(states, omega_in):
    g = omega_in.grid
    ref = np.sqrt(g.integrate(np.abs(omega_in.values) ** 2))
    if ref == 0:
        return 0.0
    return float(max(np.sqrt(g.integrate(np.abs(s.omega.values - omega_in.values) ** 2)) for s in states) / ref)


def evaluate_diagnostics(cfg, v, states, omega_in, outdir):
    """Run every report requested in the diagnostics block; returns (summary dict, all bands passed)."""
    dg = cfg.diagnostics
    delta = dg["delta"]
    k = cfg.k
    summary = {}
    ok = True
    drift = dg.get("drift")
    if drift is not None:
        hist_beta = [s.diagnostics.get("beta_norm") for s in states]
        b0 = beta_norm(omega_in, v.beta(omega_in.r))
        vals = {"l2": _l2_drift(states, omega_in),
                "beta_norm": float(max(abs(b / b0 - 1) for b in hist_beta)) if b0 > 0 else 0.0}
        if abs(k) == 1:
            m0 = momentum(omega_in)
            scale = float(omega_in.grid.integrate(np.abs(omega_in.values) * omega_in.r**2)) or 1.0
            vals["momentum"] = float(max(abs(s.diagnostics["momentum"] - m0) for s in states) / scale)
        flags = {}
        for key, val in vals.items():
            lim = drift.get(f"{key}_max")
            if lim is not None:
                flags[key] = bool(val <= lim)
        summary["drift"] = {"values": vals, "flags": flags}
        ok &= all(flags.values())
    dmp = dg.get("damping")
    if dmp is not None:
        rep = damping_report(v, k, states, delta, dmp.get("window"))
        rep.apply_bands(dmp.get("bands", {}))
        rep.to_csv(os.path.join(outdir, "damping.csv"))
        summary["damping"] = rep.summary()
        ok &= rep.passed
    dep = dg.get("depletion")
    if dep is not None:
        rep = depletion_report(v, k, states, tuple(dep.get("r_window", (1e-3, 1e-2))), dep.get("n_avg", 5),
                               omega_in=omega_in)
        rep.to_csv(os.path.join(outdir, "depletion.csv"))
        s = rep.summary()
        flags = {}
        if "steady_band" in dep:
            flags["steady"] = check_band(rep.steady_slope, dep["steady_band"])
        if "initial_band" in dep:
            flags["initial"] = check_band(rep.initial_slope, dep["initial_band"])
        s["flags"] = flags
        summary["depletion"] = s
        ok &= all(flags.values())
    sc = dg.get("scattering")
    if sc is not None:
        res = scattering_profile(v, states, delta, sc.get("n_pairs", 4))
        summary["scattering"] = {"t_pairs": res.t_pairs.tolist(), "cauchy_tail": res.cauchy_tail.tolist(),
                                 "decreasing": res.decreasing}
        if sc.get("require_decreasing", True):
            ok &= res.decreasing
    return summary, bool(ok)


def _versions():
    return {"vortexdamp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernels": _kernels.active.name}


def execute(config_path, out=None):
    """Run one config end to end; returns (outdir, passed)."""
    cfg = load_config(config_path)
    h = cfg.hash()
    outdir = out or os.path.join(output_root(), cfg.raw.get("output") or f"{cfg.name}-{h[:12]}")
    os.makedirs(outdir, exist_ok=True)
    v = cfg.build_vortex()
    grid = cfg.build_grid()
    omega_in = cfg.build_initial(v, grid)
    t0 = time.perf_counter()
    try:
        states, meta = run_engine(cfg, v, omega_in)
    except Exception as exc:
        raise click.ClickException(f"engine {cfg.engine!r} failed: {exc}") from exc
    wall = time.perf_counter() - t0
    try:
        summary, passed = evaluate_diagnostics(cfg, v, states, omega_in, outdir)
    except WindowError as exc:
        raise click.ClickException(f"diagnostics failed: {exc}") from exc
    extra = {"name": cfg.name, "engine": cfg.engine, "config": cfg.raw, "grid_hash": cfg.sub_hash("grid"),
             "data_hash": cfg.sub_hash("vortex", "grid", "k", "initial"), "versions": _versions(),
             "wall_time": wall, "engine_meta": meta, "passed": passed, "reports": summary}
    if cfg.raw["deterministic"]:
        extra["wall_time"] = None
        extra["engine_meta"] = {k: v_ for k, v_ in meta.items() if k != "wall_time"}
    save_run(states, outdir, config_hash=h, extra=extra)
    write_summary(os.path.join(outdir, "report.json"), {"config_hash": h, "passed": passed, **summary})
    return outdir, passed


def compare_records(dir_a, dir_b):
    """Relative L^2 differences at shared snapshot times of two run records."""
    mans = []
    for d in (dir_a, dir_b):
        with open(os.path.join(d, "manifest.json")) as fh:
            mans.append(json.load(fh))
    for key in ("k", "grid_hash", "data_hash"):
        if mans[0].get(key) != mans[1].get(key):
            raise click.ClickException(f"records are incompatible: {key} differs "
                                       f"({mans[0].get(key)} vs {mans[1].get(key)})")
    sa, sb = load_snapshots(dir_a), load_snapshots(dir_b)
    out = {}
    for t, (r, va) in sa.items():
        match = [tb for tb in sb if abs(tb - t) <= 1e-9 * max(1.0, abs(t))]
        if not match:
            continue
        rb, vb = sb[match[0]]
        if not np.array_equal(r, rb):
            raise click.ClickException(f"radial nodes differ at t = {t}")
        g = RadialGrid(r)
        ref = np.sqrt(g.integrate(np.abs(va) ** 2))
        diff = np.sqrt(g.integrate(np.abs(va - vb) ** 2))
        out[repr(t)] = float(diff / ref) if ref > 0 else float(diff)
    if not out:
        raise click.ClickException("records share no snapshot times")
    return {"a": dir_a, "b": dir_b, "config_hash_a": mans[0].get("config_hash"),
            "config_hash_b": mans[1].get("config_hash"), "relative_l2": out,
            "max_relative_l2": max(out.values())}


@click.group()
@click.option("--threads", type=int, default=None, help="Limit the numba thread pool.")
@click.version_option(__version__)
def main(threads):
    """Linearized Euler mode runs around a radial vortex."""
    if threads:
        _kernels.set_threads(threads)


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help=f"Output directory (default: ${OUTPUT_ENV}/<name>-<hash>).")
def run(config_path, out):
    """Execute a run config and write its record."""
    try:
        outdir, passed = execute(config_path, out)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"record: {outdir}")
    click.echo(f"bands: {'PASS' if passed else 'FAIL'}")
    if not passed:
        sys.exit(1)


@main.command()
@click.argument("record_a", type=click.Path(exists=True, file_okay=False))
@click.argument("record_b", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the summary JSON here.")
def compare(record_a, record_b, out):
    """Relative L^2 differences between two records at shared times."""
    rep = compare_records(record_a, record_b)
    text = json.dumps(rep, indent=2)
    if out:
        write_summary(out, rep)
    click.echo(text)


@main.command("validate-vortex")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def validate_vortex_cmd(config_path):
    """Check the background vortex of a config on its grid."""
    try:
        cfg = load_config(config_path)
        v = cfg.build_vortex()
    except (ConfigError, VortexValidationError) as exc:
        raise click.ClickException(str(exc)) from exc
    grid = cfg.build_grid()
    bad = validate_vortex(v, grid.nodes)
    res = float(np.max(np.abs(v.identity_residual(grid.nodes))))
    click.echo(f"u(0) = {v.u0:.12g}  beta(0) = {v.beta0:.12g}  identity residual = {res:.3e}")
    if bad:
        for item in bad:
            click.echo(f"violation: {item}")
        sys.exit(1)
    click.echo("vortex ok")


if __name__ == "__main__":  # pragma: no cover
    main()
