"""``simulate``: batch runner for the relaxation experiments.

Usage::

    simulate <experiment> [--config FILE] [--out DIR] [--seed N]
             [--override key=value]... [--particles N]

The config file holds flat ``key = value`` lines (INI syntax, no section
header needed). ``--override`` and the dedicated flags win over the file.

Exit status
-----------
0  run finished and every invariant check passed
1  run finished but at least one invariant check failed
2  invalid configuration or unwritable output path
3  numerical fault (unstable step or negative density)
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks as chk
from . import plotting
from .dynamics import rigid_body_chart
from .errors import ConfigurationError, SolverFault
from .fokker_planck import (
    DensityField2D,
    NoiseSpec,
    SolverConfig,
    chart_grid,
    flat_f_density,
    fp_solve,
    plan_time_step,
)
from .io import emit_field, emit_table, emit_trace, fmt
from .magnetosphere import DipoleGeometry, MagnetoConfig, magneto_solve, moments
from .magnetosphere import plan_time_step as plan_magneto_step
from .sde import ParticleEnsemble, coarsen_density, compare_to_fp, run_ensemble

log = logging.getLogger("uphill")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2, 3

_CHART_KEYS = {
    "inertia_x": 1.0,
    "inertia_y": 2.0,
    "inertia_z": 3.0,
    "c_value": 2.0,
    "chi_max": 1.0,
    "z_max": 1.5,
    "n_chi": 128,
    "n_z": 128,
    "d_chi": 0.1,
    "d_z": 0.1,
    "dt": 0.0,
    "trace_every": 0.01,
    "snapshot_every": 1.0,
    "wall_layer": 0.1,
    "initial": "flat-f",
}

DEFAULTS = {
    "rigid-body": {
        **_CHART_KEYS,
        "t_end": 20.0,
        "flatness_tol": 0.01,
        "budget_tol": 0.05,
        "equivalence_tol": 0.02,
    },
    "fp-vs-sde": {
        **_CHART_KEYS,
        "particles": 100000,
        "sde_dt": 0.005,
        "compare_times": "2,5,10",
        "hist_cells": 8,
        "l1_tol": 0.05,
    },
    "magnetosphere": {
        "moment": 1.0,
        "mass": 1.0,
        "psi_min": 0.2,
        "psi_max": 1.0,
        "n_psi": 128,
        "n_mu": 32,
        "n_v": 32,
        "mu_max": 8.0,
        "v_max": 4.0,
        "temperature": 1.0,
        "d_psi": 0.05,
        "t_end": 30.0,
        "dt": 0.0,
        "trace_every": 0.1,
        "snapshot_every": 5.0,
        "map_r_min": 0.8,
        "map_r_max": 5.5,
        "map_z_min": -2.5,
        "map_z_max": 2.5,
        "map_n_r": 96,
        "map_n_z": 96,
        "r_probe_inner": 1.5,
        "r_probe_outer": 3.0,
        "ratio_tol": 0.01,
    },
}
for _d in DEFAULTS.values():
    _d["seed"] = 0

_INITIAL = ("flat-f", "uniform")

EXIT_HELP = """exit status:
  0  all invariant checks passed
  1  at least one invariant check failed
  2  invalid configuration or unwritable output path
  3  numerical fault"""


def _coerce(key, raw, default):
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return str(raw).strip()


def read_config_file(path) -> dict:
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config file: {exc}") from None
    out = {}
    for section in parser.sections():
        out.update(parser[section])
    return out


def resolve_config(experiment, file_values=None, overrides=(), seed=None, particles=None) -> dict:
    """Merge defaults, file keys and command-line overrides; reject unknown keys."""
    if experiment not in DEFAULTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    defaults = DEFAULTS[experiment]
    merged = dict(file_values or {})
    tag = merged.pop("experiment", experiment).strip()
    if tag != experiment:
        raise ConfigurationError(f"config is for {tag!r}, not {experiment!r}")
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        merged[key.strip()] = value.strip()
    if seed is not None:
        merged["seed"] = str(seed)
    if particles is not None:
        if "particles" not in defaults:
            raise ConfigurationError(f"--particles does not apply to {experiment}")
        merged["particles"] = str(particles)
    unknown = sorted(set(merged) - set(defaults))
    if unknown:
        raise ConfigurationError(f"unknown config key(s) for {experiment}: {', '.join(unknown)}")
    cfg = dict(defaults)
    for key, raw in merged.items():
        cfg[key] = _coerce(key, raw, defaults[key])
    return cfg


def _chart_setup(cfg):
    if cfg["initial"] not in _INITIAL:
        raise ConfigurationError(f"initial must be one of {_INITIAL}")
    chart = rigid_body_chart((cfg["inertia_x"], cfg["inertia_y"], cfg["inertia_z"]), cfg["c_value"],
                             cfg["chi_max"], cfg["z_max"])
    grid = chart_grid(chart, cfg["n_chi"], cfg["n_z"])
    noise = NoiseSpec(cfg["d_chi"], cfg["d_z"])
    solver = SolverConfig(t_end=cfg["t_end"], dt=cfg["dt"] or None, trace_every=cfg["trace_every"],
                          snapshot_every=cfg["snapshot_every"], wall_layer=cfg["wall_layer"])
    return chart, grid, noise, solver


def _initial_density(cfg, grid):
    return flat_f_density(grid) if cfg["initial"] == "flat-f" else DensityField2D.uniform(grid)


def _compare_times(cfg):
    try:
        times = sorted(float(x) for x in cfg["compare_times"].split(",") if x.strip())
    except ValueError:
        raise ConfigurationError("compare_times must be a comma-separated list of numbers") from None
    if not times or times[0] <= 0:
        raise ConfigurationError("compare_times must be positive")
    for t in times:
        k = round(t / cfg["snapshot_every"])
        if abs(k * cfg["snapshot_every"] - t) > 1e-9 * t:
            raise ConfigurationError(f"compare time {t} is not a multiple of snapshot_every")
    return times


def validate(experiment, cfg):
    """Build every parameter object once so that bad values fail before any output is written."""
    if cfg["seed"] < 0:
        raise ConfigurationError("seed must be non-negative")
    if experiment == "fp-vs-sde":
        times = _compare_times(cfg)
        cfg = dict(cfg, t_end=times[-1])
        if cfg["particles"] < 1 or cfg["sde_dt"] <= 0 or cfg["hist_cells"] < 1:
            raise ConfigurationError("particles, sde_dt and hist_cells must be positive")
        if cfg["n_chi"] % cfg["hist_cells"] or cfg["n_z"] % cfg["hist_cells"]:
            raise ConfigurationError("hist_cells must divide n_chi and n_z")
    if experiment in ("rigid-body", "fp-vs-sde"):
        chart, grid, noise, solver = _chart_setup(cfg)
        plan_time_step(grid, chart, noise, solver)
    else:
        plan_magneto_step(_magneto_setup(cfg)[0])
    return cfg


def _magneto_setup(cfg):
    mcfg = MagnetoConfig(
        moment=cfg["moment"], mass=cfg["mass"], psi_bounds=(cfg["psi_min"], cfg["psi_max"]),
        n_psi=cfg["n_psi"], n_mu=cfg["n_mu"], n_v=cfg["n_v"], mu_max=cfg["mu_max"], v_max=cfg["v_max"],
        temperature=cfg["temperature"], d_psi=cfg["d_psi"], t_end=cfg["t_end"], dt=cfg["dt"] or None,
        trace_every=cfg["trace_every"], snapshot_every=cfg["snapshot_every"],
    )
    try:
        geom = DipoleGeometry(cfg["moment"], (cfg["map_r_min"], cfg["map_r_max"]),
                              (cfg["map_z_min"], cfg["map_z_max"]), cfg["map_n_r"], cfg["map_n_z"])
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    return mcfg, geom


def _tag(t):
    return f"{t:08.3f}"


def _write_config(cfg, out):
    lines = [f"{k} = {fmt(v) if isinstance(v, float) else v}" for k, v in sorted(cfg.items())]
    (out / "config_resolved.ini").write_text("\n".join(lines) + "\n")


def run_rigid_body(cfg, out: Path):
    chart, grid, noise, solver = _chart_setup(cfg)
    P0 = _initial_density(cfg, grid)
    log.info("rigid-body: %dx%d grid to t=%g", grid.n_chi, grid.n_z, solver.t_end)
    snapshots, trace = fp_solve(P0, chart, noise, solver)
    bounds = (*grid.chi_bounds, *grid.z_bounds)
    emit_trace(trace, out / "entropy_trace.csv")
    for t, P in snapshots:
        emit_field(P.values, bounds, out / f"density_t{_tag(t)}.csv")
    final = snapshots[-1][1].values
    # the Cartesian density times lambda is P itself, so final_flatness covers both
    results = chk.second_law_checks(trace, final, flatness_tol=cfg["flatness_tol"], budget_tol=cfg["budget_tol"],
                                    equivalence_tol=cfg["equivalence_tol"])
    plotting.plot_entropy_trace(trace, out / "entropy_trace.svg", "rigid body")
    plotting.plot_comparison(P0.values, final, bounds, out / "density_initial_final.svg",
                             ("t = 0", f"t = {snapshots[-1][0]:g}"))
    return results


def run_fp_vs_sde(cfg, out: Path):
    times = _compare_times(cfg)
    chart, grid, noise, solver = _chart_setup(cfg)
    P0 = _initial_density(cfg, grid)
    log.info("fp-vs-sde: solver to t=%g", solver.t_end)
    snapshots, trace = fp_solve(P0, chart, noise, solver)
    snap = {}
    for t, P in snapshots:
        for target in times:
            if abs(t - target) <= 1e-9 * target:
                snap[target] = P
    coarse = grid.coarsen(cfg["n_chi"] // cfg["hist_cells"], cfg["n_z"] // cfg["hist_cells"])
    log.info("fp-vs-sde: %d particles, seed %d", cfg["particles"], cfg["seed"])
    ens = ParticleEnsemble.from_density(P0, cfg["particles"], cfg["seed"])
    _, hists = run_ensemble(ens, chart, noise, cfg["sde_dt"], times, coarse, cfg["wall_layer"])
    l1 = compare_to_fp(hists, snap, times)

    bounds = (*grid.chi_bounds, *grid.z_bounds)
    emit_trace(trace, out / "entropy_trace.csv")
    rows = [(t, l1[t], cfg["l1_tol"], "PASS" if l1[t] <= cfg["l1_tol"] else "FAIL") for t in times]
    emit_table(("t", "l1", "threshold", "status"), rows, out / "l1_report.csv")
    for t in times:
        solver_coarse = coarsen_density(snap[t], coarse).values
        emit_field(snap[t].values, bounds, out / f"density_t{_tag(t)}.csv")
        emit_field(solver_coarse, bounds, out / f"solver_coarse_t{_tag(t)}.csv")
        emit_field(hists[t].values, bounds, out / f"histogram_t{_tag(t)}.csv")
        plotting.plot_comparison(solver_coarse, hists[t].values, bounds, out / f"comparison_t{_tag(t)}.svg")
    plotting.plot_entropy_trace(trace, out / "entropy_trace.svg", "solver run behind the particle comparison")
    return chk.oracle_checks(l1, cfg["l1_tol"])


def run_magnetosphere(cfg, out: Path):
    mcfg, geom = _magneto_setup(cfg)
    log.info("magnetosphere: %dx%dx%d to t=%g", mcfg.n_psi, mcfg.n_mu, mcfg.n_v, mcfg.t_end)
    snapshots, trace = magneto_solve(mcfg, geom)
    emit_trace(trace, out / "entropy_trace.csv")
    for t, state in snapshots:
        dv = state.spacing[2]
        emit_field(state.values.sum(axis=2) * dv, (*state.psi_bounds, *state.mu_bounds),
                   out / f"density_psi_mu_t{_tag(t)}.csv", axes=("psi", "mu"))
    results = chk.magneto_checks(snapshots, trace, geom, (cfg["r_probe_inner"], cfg["r_probe_outer"]),
                                 ratio_tol=cfg["ratio_tol"])
    map_bounds = (*geom.r_bounds, *geom.z_bounds)
    overlays = {"B": (geom.B, "white"), "psi": (geom.psi, "black")}
    for label, stamp in (("initial", snapshots[0]), ("final", snapshots[-1])):
        maps = moments(stamp[1], geom)
        for name, values in (("density", maps.density), ("t_perp", maps.t_perp), ("t_par", maps.t_par),
                             ("anisotropy", maps.anisotropy)):
            emit_field(values, map_bounds, out / f"{name}_{label}.csv", axes=("r", "z"))
            plotting.plot_heatmap(values, map_bounds, out / f"{name}_{label}.svg",
                                  title=f"{name}, t = {stamp[0]:g}", xlabel="r", ylabel="z", contours=overlays)
    plotting.plot_entropy_trace(trace, out / "entropy_trace.svg", "dipole magnetosphere")
    return results


RUNNERS = {"rigid-body": run_rigid_body, "fp-vs-sde": run_fp_vs_sde, "magnetosphere": run_magnetosphere}


def build_parser():
    p = argparse.ArgumentParser(prog="simulate", description="Run an entropy relaxation experiment.",
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog=EXIT_HELP)
    p.add_argument("experiment", choices=sorted(RUNNERS))
    p.add_argument("--config", type=Path, help="flat key = value file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, help="random seed (particle runs)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--particles", type=int, help="particle count for fp-vs-sde")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.experiment, file_values, args.override, args.seed, args.particles)
        cfg = validate(args.experiment, cfg)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_config(cfg, args.out)
    except OSError as exc:
        print(f"cannot write to {args.out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with np.errstate(over="raise", invalid="ignore"):
            results = RUNNERS[args.experiment](cfg, args.out)
        emit_table(("check", "value", "threshold", "status"), [c.row() for c in results], args.out / "checks.csv")
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFault, FloatingPointError) as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as exc:
        print(f"cannot write to {args.out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    failed = [c.name for c in results if not c.passed]
    status = "FAIL" if failed else "PASS"
    detail = f" ({', '.join(failed)})" if failed else ""
    print(f"{status} {args.experiment}: {len(results) - len(failed)}/{len(results)} checks passed{detail}")
    return EXIT_CHECKS if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
