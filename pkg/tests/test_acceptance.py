"""Acceptance suite: one PASS/FAIL line per criterion, printed in the pytest summary.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines appear under
the "acceptance criteria" heading at the end of the report.
"""

import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from uphill import cli
from uphill.dynamics import (
    CanonicalChart,
    chart_divergence,
    integrate_orbit,
    jacobi_residual,
    liouville_residual,
    poisson_velocity,
    rigid_body,
    rigid_body_chart,
    to_canonical,
    topological_residual,
)
from uphill.entropy import entropy_production_direct, entropy_production_fisher, sigma_entropy
from uphill.errors import SolverFault
from uphill.fokker_planck import (
    DensityField2D,
    Grid2D,
    NoiseSpec,
    SolverConfig,
    chart_grid,
    flat_f_density,
    fp_solve,
)
from uphill.magnetosphere import DipoleGeometry, MagnetoConfig, magneto_solve, moments
from uphill.sde import ParticleEnsemble, compare_to_fp, em_step, run_ensemble

GOLDEN = Path(__file__).parent / "golden"


def record(log, number, title, checks, elapsed, limit=None):
    """``checks`` maps a description to ``(passed, measured)``."""
    timing_ok = limit is None or elapsed < limit
    passed = all(ok for ok, _ in checks.values()) and timing_ok
    parts = [f"{name}={value}" + ("" if ok else " [x]") for name, (ok, value) in checks.items()]
    budget = f"{elapsed:.1f}s" + (f" (limit {limit:g}s)" if limit else "")
    line = f"criterion {number} {title}: {'PASS' if passed else 'FAIL'} | " + "; ".join(parts) + f" | {budget}"
    log.append(line)
    print(line)
    return passed


def fmt(x):
    return f"{x:.3g}"


# shared runs --------------------------------------------------------------


@lru_cache(maxsize=None)
def rigid_body_run():
    chart = rigid_body_chart()
    grid = chart_grid(chart, 128, 128)
    start = time.perf_counter()
    snaps, trace = fp_solve(flat_f_density(grid), chart, NoiseSpec(0.1, 0.1), SolverConfig(t_end=20.0))
    return chart, grid, snaps, trace, time.perf_counter() - start


@lru_cache(maxsize=None)
def magnetosphere_run():
    geom = DipoleGeometry()
    start = time.perf_counter()
    snaps, trace = magneto_solve(MagnetoConfig(), geom)
    return geom, snaps, trace, time.perf_counter() - start


# criteria ------------------------------------------------------------------


def test_criterion_1_structural_identities(acceptance_log):
    start = time.perf_counter()
    pts = np.random.default_rng(1).uniform(-2, 2, size=(1000, 3))
    worst_topo, worst_jacobi, worst_liouville = 0.0, 0.0, 0.0
    for distorted in (False, True):
        sys = rigid_body(distorted=distorted)
        scale = np.linalg.norm(sys.kernel(pts), axis=-1) * np.linalg.norm(poisson_velocity(sys, pts), axis=-1)
        topo = np.abs(topological_residual(sys, pts)) / np.where(scale > 0, scale, 1.0)
        worst_topo = max(worst_topo, topo.max())
        worst_jacobi = max(worst_jacobi, np.abs(jacobi_residual(sys, pts)).max())
        # relative to the size of the flux whose divergence is taken
        flux = np.abs(poisson_velocity(sys, pts) / sys.eval_lambda(pts)[:, None]).max()
        worst_liouville = max(worst_liouville, np.abs(liouville_residual(sys, pts)).max() / flux)
    h = rigid_body().fd_step
    elapsed = time.perf_counter() - start
    ok = record(acceptance_log, 1, "structural identities", {
        "max topological (rel)": (worst_topo <= 1e-12, fmt(worst_topo)),
        f"max jacobi (h^2={h * h:.1e})": (worst_jacobi <= h * h, fmt(worst_jacobi)),
        "max liouville (rel)": (worst_liouville <= h * h, fmt(worst_liouville)),
    }, elapsed, limit=1.0)
    assert ok


def test_criterion_2_chart_consistency(acceptance_log):
    start = time.perf_counter()
    chart = rigid_body_chart()
    dt, steps = 1e-3, 4000
    flat = integrate_orbit(chart, [0.3, 0.2], dt, steps)
    full = integrate_orbit(rigid_body(distorted=True), chart.lift(0.3, 0.2), dt, steps)
    _, chi, z = to_canonical(full.points)
    gap = np.max(np.hypot(chi - flat.points[:, 0], z - flat.points[:, 1]))
    # an orbit around the centre crosses z = 0 upward once per revolution
    z_path = flat.points[:, 1]
    up = np.nonzero((z_path[:-1] < 0) & (z_path[1:] >= 0))[0]
    revolved = len(up) >= 1 and flat.t[up[0]] < flat.t[-1]
    pts = np.random.default_rng(2)
    cc, zz = pts.uniform(-0.95, 0.95, 1000), pts.uniform(-1.45, 1.45, 1000)
    d1 = np.abs(chart_divergence(chart, cc, zz, h=1e-3)).max()
    d2 = np.abs(chart_divergence(chart, cc, zz, h=5e-4)).max()
    elapsed = time.perf_counter() - start
    ok = record(acceptance_log, 2, "chart consistency", {
        "orbit gap": (gap < 1e-6 and revolved and not flat.truncated, fmt(gap)),
        "div(h=1e-3)": (d1 <= 1e3 * 1e-6, fmt(d1)),
        "div ratio h/(h/2)": (3.0 < d1 / d2 < 5.0, fmt(d1 / d2)),
    }, elapsed, limit=5.0)
    assert ok


def test_criterion_3_second_law(acceptance_log):
    chart, grid, snaps, trace, elapsed = rigid_body_run()
    sigma, tilde = trace.sigma_entropy, trace.tilde_entropy
    sf = trace.entropy_production_fisher
    budget = np.max(np.abs(trace.entropy_rate() - trace.entropy_production_direct - trace.entropy_flow)) / sf.max()
    final = snaps[-1][1].values
    flat = np.max(np.abs(final - final.mean())) / final.mean()
    # Cartesian density f = P J and lambda = 1/J, so f lambda is P itself and this
    # line repeats the flatness measurement in the form the criterion states it
    jac = CanonicalChart.jacobian(grid.mesh()[1])
    f_lambda = final * jac / jac
    f_lambda_spread = np.max(np.abs(f_lambda / f_lambda.mean() - 1.0))
    mass_drift = np.max(np.abs(trace.mass - trace.mass[0]))
    ok = record(acceptance_log, 3, "second law (rigid body, 128^2, t=20)", {
        "mass drift": (mass_drift <= 1e-12, fmt(mass_drift)),
        "min sigma_fisher": (sf.min() >= 0, fmt(sf.min())),
        "min dSigma": (np.diff(sigma).min() >= -1e-9, fmt(np.diff(sigma).min())),
        "S~ end-start": (tilde[-1] < tilde[0], fmt(tilde[-1] - tilde[0])),
        "budget/max sigma": (budget <= 0.05, fmt(budget)),
        "flatness": (flat < 0.01, fmt(flat)),
        "f*lambda spread": (f_lambda_spread < 0.01, fmt(f_lambda_spread)),
    }, elapsed, limit=60.0)
    assert ok


def test_criterion_4_production_equivalence(acceptance_log):
    start = time.perf_counter()
    _, _, _, rb, _ = rigid_body_run()
    _, _, mg, _ = magnetosphere_run()

    def worst(trace, first):
        sd, sf = trace.entropy_production_direct, trace.entropy_production_fisher
        use = (np.asarray(trace.excluded_mass) < 1e-6) & (sf > 0)
        use[:first] = False
        return np.max(np.abs(sd[use] - sf[use]) / sf[use]), int(use.sum())

    rb_gap, rb_n = worst(rb, 0)
    # the Maxwellian start violates the no-flux condition; rows from the first step on
    mg_gap, mg_n = worst(mg, 1)
    mg_initial = abs(mg.entropy_production_direct[0] / mg.entropy_production_fisher[0] - 1.0)
    ok = record(acceptance_log, 4, "direct vs Fisher entropy production", {
        f"rigid body ({rb_n} rows)": (rb_gap <= 0.02, fmt(rb_gap)),
        f"magnetosphere t>0 ({mg_n} rows)": (mg_gap <= 0.02, fmt(mg_gap)),
        "magnetosphere t=0 (not judged)": (True, fmt(mg_initial)),
    }, time.perf_counter() - start)
    assert ok


def test_criterion_5_oracle_equivalence(acceptance_log):
    start = time.perf_counter()
    chart = rigid_body_chart()
    grid = chart_grid(chart, 128, 128)
    noise = NoiseSpec(0.1, 0.1)
    P0 = flat_f_density(grid)
    times = [2.0, 5.0, 10.0]
    snaps, _ = fp_solve(P0, chart, noise, SolverConfig(t_end=10.0, snapshot_every=1.0))
    snap = {t: P for t, P in snaps if t in times}
    coarse = grid.coarsen(16, 16)
    _, hists = run_ensemble(ParticleEnsemble.from_density(P0, 100_000, 1), chart, noise, 0.005, times, coarse)
    l1 = compare_to_fp(hists, snap, times)
    # replay to the first comparison time with the same seed
    _, replay = run_ensemble(ParticleEnsemble.from_density(P0, 100_000, 1), chart, noise, 0.005, [2.0], coarse)
    same = np.array_equal(replay[2.0].values, hists[2.0].values)
    elapsed = time.perf_counter() - start
    checks = {f"L1(t={t:g})": (l1[t] < 0.05, fmt(l1[t])) for t in times}
    checks["replay bitwise"] = (same, same)
    ok = record(acceptance_log, 5, "Fokker-Planck vs particles (N=1e5, 8x8 bins)", checks, elapsed, limit=120.0)
    assert ok


def test_criterion_6_analytic_anchors(acceptance_log):
    start = time.perf_counter()
    g = Grid2D(16, 1024, (-1, 1), (-8, 8))
    unit = DensityField2D.from_function(g, lambda chi, z: np.exp(-0.5 * z * z))
    gauss_entropy = sigma_entropy(unit) - np.log(2.0)

    def h_zero(chi, z):
        return np.zeros(np.broadcast(chi, z).shape)

    flat = CanonicalChart(10.0, h_zero, 1.0, 4.0, grad=lambda chi, z: (h_zero(chi, z), h_zero(chi, z)))
    grid = chart_grid(flat, 256, 256)
    s0 = 0.15
    P0 = DensityField2D.from_function(grid, lambda chi, z: np.exp(-0.5 * z * z / s0 ** 2))
    noise = NoiseSpec(0.0, 0.2)
    snaps, _ = fp_solve(P0, flat, noise, SolverConfig(t_end=1.0, trace_every=0.5, wall_layer=0.0))

    def var(P):
        return float(np.sum(P.values.sum(axis=0) * grid.dchi * grid.z_centers ** 2) * grid.dz)

    fp_growth = (var(snaps[-1][1]) - var(P0)) / 0.2 - 1.0
    n = 100_000
    ens = ParticleEnsemble(np.zeros(n), np.zeros(n), 3, (-1.0, 1.0), (-4.0, 4.0))
    for _ in range(100):
        ens = em_step(ens, flat, noise, 0.01)
    sde_growth = np.var(ens.z) / 0.2 - 1.0

    s = 0.5
    gz = Grid2D(8, 512, (-1, 1), (-4, 4))
    P = DensityField2D.from_function(gz, lambda chi, z: np.exp(-0.5 * z * z / s ** 2))
    expected = 0.5 * 0.2 / s ** 2
    sd = entropy_production_direct(P, (0.1, 0.2)) / expected - 1.0
    sf = entropy_production_fisher(P, (0.1, 0.2)) / expected - 1.0
    elapsed = time.perf_counter() - start
    ok = record(acceptance_log, 6, "analytic anchors", {
        "Gaussian entropy": (abs(gauss_entropy - 1.418939) <= 1e-3, f"{gauss_entropy:.6f}"),
        "FP variance rel err": (abs(fp_growth) <= 0.03, fmt(fp_growth)),
        "SDE variance rel err": (abs(sde_growth) <= 0.03, fmt(sde_growth)),
        "sigma direct rel err": (abs(sd) <= 0.02, fmt(sd)),
        "sigma Fisher rel err": (abs(sf) <= 0.02, fmt(sf)),
    }, elapsed)
    assert ok


def test_criterion_7_magnetosphere(acceptance_log):
    geom, snaps, trace, elapsed = magnetosphere_run()
    sigma, tilde, sf = trace.sigma_entropy, trace.tilde_entropy, trace.entropy_production_fisher
    first, last = snaps[0][1], snaps[-1][1]
    mu_drift = np.max(np.abs(last.mu_marginal() - first.mu_marginal()))
    v_drift = np.max(np.abs(last.v_marginal() - first.v_marginal()))
    maps = moments(last, geom, np.array([1.5, 3.0]), np.zeros(2))
    b_ratio = maps.B[0] / maps.B[1]
    n_err = maps.density[0] / maps.density[1] / b_ratio - 1.0
    a_err = maps.anisotropy[0] / maps.anisotropy[1] / b_ratio - 1.0
    ok = record(acceptance_log, 7, "magnetosphere (Maxwellian start, t=30)", {
        "min dSigma": (np.diff(sigma).min() >= -1e-9, fmt(np.diff(sigma).min())),
        "S~ end-start": (tilde[-1] < tilde[0], fmt(tilde[-1] - tilde[0])),
        "min sigma": (sf.min() >= 0, fmt(sf.min())),
        "mu marginal drift": (mu_drift <= 1e-14, fmt(mu_drift)),
        "v marginal drift": (v_drift <= 1e-14, fmt(v_drift)),
        "n ratio / B ratio - 1": (abs(n_err) <= 0.01, fmt(n_err)),
        "anisotropy ratio / B ratio - 1": (abs(a_err) <= 0.01, fmt(a_err)),
    }, elapsed, limit=60.0)
    assert ok


def test_criterion_8_cli(acceptance_log, tmp_path, monkeypatch, capsys):
    start = time.perf_counter()
    identical = True
    for name, experiment in (("rigid_body_small", "rigid-body"), ("fp_vs_sde_small", "fp-vs-sde"),
                             ("magnetosphere_small", "magnetosphere")):
        out = tmp_path / name
        code = cli.main([experiment, "--config", str(GOLDEN / f"{name}.ini"), "--out", str(out)])
        identical &= code == 0
        for ref in (GOLDEN / name).glob("*.csv"):
            identical &= (out / ref.name).read_bytes() == ref.read_bytes()
    small = str(GOLDEN / "rigid_body_small.ini")
    codes = {
        "ok": cli.main(["rigid-body", "--config", small, "--out", str(tmp_path / "a")]),
        "checks": cli.main(["rigid-body", "--config", small, "--out", str(tmp_path / "b"),
                            "--override", "flatness_tol=0.01"]),
        "config": cli.main(["rigid-body", "--out", str(tmp_path / "c"), "--override", "bogus=1"]),
    }

    def broken(*args, **kwargs):
        raise SolverFault("negative density")

    monkeypatch.setattr(cli, "fp_solve", broken)
    codes["fault"] = cli.main(["rigid-body", "--config", small, "--out", str(tmp_path / "d")])
    capsys.readouterr()
    expected = {"ok": 0, "checks": 1, "config": 2, "fault": 3}
    no_output = not (tmp_path / "c").exists()
    elapsed = time.perf_counter() - start
    ok = record(acceptance_log, 8, "CLI golden files and exit codes", {
        "golden CSV bytes": (identical, identical),
        "exit codes": (codes == expected and no_output, ",".join(f"{k}={v}" for k, v in codes.items())),
    }, elapsed)
    assert ok
