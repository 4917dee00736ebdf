"""Post-run invariant checks reported by the command-line runner."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .magnetosphere import DipoleGeometry, MagnetoState, moments


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool

    def row(self):
        return (self.name, float(self.value), float(self.threshold), "PASS" if self.passed else "FAIL")


def _le(name, value, threshold):
    return Check(name, float(value), float(threshold), bool(value <= threshold))


def second_law_checks(trace, final_values=None, flatness_tol=0.01, budget_tol=0.05,
                      monotone_tol=1e-9, equivalence_tol=0.02, mass_tol=1e-12,
                      skip_initial=False) -> List[Check]:
    """Checks shared by both relaxation experiments.

    ``skip_initial`` leaves the first row out of the budget and of the
    direct/Fisher comparison. Both rely on the state satisfying the no-flux
    condition at the walls, which an arbitrary initial state need not; the
    entropy rate then jumps right after ``t = 0``.
    """
    sigma = trace.sigma_entropy
    tilde = trace.tilde_entropy
    sd = trace.entropy_production_direct
    sf = trace.entropy_production_fisher
    mass = trace.mass
    checks = [
        _le("mass_drift", np.max(np.abs(mass - mass[0])), mass_tol),
        Check("entropy_production_nonnegative", float(sf.min()), 0.0, bool(sf.min() >= 0.0)),
        Check("sigma_entropy_nondecreasing", float(np.min(np.diff(sigma))) if len(sigma) > 1 else 0.0,
              -monotone_tol, bool(len(sigma) < 2 or np.min(np.diff(sigma)) >= -monotone_tol)),
        Check("tilde_entropy_decreased", float(tilde[-1] - tilde[0]), 0.0, bool(tilde[-1] < tilde[0])),
    ]
    first = 1 if skip_initial else 0
    if len(sigma) - first >= 3:
        t = trace.t[first:]
        rate = np.gradient(sigma[first:], t, edge_order=2)
        budget = np.max(np.abs(rate - sd[first:] - trace.entropy_flow[first:])) / np.max(sf)
        checks.append(_le("entropy_budget_relative", budget, budget_tol))
    excluded = np.asarray(trace.excluded_mass)
    usable = (excluded < 1e-6) & (sf > 0)
    usable[:first] = False
    if usable.any():
        rel = np.max(np.abs(sd[usable] - sf[usable]) / sf[usable])
        checks.append(_le("production_forms_agree", rel, equivalence_tol))
    if final_values is not None:
        p = np.asarray(final_values)
        checks.append(_le("final_flatness", np.max(np.abs(p - p.mean())) / p.mean(), flatness_tol))
    return checks


def magneto_checks(snapshots, trace, geom: DipoleGeometry, r_probe=(1.5, 3.0), ratio_tol=0.01,
                   marginal_tol=1e-14) -> List[Check]:
    checks = second_law_checks(trace, skip_initial=True)
    first: MagnetoState = snapshots[0][1]
    last: MagnetoState = snapshots[-1][1]
    checks.append(_le("mu_marginal_drift", np.max(np.abs(last.mu_marginal() - first.mu_marginal())), marginal_tol))
    checks.append(_le("v_marginal_drift", np.max(np.abs(last.v_marginal() - first.v_marginal())), marginal_tol))
    r = np.asarray(r_probe, dtype=float)
    maps = moments(last, geom, r, np.zeros_like(r))
    b_ratio = maps.B[0] / maps.B[1]
    checks.append(_le("density_ratio_vs_B", abs(maps.density[0] / maps.density[1] / b_ratio - 1.0), ratio_tol))
    checks.append(_le("anisotropy_ratio_vs_B", abs(maps.anisotropy[0] / maps.anisotropy[1] / b_ratio - 1.0),
                      ratio_tol))
    return checks


def oracle_checks(l1: Dict[float, float], tol=0.05) -> List[Check]:
    return [_le(f"l1_t={t:g}", d, tol) for t, d in sorted(l1.items())]
