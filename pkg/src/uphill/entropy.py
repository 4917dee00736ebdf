"""Entropy diagnostics on the invariant measure.

Densities are any object with ``values`` (an n-dimensional array of cell
averages), ``cell_volume`` and ``spacing`` (cell widths per axis). Averages
``<g>`` are always ``sum(g P) * cell_volume``, i.e. taken on the invariant
measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from scipy.special import xlogy

__all__ = [
    "TRACE_COLUMNS",
    "EntropyTrace",
    "VelocityField",
    "log_floor",
    "sigma_entropy",
    "tilde_entropy",
    "entropy_production_direct",
    "entropy_production_fisher",
    "entropy_flow",
]

TRACE_COLUMNS = (
    "t",
    "sigma_entropy",
    "tilde_entropy",
    "entropy_production_direct",
    "entropy_production_fisher",
    "entropy_flow",
    "mass",
)

FLOOR_FRACTION = 1e-12


@dataclass
class EntropyTrace:
    """Time series of entropy diagnostics, one row per sample time."""

    rows: List[tuple] = field(default_factory=list)
    excluded_mass: List[float] = field(default_factory=list)
    dt: float = float("nan")

    def append(self, t, sigma, tilde, prod_direct, prod_fisher, flow, mass, excluded_mass=0.0):
        if self.rows and t <= self.rows[-1][0]:
            raise ValueError("trace rows must be time-ordered")
        self.rows.append(tuple(float(v) for v in (t, sigma, tilde, prod_direct, prod_fisher, flow, mass)))
        self.excluded_mass.append(float(excluded_mass))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        k = TRACE_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def __getattr__(self, name):
        if name in TRACE_COLUMNS:
            return self.column(name)
        raise AttributeError(name)

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))

    def entropy_rate(self) -> np.ndarray:
        """Centred-difference dSigma/dt, second-order one-sided at the ends."""
        return np.gradient(self.sigma_entropy, self.t, edge_order=2)


@dataclass
class VelocityField:
    """Cell-centred Fokker-Planck velocity plus outward normal values on the walls."""

    z_chi: np.ndarray
    z_z: np.ndarray
    walls: Dict[str, np.ndarray]


def _coeffs(noise) -> Sequence[float]:
    return noise.coefficients if hasattr(noise, "coefficients") else tuple(noise)


def log_floor(P):
    """``ln P`` with ``P`` clipped at ``1e-12`` of its mean; returns ``(lnP, floored_mask)``."""
    values = np.asarray(P.values, dtype=float)
    eps = FLOOR_FRACTION * values.mean()
    floored = values < eps
    return np.log(np.maximum(values, eps)), floored


def sigma_entropy(P) -> float:
    """``-sum P ln P dV_I``; empty cells contribute zero."""
    return float(-xlogy(P.values, P.values).sum() * P.cell_volume)


def tilde_entropy(P, jac, return_both: bool = False):
    """Entropy of ``f = P J`` on the Cartesian measure ``dV = dV_I / J``.

    Two routes: the direct sum ``-sum f ln f dV`` and ``Sigma - <ln J>``.
    ``return_both=True`` returns both for cross-checking.
    """
    jac = np.broadcast_to(np.asarray(jac, dtype=float), P.values.shape)
    if np.any(jac <= 0):
        raise ValueError("Jacobian must be positive")
    f = P.values * jac
    direct = float(-(xlogy(f, f) / jac).sum() * P.cell_volume)
    if not return_both:
        return direct
    split = sigma_entropy(P) - float((P.values * np.log(jac)).sum() * P.cell_volume)
    return direct, split


def _second_difference(a, axis, h):
    # mirror ghosts: zero normal gradient at walls
    padded = np.concatenate([np.take(a, [0], axis=axis), a, np.take(a, [-1], axis=axis)], axis=axis)
    n = a.shape[axis]
    lo = np.take(padded, np.arange(0, n), axis=axis)
    mid = np.take(padded, np.arange(1, n + 1), axis=axis)
    hi = np.take(padded, np.arange(2, n + 2), axis=axis)
    return (hi - 2.0 * mid + lo) / (h * h)


def _central_difference(a, axis, h):
    padded = np.concatenate([np.take(a, [0], axis=axis), a, np.take(a, [-1], axis=axis)], axis=axis)
    n = a.shape[axis]
    lo = np.take(padded, np.arange(0, n), axis=axis)
    hi = np.take(padded, np.arange(2, n + 2), axis=axis)
    return (hi - lo) / (2.0 * h)


def entropy_production_direct(P, noise, return_excluded: bool = False):
    """``-sum_d D_d/2 <d^2 ln P / dx_d^2>``.

    Cells below the log floor are left out of the average; with
    ``return_excluded`` their total mass is returned as well.
    """
    logp, floored = log_floor(P)
    weight = np.where(floored, 0.0, P.values)
    total = 0.0
    for axis, (d, h) in enumerate(zip(_coeffs(noise), P.spacing)):
        if d == 0.0:
            continue
        total += -0.5 * d * float((weight * _second_difference(logp, axis, h)).sum())
    value = total * P.cell_volume
    if return_excluded:
        return value, float(P.values[floored].sum() * P.cell_volume)
    return value


def entropy_production_fisher(P, noise) -> float:
    """``sum_d D_d/2 * sum (dP/dx_d)^2 / P dV_I``; non-negative by construction."""
    values = np.asarray(P.values, dtype=float)
    denom = np.maximum(values, FLOOR_FRACTION * values.mean())
    total = 0.0
    for axis, (d, h) in enumerate(zip(_coeffs(noise), P.spacing)):
        if d == 0.0:
            continue
        g = _central_difference(values, axis, h)
        total += 0.5 * d * float((g * g / denom).sum())
    return total * P.cell_volume


def entropy_flow(P, Z: VelocityField) -> float:
    """Entropy flow ``L = -sum_walls (P ln P) Z.n dA`` for a 2D density.

    ``Z.walls`` holds outward normal components on the west/east (chi walls)
    and south/north (z walls) faces; wall values of ``P`` are the adjacent
    cell values.
    """
    p = np.asarray(P.values, dtype=float)
    plogp = xlogy(p, p)
    dchi, dz = P.spacing
    total = (
        (plogp[0, :] * Z.walls["west"]).sum() * dz
        + (plogp[-1, :] * Z.walls["east"]).sum() * dz
        + (plogp[:, 0] * Z.walls["south"]).sum() * dchi
        + (plogp[:, -1] * Z.walls["north"]).sum() * dchi
    )
    return float(-total)
