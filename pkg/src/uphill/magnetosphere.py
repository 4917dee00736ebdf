"""Point-dipole magnetosphere: diffusion across flux surfaces at fixed magnetic moment.

Particles are described by the flux label ``psi``, the magnetic moment ``mu``
and the parallel velocity ``v_par``. The density ``P`` is taken with respect
to the invariant measure ``dmu dv_par dpsi``; the Cartesian phase-space
density is ``f = P B``. Only ``psi`` diffuses; ``mu`` and ``v_par`` are
spectators, so both marginals are exact invariants. Field-line structure is
collapsed onto the equator: the measure weight for a flux surface is the
equatorial field strength ``B_eq(psi) = psi^3 / M^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .entropy import (
    EntropyTrace,
    entropy_production_direct,
    entropy_production_fisher,
    sigma_entropy,
    tilde_entropy,
)
from .errors import ConfigurationError, SolverFault

__all__ = [
    "DipoleGeometry",
    "MagnetoConfig",
    "MagnetoState",
    "MomentMaps",
    "flux_function",
    "field_strength",
    "measure_jacobian",
    "equatorial_field",
    "maxwell_boltzmann_state",
    "uniform_state",
    "diffuse",
    "stable_dt",
    "moments",
    "magneto_entropies",
    "magneto_solve",
    "plan_time_step",
]


@dataclass(frozen=True)
class DipoleGeometry:
    """Dipole of moment ``M`` sampled on a cylindrical ``(r, z)`` map grid."""

    moment: float = 1.0
    r_bounds: Tuple[float, float] = (0.8, 5.5)
    z_bounds: Tuple[float, float] = (-2.5, 2.5)
    n_r: int = 96
    n_z: int = 96

    def __post_init__(self):
        if not self.moment > 0:
            raise ConfigurationError("dipole moment must be positive")
        if not self.r_bounds[0] > 0:
            raise ConfigurationError("map grid must have r > 0")

    @property
    def r(self) -> np.ndarray:
        return np.linspace(*self.r_bounds, self.n_r)

    @property
    def z(self) -> np.ndarray:
        return np.linspace(*self.z_bounds, self.n_z)

    def mesh(self):
        return np.meshgrid(self.r, self.z, indexing="ij")

    @property
    def psi(self) -> np.ndarray:
        return flux_function(self, *self.mesh())

    @property
    def B(self) -> np.ndarray:
        return field_strength(self, *self.mesh())


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ConfigurationError("need r > 0")
    return r


def flux_function(geom: DipoleGeometry, r, z) -> np.ndarray:
    """``psi = M r^2 / (r^2 + z^2)^(3/2)``."""
    r = _check_r(r)
    z = np.asarray(z, dtype=float)
    return geom.moment * r * r / (r * r + z * z) ** 1.5


def field_strength(geom: DipoleGeometry, r, z) -> np.ndarray:
    """``|grad psi| / r`` from the analytic gradient of the flux function."""
    r = _check_r(r)
    z = np.asarray(z, dtype=float)
    s = r * r + z * z
    dpsi_dr = geom.moment * r * (2.0 * z * z - r * r) / s ** 2.5
    dpsi_dz = -3.0 * geom.moment * r * r * z / s ** 2.5
    return np.hypot(dpsi_dr, dpsi_dz) / r


def measure_jacobian(geom: DipoleGeometry, r, z) -> np.ndarray:
    """Weight of ``dV_I`` relative to ``dV``: the field strength."""
    return field_strength(geom, r, z)


def equatorial_field(geom: DipoleGeometry, psi) -> np.ndarray:
    """Field strength where the flux surface ``psi`` crosses the equator."""
    psi = np.asarray(psi, dtype=float)
    return field_strength(geom, geom.moment / psi, np.zeros_like(psi))


@dataclass(frozen=True)
class MagnetoConfig:
    moment: float = 1.0
    mass: float = 1.0
    psi_bounds: Tuple[float, float] = (0.2, 1.0)
    n_psi: int = 128
    n_mu: int = 32
    n_v: int = 32
    mu_max: float = 8.0
    v_max: float = 4.0
    temperature: float = 1.0
    d_psi: float = 0.05
    t_end: float = 30.0
    dt: Optional[float] = None
    trace_every: float = 0.1
    snapshot_every: float = 5.0

    def __post_init__(self):
        lo, hi = self.psi_bounds
        if not 0 < lo < hi:
            raise ConfigurationError("psi range must satisfy 0 < psi_min < psi_max")
        if min(self.n_psi, self.n_mu, self.n_v) < 8:
            raise ConfigurationError("need at least 8 cells per axis")
        for name in ("mass", "mu_max", "v_max", "temperature", "trace_every", "snapshot_every"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not (math.isfinite(self.d_psi) and self.d_psi >= 0):
            raise ConfigurationError("d_psi must be finite and non-negative")
        if not self.t_end >= 0:
            raise ConfigurationError("t_end must be non-negative")


@dataclass
class MagnetoState:
    """Density on cell centres of a ``(psi, mu, v_par)`` grid."""

    values: np.ndarray
    psi_bounds: Tuple[float, float]
    mu_bounds: Tuple[float, float]
    v_bounds: Tuple[float, float]
    mass: float = 1.0
    d_psi: float = 0.05

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ConfigurationError("state must be three-dimensional")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < -1e-14):
            raise SolverFault("state is negative or non-finite")

    @property
    def shape(self):
        return self.values.shape

    def _axis(self, bounds, n):
        h = (bounds[1] - bounds[0]) / n
        return bounds[0] + (np.arange(n) + 0.5) * h, h

    @property
    def psi(self) -> np.ndarray:
        return self._axis(self.psi_bounds, self.shape[0])[0]

    @property
    def mu(self) -> np.ndarray:
        return self._axis(self.mu_bounds, self.shape[1])[0]

    @property
    def v(self) -> np.ndarray:
        return self._axis(self.v_bounds, self.shape[2])[0]

    @property
    def spacing(self):
        return (
            self._axis(self.psi_bounds, self.shape[0])[1],
            self._axis(self.mu_bounds, self.shape[1])[1],
            self._axis(self.v_bounds, self.shape[2])[1],
        )

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    @property
    def noise(self):
        return (self.d_psi, 0.0, 0.0)

    def mu_marginal(self) -> np.ndarray:
        dpsi, _, dv = self.spacing
        return self.values.sum(axis=(0, 2)) * dpsi * dv

    def v_marginal(self) -> np.ndarray:
        dpsi, dmu, _ = self.spacing
        return self.values.sum(axis=(0, 1)) * dpsi * dmu

    def with_values(self, values) -> "MagnetoState":
        return replace(self, values=values)


def _empty_state(cfg: MagnetoConfig, values) -> MagnetoState:
    return MagnetoState(values, cfg.psi_bounds, (0.0, cfg.mu_max), (-cfg.v_max, cfg.v_max),
                        mass=cfg.mass, d_psi=cfg.d_psi)


def maxwell_boltzmann_state(cfg: MagnetoConfig, geom: Optional[DipoleGeometry] = None) -> MagnetoState:
    """Spatially uniform Maxwellian in Cartesian phase space, restricted to the grid.

    ``f = exp(-(mu B + m v_par^2 / 2) / T)`` and ``P = f / B_eq(psi)``.
    """
    geom = geom or DipoleGeometry(moment=cfg.moment)
    probe = _empty_state(cfg, np.zeros((cfg.n_psi, cfg.n_mu, cfg.n_v)))
    b = equatorial_field(geom, probe.psi)[:, None, None]
    mu = probe.mu[None, :, None]
    v = probe.v[None, None, :]
    f = np.exp(-(mu * b + 0.5 * cfg.mass * v * v) / cfg.temperature)
    values = f / b
    values = values / (values.sum() * probe.cell_volume)
    return probe.with_values(values)


def uniform_state(cfg: MagnetoConfig, profile=None) -> MagnetoState:
    """``psi``-independent state; ``profile(mu, v)`` defaults to a Maxwellian at ``B = 1``."""
    probe = _empty_state(cfg, np.zeros((cfg.n_psi, cfg.n_mu, cfg.n_v)))
    mu, v = np.meshgrid(probe.mu, probe.v, indexing="ij")
    if profile is None:
        slab = np.exp(-(mu + 0.5 * cfg.mass * v * v) / cfg.temperature)
    else:
        slab = np.asarray(profile(mu, v), dtype=float)
    values = np.broadcast_to(slab, probe.shape).copy()
    values = values / (values.sum() * probe.cell_volume)
    return probe.with_values(values)


def stable_dt(state: MagnetoState) -> float:
    """``0.9 dpsi^2 / (2 D_psi)``, the 1D form of the solver's diffusion bound."""
    dpsi = state.spacing[0]
    if state.d_psi == 0:
        return math.inf
    return 0.9 * dpsi * dpsi / (2.0 * state.d_psi)


@lru_cache(maxsize=16)
def _step_matrix(n: int, rate: float, steps: int) -> np.ndarray:
    """``steps``-th power of the explicit no-flux diffusion update, ``rate = dt D / (2 h^2)``."""
    a = np.zeros((n, n))
    idx = np.arange(n)
    a[idx, idx] = 1.0
    a[idx[:-1], idx[:-1]] -= rate
    a[idx[1:], idx[1:]] -= rate
    a[idx[:-1], idx[1:]] += rate
    a[idx[1:], idx[:-1]] += rate
    m = np.linalg.matrix_power(a, steps)
    # the conservative update has unit column sums; restore them after powering
    m /= m.sum(axis=0, keepdims=True)
    m.setflags(write=False)
    return m


def diffuse(state: MagnetoState, dt: float, steps: int = 1) -> MagnetoState:
    """``steps`` explicit steps of ``dP/dt = D_psi/2 d^2P/dpsi^2`` with no-flux ends.

    All ``(mu, v_par)`` slices share one linear update, applied as a single
    matrix power.
    """
    if steps < 0:
        raise ConfigurationError("steps must be non-negative")
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if dt > stable_dt(state) * (1 + 1e-12):
        raise ConfigurationError(f"dt={dt:.4g} exceeds the stability bound {stable_dt(state):.4g}")
    if steps == 0 or state.d_psi == 0:
        return state.with_values(state.values.copy())
    n = state.shape[0]
    dpsi = state.spacing[0]
    m = _step_matrix(n, 0.5 * state.d_psi * dt / (dpsi * dpsi), int(steps))
    out = (m @ state.values.reshape(n, -1)).reshape(state.shape)
    if out.min() < -1e-14 or not np.all(np.isfinite(out)):
        raise SolverFault("diffusion produced negative or non-finite density")
    return state.with_values(out)


@dataclass
class MomentMaps:
    r: np.ndarray
    z: np.ndarray
    density: np.ndarray
    t_perp: np.ndarray
    t_par: np.ndarray
    psi: np.ndarray
    B: np.ndarray

    @property
    def anisotropy(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.t_perp / self.t_par


def _interp_weights(state: MagnetoState, psi):
    """Linear interpolation in psi between cell centres (constant beyond the outer centres)."""
    centres = state.psi
    x = np.clip(psi, centres[0], centres[-1])
    k = np.clip(np.searchsorted(centres, x) - 1, 0, len(centres) - 2)
    frac = (x - centres[k]) / (centres[k + 1] - centres[k])
    return k, frac


def moments(state: MagnetoState, geom: DipoleGeometry, r=None, z=None) -> MomentMaps:
    """Density and temperatures on the map grid (or at given ``r``, ``z`` points).

    ``n = B int P dmu dv``, ``T_perp = B <mu>``, ``T_par = m <v^2>``; points whose
    flux surface is outside the simulated range are NaN.
    """
    if r is None:
        r, z = geom.mesh()
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    psi = flux_function(geom, r, z)
    b = field_strength(geom, r, z)
    _, dmu, dv = state.spacing
    # per flux cell: zeroth, mu and v^2 moments of the (mu, v) slice
    m0 = state.values.sum(axis=(1, 2)) * dmu * dv
    m_mu = (state.values * state.mu[None, :, None]).sum(axis=(1, 2)) * dmu * dv
    m_v2 = (state.values * (state.v ** 2)[None, None, :]).sum(axis=(1, 2)) * dmu * dv
    k, frac = _interp_weights(state, psi)

    def at(q):
        return (1.0 - frac) * q[k] + frac * q[k + 1]

    s0, s_mu, s_v2 = at(m0), at(m_mu), at(m_v2)
    inside = (psi >= state.psi_bounds[0]) & (psi <= state.psi_bounds[1])
    with np.errstate(invalid="ignore", divide="ignore"):
        density = np.where(inside, b * s0, np.nan)
        t_perp = np.where(inside, b * s_mu / s0, np.nan)
        t_par = np.where(inside, state.mass * s_v2 / s0, np.nan)
    return MomentMaps(r=r, z=z, density=density, t_perp=t_perp, t_par=t_par, psi=psi, B=b)


def magneto_entropies(state: MagnetoState, geom: DipoleGeometry, jacobian=None):
    """``(Sigma, S_tilde)`` with ``S_tilde = Sigma - <ln B_eq(psi)>`` unless ``jacobian`` overrides B."""
    if jacobian is None:
        jacobian = equatorial_field(geom, state.psi)[:, None, None]
    return sigma_entropy(state), tilde_entropy(state, jacobian)


def plan_time_step(cfg: MagnetoConfig, state: Optional[MagnetoState] = None):
    """``(dt, substeps per trace row)`` for :func:`magneto_solve`; raises on an invalid ``cfg.dt``."""
    if state is None:
        state = _empty_state(cfg, np.zeros((cfg.n_psi, 1, 1)))
    interval = cfg.trace_every
    dt_max = stable_dt(state)
    if cfg.dt is None:
        nsub = max(1, math.ceil(interval / dt_max))
        return interval / nsub, nsub
    if cfg.dt > dt_max * (1 + 1e-12):
        raise ConfigurationError(f"dt={cfg.dt:.4g} exceeds the stability bound {dt_max:.4g}")
    nsub = int(round(interval / cfg.dt))
    if nsub < 1 or abs(nsub * cfg.dt - interval) > 1e-9 * interval:
        raise ConfigurationError("dt must divide trace_every")
    return cfg.dt, nsub


def magneto_solve(cfg: MagnetoConfig, geom: Optional[DipoleGeometry] = None,
                  initial: Optional[MagnetoState] = None):
    """Relax from ``initial`` (Maxwell-Boltzmann by default) to ``cfg.t_end``.

    Returns ``(snapshots, trace)`` like the chart solver; the entropy flow column
    is zero because both ends of the psi range are closed.
    """
    geom = geom or DipoleGeometry(moment=cfg.moment)
    state = initial if initial is not None else maxwell_boltzmann_state(cfg, geom)
    interval = cfg.trace_every
    dt, nsub = plan_time_step(cfg, state)
    n_rows = int(round(cfg.t_end / interval))
    snap_stride = max(1, int(round(cfg.snapshot_every / interval)))
    jac = equatorial_field(geom, state.psi)[:, None, None]

    trace = EntropyTrace()
    snapshots: List[Tuple[float, MagnetoState]] = []
    for k in range(n_rows + 1):
        t = k * interval
        if k > 0:
            state = diffuse(state, dt, nsub)
        sd, excluded = entropy_production_direct(state, state.noise, return_excluded=True)
        trace.append(
            t,
            sigma_entropy(state),
            tilde_entropy(state, jac),
            sd,
            entropy_production_fisher(state, state.noise),
            0.0,
            state.total_mass,
            excluded_mass=excluded,
        )
        if k % snap_stride == 0 or k == n_rows:
            snapshots.append((t, state))
    trace.dt = dt
    return snapshots, trace
