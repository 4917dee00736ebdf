"""Conservative finite-volume Fokker-Planck solver on the ``(chi, z)`` chart.

Solves ``dP/dt = H_z dP/dchi - H_chi dP/dz + D_chi/2 P_chichi + D_z/2 P_zz``
with no-flux walls. Face velocities come from the corner values of a stream
function, so their discrete divergence vanishes cell by cell and a uniform
density is an exact stationary state.

The drift is normally not tangent to the rectangle's walls. To keep the
uniform state stationary under no-flux walls, the stream function is blended
to a constant over a thin layer along each wall (``wall_layer``, a fraction of
the domain extent); the flow is unchanged in the interior. ``wall_layer=0``
uses the bare Hamiltonian and simply blocks the wall flux.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .dynamics import CanonicalChart, canonical_velocity
from .entropy import (
    EntropyTrace,
    VelocityField,
    entropy_flow,
    entropy_production_direct,
    entropy_production_fisher,
    log_floor,
    sigma_entropy,
    tilde_entropy,
)
from .errors import ConfigurationError, SolverFault

__all__ = [
    "Grid2D",
    "DensityField2D",
    "NoiseSpec",
    "SolverConfig",
    "ChartDrift",
    "fp_step",
    "fp_solve",
    "fp_velocity",
    "stable_dt",
    "plan_time_step",
    "flat_f_density",
    "chart_grid",
]


@dataclass(frozen=True)
class Grid2D:
    n_chi: int
    n_z: int
    chi_bounds: Tuple[float, float] = (-1.0, 1.0)
    z_bounds: Tuple[float, float] = (-1.5, 1.5)

    def __post_init__(self):
        if self.n_chi < 8 or self.n_z < 8:
            raise ConfigurationError("grid needs at least 8 cells per axis")
        if not (self.chi_bounds[1] > self.chi_bounds[0] and self.z_bounds[1] > self.z_bounds[0]):
            raise ConfigurationError("grid bounds must be increasing")

    @property
    def shape(self):
        return (self.n_chi, self.n_z)

    @property
    def dchi(self) -> float:
        return (self.chi_bounds[1] - self.chi_bounds[0]) / self.n_chi

    @property
    def dz(self) -> float:
        return (self.z_bounds[1] - self.z_bounds[0]) / self.n_z

    @property
    def spacing(self):
        return (self.dchi, self.dz)

    @property
    def cell_volume(self) -> float:
        return self.dchi * self.dz

    @property
    def area(self) -> float:
        return (self.chi_bounds[1] - self.chi_bounds[0]) * (self.z_bounds[1] - self.z_bounds[0])

    @property
    def chi_centers(self) -> np.ndarray:
        return self.chi_bounds[0] + (np.arange(self.n_chi) + 0.5) * self.dchi

    @property
    def z_centers(self) -> np.ndarray:
        return self.z_bounds[0] + (np.arange(self.n_z) + 0.5) * self.dz

    @property
    def chi_nodes(self) -> np.ndarray:
        return np.linspace(self.chi_bounds[0], self.chi_bounds[1], self.n_chi + 1)

    @property
    def z_nodes(self) -> np.ndarray:
        return np.linspace(self.z_bounds[0], self.z_bounds[1], self.n_z + 1)

    def mesh(self):
        """Cell-center coordinates, each of shape ``(n_chi, n_z)``."""
        return np.meshgrid(self.chi_centers, self.z_centers, indexing="ij")

    def coarsen(self, factor_chi: int, factor_z: int) -> "Grid2D":
        if self.n_chi % factor_chi or self.n_z % factor_z:
            raise ConfigurationError("coarsening factors must divide the cell counts")
        return Grid2D(self.n_chi // factor_chi, self.n_z // factor_z, self.chi_bounds, self.z_bounds)


def chart_grid(chart: CanonicalChart, n_chi: int = 128, n_z: int = 128) -> Grid2D:
    return Grid2D(n_chi, n_z, chart.chi_domain, chart.z_domain)


@dataclass
class DensityField2D:
    """Cell-centred probability density on ``dchi dz``."""

    values: np.ndarray
    grid: Grid2D

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise SolverFault("density contains non-finite values")
        if np.any(self.values < -1e-14):
            raise SolverFault(f"negative density {self.values.min():.3e}")

    @property
    def spacing(self):
        return self.grid.spacing

    @property
    def cell_volume(self) -> float:
        return self.grid.cell_volume

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    @classmethod
    def from_function(cls, grid: Grid2D, fn, normalize: bool = True) -> "DensityField2D":
        chi, z = grid.mesh()
        values = np.asarray(fn(chi, z), dtype=float) * np.ones(grid.shape)
        if normalize:
            values = values / (values.sum() * grid.cell_volume)
        return cls(values, grid)

    @classmethod
    def uniform(cls, grid: Grid2D) -> "DensityField2D":
        return cls(np.full(grid.shape, 1.0 / grid.area), grid)

    def copy(self) -> "DensityField2D":
        return DensityField2D(self.values.copy(), self.grid)


def flat_f_density(grid: Grid2D) -> DensityField2D:
    """Initial state with uniform Cartesian density ``f``, i.e. ``P`` proportional to ``exp(z^2/2)``."""
    return DensityField2D.from_function(grid, lambda chi, z: np.exp(0.5 * z * z))


@dataclass(frozen=True)
class NoiseSpec:
    d_chi: float = 0.1
    d_z: float = 0.1

    def __post_init__(self):
        for name in ("d_chi", "d_z"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigurationError(f"{name} must be finite and non-negative")

    @property
    def coefficients(self):
        return (self.d_chi, self.d_z)


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters.

    ``dt=None`` picks the largest stable step that divides the trace interval.
    ``trace_every`` sets the spacing of entropy-trace rows, ``snapshot_every``
    that of stored density fields (a multiple of ``trace_every``).
    """

    t_end: float = 20.0
    dt: Optional[float] = None
    trace_every: float = 0.01
    snapshot_every: float = 1.0
    boundary: str = "reflecting"
    wall_layer: float = 0.1

    def __post_init__(self):
        if self.boundary not in ("reflecting", "no-flux"):
            raise ConfigurationError(f"unsupported boundary condition {self.boundary!r}")
        if not (self.t_end >= 0 and self.trace_every > 0 and self.snapshot_every > 0):
            raise ConfigurationError("times must be positive")
        if not 0.0 <= self.wall_layer < 0.5:
            raise ConfigurationError("wall_layer must lie in [0, 0.5)")
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError("dt must be positive")


def _smootherstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def _smootherstep_slope(s):
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, 30.0 * s * s * (s - 1.0) ** 2, 0.0)


class ChartDrift:
    """Drift ``(-Psi_z, Psi_chi)`` of the chart Hamiltonian with the wall layer applied.

    ``Psi = H_wall + (H - H_wall) m(chi) m(z)`` where ``m`` rises smoothly from 0
    on a wall to 1 at depth ``wall_layer`` times the axis extent, and ``H_wall``
    is the mean of ``H`` around the boundary.
    """

    def __init__(self, chart: CanonicalChart, wall_layer: float = 0.1):
        self.chart = chart
        self.wall_layer = float(wall_layer)
        self.width_chi = 2.0 * chart.chi_max * self.wall_layer
        self.width_z = 2.0 * chart.z_max * self.wall_layer
        s = np.linspace(-1.0, 1.0, 4097)
        sides = [
            chart.h2d(s * chart.chi_max, np.full_like(s, chart.z_max)),
            chart.h2d(s * chart.chi_max, np.full_like(s, -chart.z_max)),
            chart.h2d(np.full_like(s, chart.chi_max), s * chart.z_max),
            chart.h2d(np.full_like(s, -chart.chi_max), s * chart.z_max),
        ]
        weights = [chart.chi_max, chart.chi_max, chart.z_max, chart.z_max]
        self.h_wall = float(sum(w * np.trapezoid(h, s) for w, h in zip(weights, sides)) / (2.0 * sum(weights)))

    def _masks(self, chi, z):
        if self.wall_layer == 0.0:
            one = np.ones(np.broadcast(chi, z).shape)
            zero = np.zeros_like(one)
            return one, one, zero, zero
        sc = (self.chart.chi_max - np.abs(chi)) / self.width_chi
        sz = (self.chart.z_max - np.abs(z)) / self.width_z
        mc, mz = _smootherstep(sc), _smootherstep(sz)
        dmc = -np.sign(chi) * _smootherstep_slope(sc) / self.width_chi
        dmz = -np.sign(z) * _smootherstep_slope(sz) / self.width_z
        return mc, mz, dmc, dmz

    def stream(self, chi, z):
        chi = np.asarray(chi, dtype=float)
        z = np.asarray(z, dtype=float)
        h = self.chart.h2d(chi, z)
        if self.wall_layer == 0.0:
            return h
        mc, mz, _, _ = self._masks(chi, z)
        return self.h_wall + (h - self.h_wall) * mc * mz

    def velocity(self, chi, z):
        """Pointwise drift ``(dchi/dt, dz/dt)``."""
        chi = np.asarray(chi, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.chart.kind == "rigid_body" and chi.ndim == 1 and chi.shape == z.shape:
            return self._rigid_body_velocity(chi, z)
        return self.velocity_numpy(chi, z)

    def _rigid_body_velocity(self, chi, z):
        u = np.empty_like(chi)
        w = np.empty_like(chi)
        ix, iy, iz = self.chart.inertia
        width_chi = self.width_chi if self.wall_layer > 0 else 0.0
        width_z = self.width_z if self.wall_layer > 0 else 0.0
        _kernels.rigid_body_drift(np.ascontiguousarray(chi), np.ascontiguousarray(z), ix, iy, iz,
                                  self.chart.c_value, self.chart.chi_max, self.chart.z_max,
                                  width_chi, width_z, self.h_wall, u, w)
        return u, w

    def velocity_numpy(self, chi, z):
        chi = np.asarray(chi, dtype=float)
        z = np.asarray(z, dtype=float)
        h_chi, h_z = self.chart.hamiltonian_gradient(chi, z)
        if self.wall_layer == 0.0:
            return -np.asarray(h_z), np.asarray(h_chi)
        h = self.chart.h2d(chi, z) - self.h_wall
        mc, mz, dmc, dmz = self._masks(chi, z)
        psi_chi = h_chi * mc * mz + h * dmc * mz
        psi_z = h_z * mc * mz + h * mc * dmz
        return -psi_z, psi_chi

    def face_velocities(self, grid: Grid2D):
        """Normal velocities on chi-faces ``(n_chi+1, n_z)`` and z-faces ``(n_chi, n_z+1)``.

        Differences of corner stream values; wall faces are zero.
        """
        cc, zz = np.meshgrid(grid.chi_nodes, grid.z_nodes, indexing="ij")
        psi = self.stream(cc, zz)
        u = -(psi[:, 1:] - psi[:, :-1]) / grid.dz
        w = (psi[1:, :] - psi[:-1, :]) / grid.dchi
        u[0, :] = 0.0
        u[-1, :] = 0.0
        w[:, 0] = 0.0
        w[:, -1] = 0.0
        return u, w


def stable_dt(grid: Grid2D, noise: NoiseSpec, u: np.ndarray, w: np.ndarray) -> float:
    """Largest step keeping each explicit sub-update (diffusion, advection) positive.

    Diffusion: ``dt <= 1 / (2 (D_chi/dchi^2 + D_z/dz^2))``, which is
    ``h^2 / (2 (D_chi + D_z))`` on a square grid. Advection:
    ``dt <= 0.25 / (max|u|/dchi + max|w|/dz)``. The result carries a 0.9 safety
    factor.
    """
    diff_rate = noise.d_chi / grid.dchi ** 2 + noise.d_z / grid.dz ** 2
    adv_rate = np.max(np.abs(u)) / grid.dchi + np.max(np.abs(w)) / grid.dz
    bounds = [math.inf]
    if diff_rate > 0:
        bounds.append(1.0 / (2.0 * diff_rate))
    if adv_rate > 0:
        bounds.append(0.25 / adv_rate)
    return 0.9 * min(bounds)


class _Stepper:
    """Holds face velocities and scratch arrays for repeated stepping."""

    def __init__(self, grid: Grid2D, chart: CanonicalChart, noise: NoiseSpec, wall_layer: float):
        self.grid = grid
        self.noise = noise
        self.drift = ChartDrift(chart, wall_layer)
        self.u, self.w = self.drift.face_velocities(grid)
        self.dt_max = stable_dt(grid, noise, self.u, self.w)
        self._k = np.empty(grid.shape)
        self._stage = np.empty(grid.shape)

    def check_dt(self, dt: float):
        if not dt > 0:
            raise ConfigurationError("dt must be positive")
        if dt > self.dt_max * (1.0 + 1e-12):
            raise ConfigurationError(f"dt={dt:.4g} exceeds the stability bound {self.dt_max:.4g}")

    def advance(self, values: np.ndarray, dt: float, nsteps: int) -> np.ndarray:
        p = np.ascontiguousarray(values, dtype=float).copy()
        g = self.grid
        _kernels.ssp_rk2(p, self.u, self.w, g.dchi, g.dz, 0.5 * self.noise.d_chi, 0.5 * self.noise.d_z,
                         dt, nsteps, self._k, self._stage)
        lowest = p.min()
        if not np.isfinite(lowest) or lowest < -1e-14:
            raise SolverFault(f"density went negative ({lowest:.3e}) or non-finite")
        return p


def fp_step(P: DensityField2D, chart: CanonicalChart, noise: NoiseSpec, dt: float,
            wall_layer: float = 0.1) -> DensityField2D:
    """One SSP-RK2 step of the finite-volume scheme."""
    stepper = _Stepper(P.grid, chart, noise, wall_layer)
    stepper.check_dt(dt)
    return DensityField2D(stepper.advance(P.values, dt, 1), P.grid)


def fp_velocity(P: DensityField2D, chart: CanonicalChart, noise: NoiseSpec, wall_layer: float = 0.0):
    """Fokker-Planck velocity ``Z`` with ``dP/dt = -div(Z P)``.

    ``Z = (u_chi - D_chi/2 d_chi ln P, u_z - D_z/2 d_z ln P)`` at cell centres,
    with ``u`` the (optionally wall-layered) drift. The wall-normal components
    are those of the total flux divided by ``P``, which no-flux walls make zero.
    Returns the field and the number of cells whose density was floored.
    """
    grid = P.grid
    chi, z = grid.mesh()
    if wall_layer == 0.0:
        u, w = canonical_velocity(chart, chi, z)
    else:
        u, w = ChartDrift(chart, wall_layer).velocity(chi, z)
    logp, floored = log_floor(P)
    dlog_chi, dlog_z = np.gradient(logp, grid.dchi, grid.dz, edge_order=2)
    zchi = u - 0.5 * noise.d_chi * dlog_chi
    zz = w - 0.5 * noise.d_z * dlog_z
    walls = {
        "west": np.zeros(grid.n_z),
        "east": np.zeros(grid.n_z),
        "south": np.zeros(grid.n_chi),
        "north": np.zeros(grid.n_chi),
    }
    return VelocityField(zchi, zz, walls), int(floored.sum())


def _trace_row(t, P: DensityField2D, chart, noise, jac, wall_layer):
    s = sigma_entropy(P)
    st = tilde_entropy(P, jac)
    sd, excluded = entropy_production_direct(P, noise, return_excluded=True)
    sf = entropy_production_fisher(P, noise)
    Z, _ = fp_velocity(P, chart, noise, wall_layer)
    flow = entropy_flow(P, Z)
    return (t, s, st, sd, sf, flow, P.mass), excluded


def _plan(stepper: _Stepper, cfg: SolverConfig):
    interval = cfg.trace_every
    if cfg.dt is None:
        nsub = max(1, math.ceil(interval / stepper.dt_max))
        return interval / nsub, nsub
    stepper.check_dt(cfg.dt)
    nsub = int(round(interval / cfg.dt))
    if nsub < 1 or abs(nsub * cfg.dt - interval) > 1e-9 * interval:
        raise ConfigurationError("dt must divide trace_every")
    return cfg.dt, nsub


def plan_time_step(grid: Grid2D, chart: CanonicalChart, noise: NoiseSpec, cfg: SolverConfig):
    """``(dt, substeps per trace row)`` that :func:`fp_solve` would use; raises on an invalid ``cfg.dt``."""
    return _plan(_Stepper(grid, chart, noise, cfg.wall_layer), cfg)


def fp_solve(P0: DensityField2D, chart: CanonicalChart, noise: NoiseSpec, cfg: SolverConfig,
             progress=None):
    """Integrate to ``cfg.t_end``; returns ``(snapshots, trace)``.

    ``snapshots`` is a list of ``(t, DensityField2D)`` every
    ``cfg.snapshot_every``; the trace has a row every ``cfg.trace_every``.
    """
    stepper = _Stepper(P0.grid, chart, noise, cfg.wall_layer)
    interval = cfg.trace_every
    dt, nsub = _plan(stepper, cfg)
    n_rows = int(round(cfg.t_end / interval))
    snap_stride = max(1, int(round(cfg.snapshot_every / interval)))
    jac = CanonicalChart.jacobian(P0.grid.mesh()[1])

    trace = EntropyTrace()
    snapshots: List[Tuple[float, DensityField2D]] = []
    values = P0.values
    P = P0
    for k in range(n_rows + 1):
        t = k * interval
        if k > 0:
            values = stepper.advance(values, dt, nsub)
            P = DensityField2D(values, P0.grid)
        row, excluded = _trace_row(t, P, chart, noise, jac, cfg.wall_layer)
        trace.append(*row, excluded_mass=excluded)
        if k % snap_stride == 0 or k == n_rows:
            snapshots.append((t, P))
        if progress is not None:
            progress(t)
    trace.dt = dt
    return snapshots, trace
