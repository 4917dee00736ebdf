"""Monte-Carlo check of the Fokker-Planck solver with noisy canonical equations.

Each particle follows ``dchi = -Psi_z dt + sqrt(D_chi) dW_1``,
``dz = Psi_chi dt + sqrt(D_z) dW_2`` (Euler-Maruyama, reflecting walls),
whose density obeys the same Fokker-Planck equation as
:mod:`uphill.fokker_planck`. The drift is the solver's, wall layer included.

Random numbers come from one independent stream per block of particles,
spawned from a single seed, so results do not depend on how blocks are
scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .dynamics import CanonicalChart
from .errors import ConfigurationError
from .fokker_planck import ChartDrift, DensityField2D, Grid2D, NoiseSpec

__all__ = [
    "BLOCK_SIZE",
    "ParticleEnsemble",
    "em_step",
    "histogram_density",
    "coarsen_density",
    "l1_distance",
    "compare_to_fp",
    "run_ensemble",
]

BLOCK_SIZE = 8192


@dataclass
class ParticleEnsemble:
    chi: np.ndarray
    z: np.ndarray
    seed: int
    chi_bounds: tuple
    z_bounds: tuple
    streams: List[np.random.Generator] = field(repr=False, default_factory=list)
    t: float = 0.0

    def __post_init__(self):
        self.chi = np.asarray(self.chi, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.chi.shape != self.z.shape or self.chi.ndim != 1:
            raise ConfigurationError("chi and z must be 1D arrays of equal length")
        if not self.streams:
            n_blocks = -(-len(self.chi) // BLOCK_SIZE)
            children = np.random.SeedSequence(self.seed).spawn(n_blocks + 1)
            # the last child is reserved for sampling initial positions
            self.streams = [np.random.default_rng(c) for c in children[:n_blocks]]

    @property
    def size(self) -> int:
        return len(self.chi)

    @classmethod
    def from_density(cls, P: DensityField2D, n: int, seed: int) -> "ParticleEnsemble":
        """Draw ``n`` particles from the piecewise-constant density ``P``."""
        if n < 1:
            raise ConfigurationError("need at least one particle")
        grid = P.grid
        n_blocks = -(-n // BLOCK_SIZE)
        sampler = np.random.default_rng(np.random.SeedSequence(seed).spawn(n_blocks + 1)[-1])
        prob = (P.values * grid.cell_volume).ravel()
        prob = prob / prob.sum()
        cells = sampler.choice(prob.size, size=n, p=prob)
        i, j = np.unravel_index(cells, grid.shape)
        offsets = sampler.random((2, n))
        chi = grid.chi_bounds[0] + (i + offsets[0]) * grid.dchi
        z = grid.z_bounds[0] + (j + offsets[1]) * grid.dz
        return cls(chi, z, seed, grid.chi_bounds, grid.z_bounds)


def _reflect(x, lo, hi):
    inside = (x >= lo) & (x <= hi)
    if inside.all():
        return x
    span = hi - lo
    y = np.mod(x - lo, 2.0 * span)
    return np.where(inside, x, lo + np.where(y > span, 2.0 * span - y, y))


def em_step(ens: ParticleEnsemble, chart: CanonicalChart, noise: NoiseSpec, dt: float,
            drift: ChartDrift = None, wall_layer: float = 0.1) -> ParticleEnsemble:
    """One Euler-Maruyama step; particles leaving the rectangle are mirrored back.

    The noise on the chi equation has variance ``D_chi dt`` and the noise on the
    z equation ``D_z dt``, which reproduces ``D/2`` second derivatives in the
    Fokker-Planck limit.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if drift is None:
        drift = ChartDrift(chart, wall_layer)
    u, w = drift.velocity(ens.chi, ens.z)
    xi = np.empty((2, ens.size))
    for b, gen in enumerate(ens.streams):
        sl = slice(b * BLOCK_SIZE, min((b + 1) * BLOCK_SIZE, ens.size))
        xi[:, sl] = gen.standard_normal((2, sl.stop - sl.start))
    chi = ens.chi + u * dt - np.sqrt(noise.d_chi * dt) * xi[0]
    z = ens.z + w * dt + np.sqrt(noise.d_z * dt) * xi[1]
    chi = _reflect(chi, *ens.chi_bounds)
    z = _reflect(z, *ens.z_bounds)
    return ParticleEnsemble(chi, z, ens.seed, ens.chi_bounds, ens.z_bounds, ens.streams, ens.t + dt)


def histogram_density(ens: ParticleEnsemble, grid: Grid2D) -> DensityField2D:
    """Normalised particle histogram on ``grid``."""
    if tuple(grid.chi_bounds) != tuple(ens.chi_bounds) or tuple(grid.z_bounds) != tuple(ens.z_bounds):
        raise ConfigurationError("histogram grid does not cover the ensemble domain")
    counts, _, _ = np.histogram2d(ens.chi, ens.z, bins=[grid.chi_nodes, grid.z_nodes])
    return DensityField2D(counts / (ens.size * grid.cell_volume), grid)


def coarsen_density(P: DensityField2D, grid: Grid2D) -> DensityField2D:
    """Block-average ``P`` onto a coarser grid with the same bounds."""
    fine = P.grid
    if tuple(fine.chi_bounds) != tuple(grid.chi_bounds) or tuple(fine.z_bounds) != tuple(grid.z_bounds):
        raise ConfigurationError("grids cover different domains")
    if fine.n_chi % grid.n_chi or fine.n_z % grid.n_z:
        raise ConfigurationError(f"grid {grid.shape} is not a coarsening of {fine.shape}")
    fc, fz = fine.n_chi // grid.n_chi, fine.n_z // grid.n_z
    blocks = P.values.reshape(grid.n_chi, fc, grid.n_z, fz).mean(axis=(1, 3))
    return DensityField2D(blocks, grid)


def l1_distance(a: DensityField2D, b: DensityField2D) -> float:
    if a.grid != b.grid:
        raise ConfigurationError("densities live on different grids")
    return float(np.abs(a.values - b.values).sum() * a.grid.cell_volume)


def compare_to_fp(histograms: Dict[float, DensityField2D], snapshots: Dict[float, DensityField2D],
                  times: Sequence[float]) -> Dict[float, float]:
    """L1 distance between particle histograms and solver fields at ``times``.

    Solver fields are block-averaged onto the histogram grid first.
    """
    out = {}
    for t in times:
        if t not in histograms or t not in snapshots:
            raise ConfigurationError(f"no data at t={t}")
        h = histograms[t]
        out[t] = l1_distance(h, coarsen_density(snapshots[t], h.grid))
    return out


def run_ensemble(ens: ParticleEnsemble, chart: CanonicalChart, noise: NoiseSpec, dt: float,
                 times: Sequence[float], grid: Grid2D, wall_layer: float = 0.1):
    """Advance ``ens`` and histogram it at each of ``times``; returns ``(ens, {t: histogram})``."""
    drift = ChartDrift(chart, wall_layer)
    hists = {}
    for target in sorted(times):
        n = int(round((target - ens.t) / dt))
        if n < 0 or abs(ens.t + n * dt - target) > 1e-9 * max(1.0, target):
            raise ConfigurationError(f"time {target} is not reachable with dt={dt}")
        for _ in range(n):
            ens = em_step(ens, chart, noise, dt, drift=drift)
        ens.t = float(target)
        hists[target] = histogram_density(ens, grid)
    return ens, hists
