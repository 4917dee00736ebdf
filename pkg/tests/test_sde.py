import numpy as np
import pytest

from uphill.dynamics import CanonicalChart, rigid_body_chart
from uphill.errors import ConfigurationError
from uphill.fokker_planck import DensityField2D, Grid2D, NoiseSpec, chart_grid, flat_f_density
from uphill.sde import (
    ParticleEnsemble,
    coarsen_density,
    compare_to_fp,
    em_step,
    histogram_density,
    l1_distance,
    run_ensemble,
)


def flat_chart(z_max=4.0):
    def h2d(chi, z):
        return np.zeros(np.broadcast(chi, z).shape)

    def grad(chi, z):
        zero = np.zeros(np.broadcast(chi, z).shape)
        return zero, zero

    return CanonicalChart(10.0, h2d, 1.0, z_max, grad=grad)


def trajectory(seed, n=3000, steps=20):
    chart = rigid_body_chart()
    P0 = flat_f_density(chart_grid(chart, 32, 32))
    ens = ParticleEnsemble.from_density(P0, n, seed)
    for _ in range(steps):
        ens = em_step(ens, chart, NoiseSpec(), 0.01)
    return ens


def test_same_seed_is_bitwise_reproducible():
    a, b = trajectory(7), trajectory(7)
    assert np.array_equal(a.chi, b.chi) and np.array_equal(a.z, b.z)


def test_different_seed_differs():
    assert not np.array_equal(trajectory(7).chi, trajectory(8).chi)


def test_particles_stay_inside():
    ens = trajectory(3, steps=200)
    assert np.all(np.abs(ens.chi) <= 1.0) and np.all(np.abs(ens.z) <= 1.5)


def test_no_drift_no_noise_is_frozen():
    chart = flat_chart()
    ens = ParticleEnsemble(np.linspace(-0.9, 0.9, 50), np.linspace(-3, 3, 50), seed=0,
                           chi_bounds=(-1.0, 1.0), z_bounds=(-4.0, 4.0))
    out = ens
    for _ in range(10):
        out = em_step(out, chart, NoiseSpec(0.0, 0.0), 0.1)
    np.testing.assert_array_equal(out.chi, ens.chi)
    np.testing.assert_array_equal(out.z, ens.z)


def test_brownian_variance_growth():
    chart = flat_chart()
    n = 100_000
    ens = ParticleEnsemble(np.zeros(n), np.zeros(n), seed=11, chi_bounds=(-1.0, 1.0), z_bounds=(-4.0, 4.0))
    noise = NoiseSpec(0.0, 0.2)
    for _ in range(100):
        ens = em_step(ens, chart, noise, 0.01)
    assert np.var(ens.z) == pytest.approx(0.2, rel=0.03)


def test_nonpositive_dt():
    ens = trajectory(1, n=100, steps=0)
    with pytest.raises(ConfigurationError):
        em_step(ens, rigid_body_chart(), NoiseSpec(), 0.0)


def test_histogram_is_normalised():
    ens = trajectory(2, steps=5)
    h = histogram_density(ens, Grid2D(8, 8, (-1.0, 1.0), (-1.5, 1.5)))
    assert h.mass == pytest.approx(1.0, abs=1e-14)


class TestComparison:
    def test_mismatched_grids(self):
        fine = Grid2D(30, 30, (-1.0, 1.0), (-1.5, 1.5))
        with pytest.raises(ConfigurationError):
            coarsen_density(DensityField2D.uniform(fine), Grid2D(8, 8, (-1.0, 1.0), (-1.5, 1.5)))
        with pytest.raises(ConfigurationError):
            coarsen_density(DensityField2D.uniform(fine), Grid2D(10, 10, (-1.0, 1.0), (-2.0, 2.0)))
        with pytest.raises(ConfigurationError):
            l1_distance(DensityField2D.uniform(fine), DensityField2D.uniform(Grid2D(10, 10)))

    def test_missing_time(self):
        g = Grid2D(8, 8)
        with pytest.raises(ConfigurationError):
            compare_to_fp({1.0: DensityField2D.uniform(g)}, {2.0: DensityField2D.uniform(g)}, [1.0])

    def test_unreachable_time(self):
        chart = rigid_body_chart()
        ens = trajectory(1, n=100, steps=0)
        with pytest.raises(ConfigurationError):
            run_ensemble(ens, chart, NoiseSpec(), 0.3, [1.0], Grid2D(8, 8, (-1.0, 1.0), (-1.5, 1.5)))

    def test_sampling_noise_scales_with_particle_count(self):
        chart = rigid_body_chart()
        P0 = flat_f_density(chart_grid(chart, 64, 64))
        coarse = P0.grid.coarsen(8, 8)
        reference = coarsen_density(P0, coarse)

        def mean_l1(n):
            return np.mean([l1_distance(histogram_density(ParticleEnsemble.from_density(P0, n, s), coarse),
                                        reference) for s in range(8)])

        small, large = mean_l1(25_000), mean_l1(100_000)
        assert large < 0.03
        assert 1.7 < small / large < 2.3
