"""Compiled stencils for the finite-volume Fokker-Planck update."""

import numpy as np
from numba import njit


@njit(cache=True)
def _van_leer(num, den):
    if den == 0.0:
        return 0.0
    r = num / den
    ar = abs(r)
    return (r + ar) / (1.0 + ar)


@njit(cache=True)
def fv_rhs(p, u, w, dx, dy, kx, ky, out):
    """Write ``-div(flux)`` of ``p`` into ``out``.

    ``u`` holds normal velocities on x-faces, shape ``(nx+1, ny)``; ``w`` on
    y-faces, shape ``(nx, ny+1)``. Wall faces carry no flux. ``kx``/``ky`` are
    the diffusion coefficients of the second-derivative terms. Advective face
    values are upwind with a van Leer limited slope; cells beyond the walls are
    mirror images.
    """
    nx, ny = p.shape
    for i in range(nx):
        for j in range(ny):
            out[i, j] = 0.0

    for i in range(1, nx):
        for j in range(ny):
            pl = p[i - 1, j]
            pr = p[i, j]
            vel = u[i, j]
            if vel >= 0.0:
                pll = p[i - 2, j] if i >= 2 else pl
                face = pl + 0.5 * _van_leer(pl - pll, pr - pl) * (pr - pl)
            else:
                prr = p[i + 1, j] if i + 1 < nx else pr
                face = pr + 0.5 * _van_leer(pr - prr, pl - pr) * (pl - pr)
            flux = vel * face - kx * (pr - pl) / dx
            out[i - 1, j] -= flux / dx
            out[i, j] += flux / dx

    for i in range(nx):
        for j in range(1, ny):
            pl = p[i, j - 1]
            pr = p[i, j]
            vel = w[i, j]
            if vel >= 0.0:
                pll = p[i, j - 2] if j >= 2 else pl
                face = pl + 0.5 * _van_leer(pl - pll, pr - pl) * (pr - pl)
            else:
                prr = p[i, j + 1] if j + 1 < ny else pr
                face = pr + 0.5 * _van_leer(pr - prr, pl - pr) * (pl - pr)
            flux = vel * face - ky * (pr - pl) / dy
            out[i, j - 1] -= flux / dy
            out[i, j] += flux / dy


@njit(cache=True)
def ssp_rk2(p, u, w, dx, dy, kx, ky, dt, nsteps, k1, stage):
    """Advance ``p`` in place by ``nsteps`` Heun (SSP-RK2) steps."""
    nx, ny = p.shape
    for _ in range(nsteps):
        fv_rhs(p, u, w, dx, dy, kx, ky, k1)
        for i in range(nx):
            for j in range(ny):
                stage[i, j] = p[i, j] + dt * k1[i, j]
        fv_rhs(stage, u, w, dx, dy, kx, ky, k1)
        for i in range(nx):
            for j in range(ny):
                p[i, j] = 0.5 * p[i, j] + 0.5 * (stage[i, j] + dt * k1[i, j])


def warmup():
    p = np.ones((4, 4))
    u = np.zeros((5, 4))
    w = np.zeros((4, 5))
    ssp_rk2(p, u, w, 1.0, 1.0, 0.1, 0.1, 0.1, 1, np.empty_like(p), np.empty_like(p))


@njit(cache=True)
def _smootherstep(s):
    if s <= 0.0:
        return 0.0, 0.0
    if s >= 1.0:
        return 1.0, 0.0
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0), 30.0 * s * s * (s - 1.0) * (s - 1.0)


@njit(cache=True)
def rigid_body_drift(chi, z, ix, iy, iz, c_value, chi_max, z_max, width_chi, width_z, h_wall, u, w):
    """Wall-layered chart drift of the distorted rigid body, fused per point.

    Mirrors ``ChartDrift.velocity`` for charts built by ``rigid_body_chart``;
    ``width_* <= 0`` disables the wall layer.
    """
    for k in range(chi.shape[0]):
        c = chi[k]
        zz = z[k]
        stretch = np.exp(0.5 * zz * zz)
        phi = c * stretch
        rho2 = 2.0 * c_value - zz * zz
        cs = np.cos(phi)
        sn = np.sin(phi)
        a = cs * cs / ix + sn * sn / iy
        da = 2.0 * sn * cs * (1.0 / iy - 1.0 / ix)
        h_chi = 0.5 * rho2 * da * stretch
        h_z = zz * (1.0 / iz - a + 0.5 * rho2 * da * phi)
        if width_chi <= 0.0:
            u[k] = -h_z
            w[k] = h_chi
            continue
        h = 0.5 * (rho2 * a + zz * zz / iz) - h_wall
        mc, dmc = _smootherstep((chi_max - abs(c)) / width_chi)
        mz, dmz = _smootherstep((z_max - abs(zz)) / width_z)
        dmc = -np.sign(c) * dmc / width_chi
        dmz = -np.sign(zz) * dmz / width_z
        u[k] = -(h_z * mc * mz + h * mc * dmz)
        w[k] = h_chi * mc * mz + h * dmc * mz
