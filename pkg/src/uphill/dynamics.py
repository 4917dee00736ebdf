"""Three-dimensional noncanonical Hamiltonian systems ``v = lambda grad C x grad H``.

The module carries the distorted rigid body used throughout the package, the
structural checks (kernel orthogonality, Jacobi/helicity, Liouville) and the
``(C, chi, z)`` chart in which the flow becomes canonical and two-dimensional.

Points are plain ``numpy`` arrays whose last axis has length 3; every function
broadcasts over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "FieldEvaluationError",
    "DomainError",
    "CoordinateSingularityError",
    "ConstrainedSystem3D",
    "CanonicalChart",
    "Orbit",
    "rigid_body",
    "rigid_body_chart",
    "poisson_velocity",
    "topological_residual",
    "jacobi_residual",
    "liouville_residual",
    "to_canonical",
    "from_canonical",
    "canonical_velocity",
    "chart_divergence",
    "integrate_orbit",
]

ScalarField = Callable[[np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray], np.ndarray]


class FieldEvaluationError(ValueError):
    """A scalar or vector field returned a non-finite value."""

    def __init__(self, name: str, point):
        self.field_name = name
        super().__init__(f"field {name!r} is not finite at {np.asarray(point).tolist()}")


class DomainError(ValueError):
    """A point lies outside the domain on which an operation is defined."""


class CoordinateSingularityError(DomainError):
    """The ``(C, chi, z)`` chart is singular on the z axis (x = y = 0)."""


def _check_finite(name: str, value, point) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise FieldEvaluationError(name, point)
    return value


def _central_gradient(f: ScalarField, p: np.ndarray, h: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    grad = np.empty(p.shape, dtype=float)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        grad[..., k] = (np.asarray(f(p + e)) - np.asarray(f(p - e))) / (2.0 * h)
    return grad


def _central_divergence(field: VectorField, p: np.ndarray, h: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    div = np.zeros(p.shape[:-1])
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        div = div + (np.asarray(field(p + e))[..., k] - np.asarray(field(p - e))[..., k]) / (2.0 * h)
    return div


def _central_curl(field: VectorField, p: np.ndarray, h: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    # jac[..., i, k] = d field_i / d x_k
    jac = np.empty(p.shape + (3,))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        jac[..., :, k] = (np.asarray(field(p + e)) - np.asarray(field(p - e))) / (2.0 * h)
    return np.stack(
        [
            jac[..., 2, 1] - jac[..., 1, 2],
            jac[..., 0, 2] - jac[..., 2, 0],
            jac[..., 1, 0] - jac[..., 0, 1],
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class ConstrainedSystem3D:
    """Flow ``v = lam(p) grad C(p) x grad H(p)`` on R^3.

    ``lam``, ``casimir`` and ``hamiltonian`` map arrays of shape ``(..., 3)``
    to arrays of shape ``(...)``. Analytic gradients are optional; when absent
    central differences with step ``fd_step`` are used.
    """

    lam: ScalarField
    casimir: ScalarField
    hamiltonian: ScalarField
    inertia: tuple = (1.0, 2.0, 3.0)
    grad_casimir: Optional[VectorField] = None
    grad_hamiltonian: Optional[VectorField] = None
    grad_lam: Optional[VectorField] = None
    fd_step: float = 4e-4
    name: str = "custom"

    def __post_init__(self):
        if any(i <= 0 for i in self.inertia):
            raise ValueError("moments of inertia must be positive")

    def eval_lambda(self, p) -> np.ndarray:
        lam = _check_finite("lambda", self.lam(np.asarray(p, dtype=float)), p)
        if np.any(lam <= 0):
            raise FieldEvaluationError("lambda", p)
        return lam

    def eval_casimir(self, p) -> np.ndarray:
        return _check_finite("casimir", self.casimir(np.asarray(p, dtype=float)), p)

    def eval_hamiltonian(self, p) -> np.ndarray:
        return _check_finite("hamiltonian", self.hamiltonian(np.asarray(p, dtype=float)), p)

    def casimir_gradient(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.grad_casimir is not None:
            g = self.grad_casimir(p)
        else:
            g = _central_gradient(self.casimir, p, self.fd_step)
        return _check_finite("casimir", g, p)

    def hamiltonian_gradient(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.grad_hamiltonian is not None:
            g = self.grad_hamiltonian(p)
        else:
            g = _central_gradient(self.hamiltonian, p, self.fd_step)
        return _check_finite("hamiltonian", g, p)

    def kernel(self, p) -> np.ndarray:
        """Null vector ``xi = lam grad C`` of the Poisson operator."""
        return self.eval_lambda(p)[..., None] * self.casimir_gradient(p)

    def velocity(self, p) -> np.ndarray:
        return poisson_velocity(self, p)


def rigid_body(inertia: Sequence[float] = (1.0, 2.0, 3.0), distorted: bool = False) -> ConstrainedSystem3D:
    """Euler top with ``C = |x|^2/2``; ``distorted`` switches ``lam = exp(z^2/2)``."""
    ix, iy, iz = (float(v) for v in inertia)
    inv = np.array([1.0 / ix, 1.0 / iy, 1.0 / iz])

    def hamiltonian(p):
        return 0.5 * np.sum(p * p * inv, axis=-1)

    def grad_hamiltonian(p):
        return p * inv

    def casimir(p):
        return 0.5 * np.sum(p * p, axis=-1)

    def grad_casimir(p):
        return np.array(p, dtype=float, copy=True)

    if distorted:
        def lam(p):
            return np.exp(0.5 * p[..., 2] ** 2)

        def grad_lam(p):
            g = np.zeros(np.shape(p))
            g[..., 2] = p[..., 2] * np.exp(0.5 * p[..., 2] ** 2)
            return g
    else:
        def lam(p):
            return np.ones(np.shape(p)[:-1])

        def grad_lam(p):
            return np.zeros(np.shape(p))

    return ConstrainedSystem3D(
        lam=lam,
        casimir=casimir,
        hamiltonian=hamiltonian,
        inertia=(ix, iy, iz),
        grad_casimir=grad_casimir,
        grad_hamiltonian=grad_hamiltonian,
        grad_lam=grad_lam,
        name="distorted rigid body" if distorted else "rigid body",
    )


def poisson_velocity(sys: ConstrainedSystem3D, p) -> np.ndarray:
    """Phase-space velocity ``lam grad C x grad H`` at ``p``."""
    p = np.asarray(p, dtype=float)
    _check_finite("point", p, p)
    return np.cross(sys.kernel(p), sys.hamiltonian_gradient(p))


def topological_residual(sys: ConstrainedSystem3D, p, velocity=None) -> np.ndarray:
    """``xi . v``; vanishes identically for a Poisson flow.

    ``velocity`` replaces the computed flow, which is how corrupted fields are
    checked.
    """
    xi = sys.kernel(p)
    v = poisson_velocity(sys, p) if velocity is None else np.asarray(velocity, dtype=float)
    return np.sum(xi * v, axis=-1)


def jacobi_residual(sys: Union[ConstrainedSystem3D, VectorField], p, h: Optional[float] = None) -> np.ndarray:
    """Helicity density ``w . curl w`` of the kernel field ``w = lam grad C``.

    ``sys`` may also be a bare vector field ``w``. The curl is taken by central
    differences; zero means the kernel is integrable.
    """
    if isinstance(sys, ConstrainedSystem3D):
        w = sys.kernel
        h = sys.fd_step if h is None else h
    else:
        w = sys
        h = 4e-4 if h is None else h
    p = np.asarray(p, dtype=float)
    return np.sum(np.asarray(w(p)) * _central_curl(w, p, h), axis=-1)


def liouville_residual(sys: ConstrainedSystem3D, p, jacobian: Optional[ScalarField] = None,
                       h: Optional[float] = None) -> np.ndarray:
    """Divergence of ``J v`` with density ``J = 1/lam`` unless ``jacobian`` is given."""
    h = sys.fd_step if h is None else h
    if jacobian is None:
        def jacobian(q):
            return 1.0 / sys.eval_lambda(q)

    def flux(q):
        return np.asarray(jacobian(q))[..., None] * poisson_velocity(sys, q)

    return _central_divergence(flux, p, h)


def to_canonical(p):
    """Map ``(x, y, z)`` to ``(C, chi, z)`` with ``chi = exp(-z^2/2) atan2(y, x)``."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if np.any((x == 0.0) & (y == 0.0)):
        raise CoordinateSingularityError("chart undefined on the z axis (x = y = 0)")
    c = 0.5 * (x * x + y * y + z * z)
    chi = np.exp(-0.5 * z * z) * np.arctan2(y, x)
    return c, chi, z


def from_canonical(c, chi, z, branch: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`to_canonical`.

    With ``branch=None`` the angle ``chi exp(z^2/2)`` is read as the
    two-argument angle in (-pi, pi]. ``branch=+1/-1`` reads it as
    ``arctan(y/x)`` and places the point in the half plane with that sign of x.
    """
    c, chi, z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (c, chi, z)))
    rho2 = 2.0 * c - z * z
    if np.any(rho2 <= 0.0):
        raise DomainError("need z^2 < 2C")
    rho = np.sqrt(rho2)
    phi = chi * np.exp(0.5 * z * z)
    if branch is None:
        # chi exp(z^2/2) may land a few ulps past pi for points on the negative x axis
        if np.any(np.abs(phi) > np.pi * (1.0 + 8.0 * np.finfo(float).eps)):
            raise DomainError("angle outside the principal branch (-pi, pi]")
        x, y = rho * np.cos(phi), rho * np.sin(phi)
    else:
        if branch not in (1, -1):
            raise ValueError("branch must be +1 or -1")
        if np.any(np.abs(phi) >= 0.5 * np.pi):
            raise DomainError("arctan branch needs |angle| < pi/2")
        x, y = branch * rho * np.cos(phi), branch * rho * np.sin(phi)
    return np.stack([x, y, z], axis=-1)


@dataclass(frozen=True)
class CanonicalChart:
    """Level set ``C = c_value`` in ``(chi, z)`` with Hamiltonian ``h2d(chi, z)``.

    ``grad`` (optional) returns ``(dH/dchi, dH/dz)``; otherwise central
    differences with step ``1e-4`` of the domain extent are used.
    """

    c_value: float
    h2d: Callable
    chi_max: float = 1.0
    z_max: float = 1.5
    grad: Optional[Callable] = None
    inertia: tuple = field(default=(1.0, 2.0, 3.0))
    kind: str = "custom"

    def __post_init__(self):
        if self.c_value <= 0:
            raise ValueError("Casimir level must be positive")
        if self.chi_max <= 0 or self.z_max <= 0:
            raise ValueError("chart extents must be positive")
        if self.z_max ** 2 >= 2.0 * self.c_value:
            raise ValueError("need z_max^2 < 2 C")

    @property
    def chi_domain(self):
        return (-self.chi_max, self.chi_max)

    @property
    def z_domain(self):
        return (-self.z_max, self.z_max)

    @property
    def fd_steps(self):
        return 2e-4 * self.chi_max, 2e-4 * self.z_max

    @staticmethod
    def jacobian(z):
        """Density of the invariant measure relative to ``dx dy dz``."""
        return np.exp(-0.5 * np.asarray(z, dtype=float) ** 2)

    def contains(self, chi, z) -> np.ndarray:
        return (np.abs(chi) <= self.chi_max) & (np.abs(z) <= self.z_max)

    def hamiltonian_gradient(self, chi, z):
        chi = np.asarray(chi, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.grad is not None:
            return self.grad(chi, z)
        hc, hz = self.fd_steps
        dchi = (self.h2d(chi + hc, z) - self.h2d(chi - hc, z)) / (2.0 * hc)
        dz = (self.h2d(chi, z + hz) - self.h2d(chi, z - hz)) / (2.0 * hz)
        return dchi, dz

    def lift(self, chi, z) -> np.ndarray:
        return from_canonical(self.c_value, chi, z)


def rigid_body_chart(inertia: Sequence[float] = (1.0, 2.0, 3.0), c_value: float = 2.0,
                     chi_max: float = 1.0, z_max: float = 1.5) -> CanonicalChart:
    """Distorted rigid body written in ``(chi, z)`` on the level ``C = c_value``.

    With ``rho^2 = 2C - z^2`` and angle ``phi = chi exp(z^2/2)`` the energy is
    ``H = [rho^2 (cos^2 phi/Ix + sin^2 phi/Iy) + z^2/Iz] / 2``.
    """
    ix, iy, iz = (float(v) for v in inertia)

    def h2d(chi, z):
        chi = np.asarray(chi, dtype=float)
        z = np.asarray(z, dtype=float)
        phi = chi * np.exp(0.5 * z * z)
        rho2 = 2.0 * c_value - z * z
        a = np.cos(phi) ** 2 / ix + np.sin(phi) ** 2 / iy
        return 0.5 * (rho2 * a + z * z / iz)

    def grad(chi, z):
        chi = np.asarray(chi, dtype=float)
        z = np.asarray(z, dtype=float)
        stretch = np.exp(0.5 * z * z)
        phi = chi * stretch
        rho2 = 2.0 * c_value - z * z
        a = np.cos(phi) ** 2 / ix + np.sin(phi) ** 2 / iy
        da = np.sin(2.0 * phi) * (1.0 / iy - 1.0 / ix)
        h_chi = 0.5 * rho2 * da * stretch
        h_z = z * (1.0 / iz - a + 0.5 * rho2 * da * phi)
        return h_chi, h_z

    return CanonicalChart(c_value=c_value, h2d=h2d, chi_max=chi_max, z_max=z_max,
                          grad=grad, inertia=(ix, iy, iz), kind="rigid_body")


def canonical_velocity(chart: CanonicalChart, chi, z, check_domain: bool = True):
    """``(dchi/dt, dz/dt) = (-dH/dz, dH/dchi)``."""
    chi = np.asarray(chi, dtype=float)
    z = np.asarray(z, dtype=float)
    if check_domain and not np.all(chart.contains(chi, z)):
        raise DomainError("point outside the chart rectangle")
    h_chi, h_z = chart.hamiltonian_gradient(chi, z)
    return -np.asarray(h_z), np.asarray(h_chi)


def chart_divergence(chart: CanonicalChart, chi, z, h: Optional[float] = None):
    """Central-difference divergence of :func:`canonical_velocity`."""
    hc, hz = (h, h) if h is not None else chart.fd_steps
    u_p, _ = canonical_velocity(chart, chi + hc, z, check_domain=False)
    u_m, _ = canonical_velocity(chart, chi - hc, z, check_domain=False)
    _, w_p = canonical_velocity(chart, chi, z + hz, check_domain=False)
    _, w_m = canonical_velocity(chart, chi, z - hz, check_domain=False)
    return (u_p - u_m) / (2.0 * hc) + (w_p - w_m) / (2.0 * hz)


@dataclass
class Orbit:
    t: np.ndarray
    points: np.ndarray
    casimir_drift: float
    energy_drift: float
    truncated: bool = False


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_orbit(sys: Union[ConstrainedSystem3D, CanonicalChart], p0, dt: float, steps: int) -> Orbit:
    """Fixed-step RK4 orbit.

    For a 3D system ``p0`` is a point in R^3; for a chart it is ``(chi, z)``.
    Drifts are relative changes of C and H between the first and last sample.
    A chart orbit leaving the rectangle is cut at the last interior sample and
    flagged ``truncated``.
    """
    if not np.isfinite(dt * steps):
        raise ValueError("dt * steps must be finite")
    y0 = np.asarray(p0, dtype=float)
    out = np.empty((steps + 1,) + y0.shape)
    out[0] = y0
    truncated = False

    if isinstance(sys, CanonicalChart):
        if not sys.contains(y0[0], y0[1]):
            raise DomainError("initial point outside the chart")

        def f(y):
            u, w = canonical_velocity(sys, y[0], y[1], check_domain=False)
            return np.array([u, w])

        n = steps
        for k in range(steps):
            y = _rk4(f, out[k], dt)
            if not sys.contains(y[0], y[1]):
                truncated = True
                n = k
                break
            out[k + 1] = y
        out = out[: n + 1]
        energy = sys.h2d(out[:, 0], out[:, 1])
        casimir = np.full(len(out), sys.c_value)
    else:
        f = sys.velocity
        for k in range(steps):
            out[k + 1] = _rk4(f, out[k], dt)
        energy = sys.eval_hamiltonian(out)
        casimir = sys.eval_casimir(out)

    def rel(a):
        scale = abs(a[0]) if a[0] != 0 else 1.0
        return float(abs(a[-1] - a[0]) / scale)

    t = dt * np.arange(len(out))
    return Orbit(t=t, points=out, casimir_drift=rel(casimir), energy_drift=rel(energy), truncated=truncated)
