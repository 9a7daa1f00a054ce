"""Geometry of the unit sphere S^2.

Tangent frames, the alignment rotation R(w) = [W2 | W1 | w], exponential and
logarithm maps, scattering circles gamma(E', E, w)(s), surface gradients, the
Laplace-Beltrami operator and the quadrature rules used on S^2.

All functions are vectorised over leading axes; directions carry a trailing
axis of length 3.

Frame convention: away from the poles

    W1 = (-w2, w1, 0) / rho,   W2 = (w1 w3 / rho, w2 w3 / rho, -rho),
    rho = sqrt(w1^2 + w2^2),

so that (W2, W1, w) is a right-handed orthonormal basis.  When rho^2 falls
below ``pole_threshold`` the fixed pair W2 = e1, W1 = sign(w3) e2 is used,
re-orthogonalised against w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Optional, Tuple

import numpy as np

from core import kinematics
from core.errors import GeometryError, KinematicsError
from core.quadrature import gauss_legendre, weighted_sum

POLE_THRESHOLD = 1e-8
UNIT_TOL = 1e-12


def as_directions(omega: Any, check: bool = True) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if w.shape[-1:] != (3,):
        raise GeometryError(f"directions need a trailing axis of length 3, got shape {w.shape}")
    if check and np.any(np.abs(np.linalg.norm(w, axis=-1) - 1.0) > 1e-10):
        raise GeometryError("direction is not a unit vector")
    return w


def normalize(v: Any) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Direction:
    """A point on S^2."""

    components: np.ndarray

    def __post_init__(self) -> None:
        comps = np.asarray(self.components, dtype=float).reshape(3)
        if abs(float(np.linalg.norm(comps)) - 1.0) > UNIT_TOL:
            raise GeometryError(f"direction {comps} is not unit length")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_vector(cls, v: Any) -> "Direction":
        return cls(normalize(v))


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector at ``base`` stored by its coefficients in (W1, W2)."""

    base: np.ndarray
    coeffs: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        w1, w2 = frame(self.base)
        return self.coeffs[..., 0:1] * w1 + self.coeffs[..., 1:2] * w2

    @classmethod
    def from_ambient(cls, base: Any, vec: Any) -> "TangentVector":
        base = as_directions(base)
        w1, w2 = frame(base)
        v = project_tangent(vec, base)
        coeffs = np.stack([np.sum(v * w1, axis=-1), np.sum(v * w2, axis=-1)], axis=-1)
        return cls(base, coeffs)


@dataclass(frozen=True)
class FrameAtlas:
    """Frame chart with a configurable pole threshold on w1^2 + w2^2."""

    pole_threshold: float = POLE_THRESHOLD

    def frame(self, omega: Any) -> Tuple[np.ndarray, np.ndarray]:
        return frame(omega, self.pole_threshold)

    def rotation_to(self, omega: Any) -> np.ndarray:
        return rotation_to(omega, self.pole_threshold)


def frame(omega: Any, pole_threshold: float = POLE_THRESHOLD) -> Tuple[np.ndarray, np.ndarray]:
    """Return (W1, W2) spanning the tangent plane at ``omega``."""
    w = as_directions(omega, check=False)
    w1c, w2c, w3c = w[..., 0], w[..., 1], w[..., 2]
    rho2 = w1c * w1c + w2c * w2c
    near_pole = rho2 < pole_threshold
    rho = np.sqrt(np.where(near_pole, 1.0, rho2))
    zero = np.zeros_like(rho)
    big1 = np.stack([-w2c / rho, w1c / rho, zero], axis=-1)
    big2 = np.stack([w1c * w3c / rho, w2c * w3c / rho, -rho], axis=-1)
    if np.any(near_pole):
        # only pole rows: e1 is parallel to w on the equator
        wp = w[near_pole]
        fallback2 = normalize(np.array([1.0, 0.0, 0.0]) - wp[..., :1] * wp)
        big1[near_pole] = np.cross(wp, fallback2)
        big2[near_pole] = fallback2
    return big1, big2


def rotation_to(omega: Any, pole_threshold: float = POLE_THRESHOLD) -> np.ndarray:
    """Rotation with columns (W2, W1, w); maps e3 to w."""
    w = as_directions(omega, check=False)
    big1, big2 = frame(w, pole_threshold)
    return np.stack([big2, big1, w], axis=-1)


def project_tangent(vec: Any, omega: Any) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    w = np.asarray(omega, dtype=float)
    return vec - np.sum(vec * w, axis=-1, keepdims=True) * w


# ---------------------------------------------------------------- circles


def _circle_pieces(ep: Any, e: Any, s: Any) -> Tuple[np.ndarray, ...]:
    s = np.asarray(s, dtype=float)
    cos_t = kinematics.mu(ep, e)
    sin_t = kinematics.sin_scatter(ep, e)
    return cos_t, sin_t, np.cos(s), np.sin(s)


def scatter_circle(ep: Any, e: Any, omega: Any, s: Any) -> np.ndarray:
    """gamma(E', E, w)(s) = R(w) (sqrt(1-mu^2) cos s, sqrt(1-mu^2) sin s, mu).

    Energies and ``s`` broadcast against ``omega[..., 0]``.
    """
    w = as_directions(omega, check=False)
    big1, big2 = frame(w)
    cos_t, sin_t, cs, sn = _circle_pieces(ep, e, s)
    a = (sin_t * cs)[..., None]
    b = (sin_t * sn)[..., None]
    c = np.asarray(cos_t)[..., None]
    return a * big2 + b * big1 + c * w


def _circle_derivative(ep: Any, e: Any, omega: Any, s: Any, d_mu: np.ndarray) -> np.ndarray:
    ep_arr = np.asarray(ep, dtype=float)
    e_arr = np.asarray(e, dtype=float)
    if np.any(ep_arr <= e_arr):
        raise KinematicsError("circle derivative is singular at E' = E; use the limit form")
    w = as_directions(omega, check=False)
    big1, big2 = frame(w)
    cos_t, sin_t, cs, sn = _circle_pieces(ep_arr, e_arr, s)
    radial = -d_mu * cos_t / sin_t
    return (radial * cs)[..., None] * big2 + (radial * sn)[..., None] * big1 + np.asarray(
        d_mu
    )[..., None] * w


def scatter_circle_dEp(ep: Any, e: Any, omega: Any, s: Any) -> np.ndarray:
    """Partial of gamma in E' (E' > E)."""
    return _circle_derivative(ep, e, omega, s, kinematics.mu_dEp(ep, e))


def scatter_circle_dE(ep: Any, e: Any, omega: Any, s: Any) -> np.ndarray:
    """Partial of gamma in E (E' > E)."""
    return _circle_derivative(ep, e, omega, s, kinematics.mu_dE(ep, e))


# ---------------------------------------------------------- exp / log maps


def exp_map(omega: Any, zeta: Any) -> np.ndarray:
    """cos|z| w + sin|z| z/|z|; ``zeta`` is an ambient tangent vector or TangentVector."""
    w = as_directions(omega, check=False)
    z = zeta.vector if isinstance(zeta, TangentVector) else np.asarray(zeta, dtype=float)
    n = np.linalg.norm(z, axis=-1, keepdims=True)
    small = n < 1e-15
    safe = np.where(small, 1.0, n)
    out = np.cos(n) * w + np.sin(n) * z / safe
    return np.where(small, w + z, out)


def log_map(omega: Any, omega_p: Any) -> np.ndarray:
    """Inverse of :func:`exp_map`; rejects antipodal pairs."""
    w = as_directions(omega, check=False)
    wp = as_directions(omega_p, check=False)
    c = np.clip(np.sum(w * wp, axis=-1, keepdims=True), -1.0, 1.0)
    v = wp - c * w
    sin_t = np.linalg.norm(np.cross(w, wp), axis=-1, keepdims=True)
    if np.any((c < 0.0) & (sin_t < 1e-12)):
        raise GeometryError("log_map is undefined for antipodal directions")
    theta = np.arctan2(sin_t, c)
    tiny = sin_t < 1e-8
    factor = np.where(tiny, 1.0 + theta * theta / 6.0, theta / np.where(tiny, 1.0, sin_t))
    return factor * v


# --------------------------------------------------- functions on the sphere


@dataclass(frozen=True)
class AmbientFunction:
    """Function on S^2 given through an ambient extension with its jets."""

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None


def surface_gradient(field: AmbientFunction, omega: Any) -> np.ndarray:
    """Projection of the ambient gradient onto T_w(S)."""
    w = as_directions(omega, check=False)
    return project_tangent(field.gradient(w), w)


def laplace_beltrami(field: AmbientFunction, omega: Any) -> np.ndarray:
    """Laplace-Beltrami operator in the local frame.

    The spherical-coordinate operator d_phi^2 / rho^2 + d_theta^2 + (w3/rho) d_theta
    written in the rotated chart centred at w reduces to
    W1' H W1 + W2' H W2 - 2 <w, grad f>, which stays finite at the poles.
    """
    if field.hessian is None:
        raise GeometryError("laplace_beltrami needs the ambient Hessian")
    w = as_directions(omega, check=False)
    big1, big2 = frame(w)
    hess = field.hessian(w)
    grad = field.gradient(w)
    h11 = np.einsum("...i,...ij,...j->...", big1, hess, big1)
    h22 = np.einsum("...i,...ij,...j->...", big2, hess, big2)
    return h11 + h22 - 2.0 * np.sum(w * grad, axis=-1)


def sphere_taylor1(field: AmbientFunction, omega: Any, omega_p: Any) -> Tuple[float, float]:
    """First-order Taylor value f(w) + <grad_S f(w), log_w(w')> and its residual."""
    w = as_directions(omega)
    wp = as_directions(omega_p)
    zeta = log_map(w, wp)
    value = float(field.value(w) + np.sum(surface_gradient(field, w) * zeta, axis=-1))
    return value, float(field.value(wp)) - value


def circle_gradient_integral(
    grad_s: Callable[[np.ndarray], np.ndarray],
    laplacian: Callable[[np.ndarray], np.ndarray],
    ep: float,
    e: float,
    omega: Any,
    wrt: str = "Ep",
    circle_nodes: int = 64,
) -> float:
    """int_0^{2pi} <grad_S f(gamma(s)), d gamma / d E' (or d E)> ds.

    At E' == E the analytic limit -pi (d mu)(E,E) Delta_S f(w) is returned.
    """
    if wrt not in ("Ep", "E"):
        raise GeometryError(f"wrt must be 'Ep' or 'E', got {wrt!r}")
    w = as_directions(omega)
    if ep == e:
        d_mu = kinematics.mu_dEp(e, e) if wrt == "Ep" else kinematics.mu_dE(e, e)
        return float(-math.pi * d_mu * laplacian(w))
    s, ws = circle_rule(circle_nodes)
    pts = scatter_circle(ep, e, w[None, :], s)
    tangent = (scatter_circle_dEp if wrt == "Ep" else scatter_circle_dE)(ep, e, w[None, :], s)
    return weighted_sum(ws, np.sum(grad_s(pts) * tangent, axis=-1))


# --------------------------------------------------------------- quadrature


@lru_cache(maxsize=32)
def circle_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Periodic trapezoid rule on [0, 2pi)."""
    s = 2.0 * math.pi * np.arange(n) / n
    w = np.full(n, 2.0 * math.pi / n)
    return s, w


@lru_cache(maxsize=32)
def sphere_rule(n_polar: int = 24, n_azimuth: int = 48) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre in cos(theta) times trapezoid in phi; weights sum to 4pi."""
    t, wt = gauss_legendre(n_polar)
    phi, wphi = circle_rule(n_azimuth)
    tt, pp = np.meshgrid(t, phi, indexing="ij")
    st = np.sqrt(1.0 - tt * tt)
    pts = np.stack([st * np.cos(pp), st * np.sin(pp), tt], axis=-1).reshape(-1, 3)
    weights = np.outer(wt, wphi).ravel()
    pts.setflags(write=False)
    weights.setflags(write=False)
    return pts, weights


def hemisphere_rule(normal: Any, side: str, n_polar: int = 12, n_azimuth: int = 24
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """Directions with sign(w . normal) == side, aligned so that |w . normal| is a node coordinate.

    Returns points of shape (..., n, 3) for normals of shape (..., 3) and the
    shared weights of shape (n,), summing to 2pi.
    """
    if side not in ("+", "-"):
        raise GeometryError(f"side must be '+' or '-', got {side!r}")
    x, wx = gauss_legendre(n_polar)
    t = 0.5 * (x + 1.0)
    if side == "-":
        t = -t
    phi, wphi = circle_rule(n_azimuth)
    tt, pp = np.meshgrid(t, phi, indexing="ij")
    st = np.sqrt(1.0 - tt * tt)
    local = np.stack([st * np.cos(pp), st * np.sin(pp), tt], axis=-1).reshape(-1, 3)
    weights = np.outer(0.5 * wx, wphi).ravel()
    rot = rotation_to(normalize(normal))
    pts = np.einsum("...ij,nj->...ni", rot, local)
    return pts, weights


def circle_sphere_swap_residual(
    psi: Callable[[np.ndarray], np.ndarray],
    v: Callable[[np.ndarray], np.ndarray],
    ep: float,
    e: float,
    n_polar: int = 24,
    n_azimuth: int = 48,
    circle_nodes: int = 64,
) -> float:
    """|int_S int psi(gamma(E',E,w)(s)) v(w) - int_S int psi(w') v(gamma(E',E,w')(s))|."""
    pts, w = sphere_rule(n_polar, n_azimuth)
    s, ws = circle_rule(circle_nodes)
    circles = scatter_circle(ep, e, pts[:, None, :], s[None, :])
    lhs = weighted_sum(w, v(pts) * (psi(circles) @ ws))
    rhs = weighted_sum(w, psi(pts) * (v(circles) @ ws))
    return abs(lhs - rhs)
