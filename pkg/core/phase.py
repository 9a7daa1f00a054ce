"""Phase space G x S x I on a ball.

G is the open ball of radius ``radius`` centred at the origin, S the unit
sphere and I = [E0, Em].  The boundary splits into Gamma_- (w . nu < 0, inflow),
Gamma_+ (w . nu > 0) and Gamma_0.  Inner products are tensor-product
quadratures; boundary direction integrals use hemisphere rules aligned with
the normal so |w . nu| is integrated exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.stats import qmc

from core.errors import DomainError
from core.quadrature import (
    QuadratureSpec,
    gauss_legendre,
    interval_rule,
    stable_sum,
    two_sided_rule,
)
from core.sphere import hemisphere_rule, sphere_rule

FieldLike = Union[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray], Any]


def _evaluator(g: FieldLike) -> Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]:
    return g.value if hasattr(g, "value") else g


@dataclass(frozen=True)
class PhaseSpace:
    radius: float = 1.0
    e0: float = 1.0
    em: float = 2.0
    sphere_polar: int = 8
    sphere_azimuth: int = 16
    radial_nodes: int = 4
    ball_polar: int = 4
    ball_azimuth: int = 8
    energy_nodes: int = 8

    def __post_init__(self) -> None:
        if not self.radius > 0.0:
            raise DomainError(f"radius must be positive, got {self.radius}")
        if not self.e0 > 0.0:
            raise DomainError(f"E0 must be positive, got {self.e0}")
        if not self.em > self.e0:
            raise DomainError(f"Em must exceed E0, got E0={self.e0}, Em={self.em}")
        for name in ("sphere_polar", "sphere_azimuth", "radial_nodes", "ball_polar",
                     "ball_azimuth", "energy_nodes"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    # ------------------------------------------------------------- rules
    @cached_property
    def ball(self) -> Tuple[np.ndarray, np.ndarray]:
        """Points and weights in G (weights sum to the ball volume)."""
        t, wt = gauss_legendre(self.radial_nodes)
        r = 0.5 * self.radius * (t + 1.0)
        wr = 0.5 * self.radius * wt * r * r
        dirs, wd = sphere_rule(self.ball_polar, self.ball_azimuth)
        pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        return pts, np.outer(wr, wd).ravel()

    @cached_property
    def directions(self) -> Tuple[np.ndarray, np.ndarray]:
        return sphere_rule(self.sphere_polar, self.sphere_azimuth)

    @cached_property
    def energies(self) -> Tuple[np.ndarray, np.ndarray]:
        return interval_rule(self.e0, self.em, self.energy_nodes)

    @cached_property
    def boundary(self) -> Tuple[np.ndarray, np.ndarray]:
        """Points on the boundary sphere and surface weights."""
        dirs, wd = sphere_rule(self.ball_polar, 2 * self.ball_azimuth)
        return self.radius * dirs, self.radius**2 * wd

    def energy_rule(self, q: Optional[QuadratureSpec] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Energy nodes: the plain rule, or one graded toward E0 and Em when ``q`` is given."""
        if q is None:
            return self.energies
        return two_sided_rule(self.e0, self.em, q)

    def grid(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable (x, w, E) arrays of shapes (Nx,1,1,3), (1,Nw,1,3), (1,1,NE) and weights."""
        x, wx = self.ball
        w, ww = self.directions
        e, we = self.energies
        weights = wx[:, None, None] * ww[None, :, None] * we[None, None, :]
        return x[:, None, None, :], w[None, :, None, :], e[None, None, :], weights

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature of grid values over G x S x I."""
        *_, weights = self.grid()
        return stable_sum(np.broadcast_to(values, weights.shape) * weights)

    def normal(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) / self.radius

    def contains(self, x: Any) -> bool:
        return bool(np.linalg.norm(np.asarray(x, dtype=float)) <= self.radius * (1 + 1e-12))


@dataclass(frozen=True)
class BoundarySample:
    y: np.ndarray
    omega: np.ndarray
    energy: float
    sign: int


def boundary_sample(y: Any, omega: Any, energy: float, radius: float) -> BoundarySample:
    y = np.asarray(y, dtype=float)
    nu = y / np.linalg.norm(y)
    if abs(np.linalg.norm(y) - radius) > 1e-10 * max(1.0, radius):
        raise DomainError(f"point {y} is not on the boundary sphere of radius {radius}")
    dot = float(np.dot(np.asarray(omega, dtype=float), nu))
    sign = 0 if abs(dot) <= 1e-14 else (1 if dot > 0 else -1)
    return BoundarySample(y, np.asarray(omega, dtype=float), float(energy), sign)


def escape_time(x: Any, omega: Any, radius: float) -> np.ndarray:
    """Time t >= 0 with x - t w on the boundary sphere."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(omega, dtype=float)
    xw = np.sum(x * w, axis=-1)
    disc = xw * xw + radius * radius - np.sum(x * x, axis=-1)
    return xw + np.sqrt(np.maximum(disc, 0.0))


def l2_inner(psi: FieldLike, v: FieldLike, space: PhaseSpace) -> float:
    """Quadrature of psi v over G x S x I."""
    x, w, e, weights = space.grid()
    f, g = _evaluator(psi), _evaluator(v)
    return stable_sum(np.broadcast_to(f(x, w, e) * g(x, w, e), weights.shape) * weights)


def trace_inner(g1: FieldLike, g2: FieldLike, side: str, space: PhaseSpace,
                n_polar: int = 8, n_azimuth: int = 16) -> float:
    """int_{Gamma_side} g1 g2 |w . nu| over boundary points, directions and energies.

    ``side`` is ``"+"``, ``"-"`` or ``"both"``.
    """
    if side == "both":
        return trace_inner(g1, g2, "+", space, n_polar, n_azimuth) + trace_inner(
            g1, g2, "-", space, n_polar, n_azimuth
        )
    y, wy = space.boundary
    nu = space.normal(y)
    dirs, wd = hemisphere_rule(nu, side, n_polar, n_azimuth)
    e, we = space.energies
    cos = np.abs(np.sum(dirs * nu[:, None, :], axis=-1))
    f, g = _evaluator(g1), _evaluator(g2)
    xs = y[:, None, None, :]
    ws = dirs[:, :, None, :]
    es = e[None, None, :]
    vals = f(xs, ws, es) * g(xs, ws, es)
    weights = wy[:, None, None] * (wd[None, :] * cos)[:, :, None] * we[None, None, :]
    return stable_sum(np.broadcast_to(vals, weights.shape) * weights)


def green_residual(psi: Any, v: Any, space: PhaseSpace) -> float:
    """|int (w.grad psi) v + (w.grad v) psi - int_{dG} (w . nu) psi v|."""
    x, w, e, weights = space.grid()
    vol = psi.advect(x, w, e) * v.value(x, w, e) + v.advect(x, w, e) * psi.value(x, w, e)
    volume = stable_sum(np.broadcast_to(vol, weights.shape) * weights)
    flux = trace_inner(psi, v, "+", space) - trace_inner(psi, v, "-", space)
    return abs(volume - flux)


def phase_points(space: PhaseSpace, count: int, seed: int = 0
                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded Halton points (x, w, E) in the interior of G x S x I.

    Radii stay below 0.95 r and energies 5 % away from the interval ends.
    """
    if count < 0:
        raise DomainError("count must be non-negative")
    if count == 0:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
    u = qmc.Halton(d=6, scramble=True, seed=seed).random(count)

    def unit(cos_col: np.ndarray, phi_col: np.ndarray) -> np.ndarray:
        ct = 2.0 * cos_col - 1.0
        st = np.sqrt(1.0 - ct * ct)
        phi = 2.0 * math.pi * phi_col
        return np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)

    r = 0.95 * space.radius * np.cbrt(u[:, 0])
    x = r[:, None] * unit(u[:, 1], u[:, 2])
    w = unit(u[:, 3], u[:, 4])
    span = space.em - space.e0
    e = space.e0 + span * (0.05 + 0.9 * u[:, 5])
    return x, w, e
