"""Moller kinematics and pluggable cross-section families.

mu(E', E) = sqrt(E (E'+2) / (E' (E+2))) is the cosine of the angle between the
incoming and outgoing directions when a particle drops from E' to E.  All
quantities built from 1 - mu^2 use the cancellation-free form
2 (E'-E) / (E' (E+2)).

Cross sections are plain vectorised callables.  The synthetic family is

    sigma_hat_j(x, E', E) = c_j s(x) exp(-(E'-E)/lambda) (1 + alpha (E'+E)),
    s(x) = 1 / (1 + beta |x|^2),

with restricted kernels built from the same spatial profile:

    sigma^1(x, w', w, E', E) = r1 s(x) (1 + w'.w) / 4pi exp(-((E'-E)/lambda)^2)
    sigma^2(x, w', w, E)     = r2 s(x) sum_l (2l+1)/4pi g^l P_l(w'.w)
    sigma_hat^3(x, E', E)    = sigma_hat_0 for E' >= E, else 0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import eval_legendre

from core.errors import ConfigError, KinematicsError

FOUR_PI = 4.0 * math.pi

# (x, E', E) -> value; x has a trailing axis of length 3
EnergyKernel = Callable[[np.ndarray, Any, Any], np.ndarray]
# (x, omega', omega, E', E) -> value
InelasticKernel = Callable[[np.ndarray, np.ndarray, np.ndarray, Any, Any], np.ndarray]
# (x, omega', omega, E) -> value
ElasticKernel = Callable[[np.ndarray, np.ndarray, np.ndarray, Any], np.ndarray]
# (x, omega, E) -> value
TotalCrossSection = Callable[[np.ndarray, np.ndarray, Any], np.ndarray]


def _energies(ep: Any, e: Any) -> Tuple[np.ndarray, np.ndarray]:
    ep_arr = np.asarray(ep, dtype=float)
    e_arr = np.asarray(e, dtype=float)
    if np.any(e_arr <= 0.0):
        raise KinematicsError(f"energies must be positive, got E={e}")
    if np.any(ep_arr < e_arr):
        raise KinematicsError(f"primary energy below secondary: E'={ep}, E={e}")
    return ep_arr, e_arr


def mu(ep: Any, e: Any) -> Any:
    """Cosine of the scattering angle; exactly 1 when E' == E."""
    ep_arr, e_arr = _energies(ep, e)
    return np.sqrt((e_arr * (ep_arr + 2.0)) / (ep_arr * (e_arr + 2.0)))


def mu_dEp(ep: Any, e: Any) -> Any:
    """Partial of mu in E': -mu / (E'(E'+2))."""
    ep_arr, e_arr = _energies(ep, e)
    return -mu(ep_arr, e_arr) / (ep_arr * (ep_arr + 2.0))


def mu_dE(ep: Any, e: Any) -> Any:
    """Partial of mu in E: mu / (E(E+2))."""
    ep_arr, e_arr = _energies(ep, e)
    return mu(ep_arr, e_arr) / (e_arr * (e_arr + 2.0))


def mu_sum_identity(e: Any) -> Any:
    """(d_E' mu + d_E mu)(E, E); vanishes identically."""
    return mu_dEp(e, e) + mu_dE(e, e)


def one_minus_mu_sq(ep: Any, e: Any) -> Any:
    ep_arr, e_arr = _energies(ep, e)
    return 2.0 * (ep_arr - e_arr) / (ep_arr * (e_arr + 2.0))


def sin_scatter(ep: Any, e: Any) -> Any:
    """sqrt(1 - mu^2), the radius of the scattering circle."""
    return np.sqrt(one_minus_mu_sq(ep, e))


@dataclass
class CrossSectionSet:
    """Coefficient functions and restricted kernels of the collision operator."""

    sigma_hat: Tuple[EnergyKernel, EnergyKernel, EnergyKernel]
    sigma1_dEp: EnergyKernel
    sigma2_dEp: EnergyKernel
    sigma2_dE: EnergyKernel
    sigma_r1: InelasticKernel
    sigma_r2: ElasticKernel
    sigma_hat3: EnergyKernel
    total: TotalCrossSection
    M1: float = math.inf
    M2: float = math.inf
    family: str = "custom"
    params: Dict[str, float] = field(default_factory=dict)
    smoothness: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, **self.params, "M1": self.M1, "M2": self.M2}


DEFAULT_XS_PARAMS: Dict[str, float] = {
    "c0": 0.1,
    "c1": 0.5,
    "c2": 0.5,
    "beta": 0.5,
    "lambda": 2.0,
    "alpha": 0.1,
    "Sigma": 1.0,
    "r1": 0.1,
    "r2": 0.2,
    "g": 0.5,
    "legendre": 2,
    "M1": 5.0,
    "M2": 5.0,
}

_FAMILY_OVERRIDES: Dict[str, Dict[str, float]] = {
    "synthetic": {},
    # x- and energy-independent coefficients, handy for closed-form checks
    "constant": {"beta": 0.0, "lambda": math.inf, "alpha": 0.0},
    "zero": {"c0": 0.0, "c1": 0.0, "c2": 0.0, "r1": 0.0, "r2": 0.0, "Sigma": 0.0},
    # only transport and absorption survive
    "advection": {"c0": 0.0, "c1": 0.0, "c2": 0.0, "r1": 0.0, "r2": 0.0},
}


def _spatial_profile(beta: float) -> Callable[[np.ndarray], np.ndarray]:
    def profile(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 1.0 / (1.0 + beta * np.sum(x * x, axis=-1))

    return profile


def builtin_xs(family_id: str = "synthetic", parameters: Optional[Dict[str, Any]] = None
               ) -> CrossSectionSet:
    """Built-in analytic cross-section families.

    ``family_id`` is one of ``synthetic``, ``constant``, ``zero`` and
    ``advection``; ``parameters`` override the defaults in
    ``DEFAULT_XS_PARAMS``.
    """
    if family_id not in _FAMILY_OVERRIDES:
        raise ConfigError(f"unknown cross-section family: {family_id}")
    p: Dict[str, float] = dict(DEFAULT_XS_PARAMS)
    p.update(_FAMILY_OVERRIDES[family_id])
    for key, val in (parameters or {}).items():
        if key in p:
            try:
                p[key] = float(val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"cross_sections.{key} must be numeric, got {val!r}") from exc
    if not p["lambda"] > 0.0:
        raise ConfigError(f"lambda must be positive, got {p['lambda']}")
    if p["beta"] < 0.0 or p["alpha"] < 0.0:
        raise ConfigError("beta and alpha must be non-negative")
    for key in ("c0", "c1", "c2", "r1", "r2", "Sigma"):
        if p[key] < 0.0:
            raise ConfigError(f"{key} must be non-negative, got {p[key]}")
    legendre_order = int(p["legendre"])
    if legendre_order < 0:
        raise ConfigError(f"legendre must be >= 0, got {legendre_order}")

    profile = _spatial_profile(p["beta"])
    lam, alpha = p["lambda"], p["alpha"]
    inv_lam = 0.0 if math.isinf(lam) else 1.0 / lam

    def decay(ep: Any, e: Any) -> np.ndarray:
        return np.exp(-(np.asarray(ep, dtype=float) - np.asarray(e, dtype=float)) * inv_lam)

    def poly(ep: Any, e: Any) -> np.ndarray:
        return 1.0 + alpha * (np.asarray(ep, dtype=float) + np.asarray(e, dtype=float))

    def make_sigma(c: float) -> EnergyKernel:
        def sigma(x: np.ndarray, ep: Any, e: Any) -> np.ndarray:
            return c * profile(x) * decay(ep, e) * poly(ep, e)

        return sigma

    def make_dEp(c: float) -> EnergyKernel:
        def d_ep(x: np.ndarray, ep: Any, e: Any) -> np.ndarray:
            return c * profile(x) * decay(ep, e) * (alpha - inv_lam * poly(ep, e))

        return d_ep

    def make_dE(c: float) -> EnergyKernel:
        def d_e(x: np.ndarray, ep: Any, e: Any) -> np.ndarray:
            return c * profile(x) * decay(ep, e) * (alpha + inv_lam * poly(ep, e))

        return d_e

    sigma0 = make_sigma(p["c0"])
    r1, r2, g, total = p["r1"], p["r2"], p["g"], p["Sigma"]

    def sigma_hat3(x: np.ndarray, ep: Any, e: Any) -> np.ndarray:
        ep_arr = np.asarray(ep, dtype=float)
        e_arr = np.asarray(e, dtype=float)
        return np.where(ep_arr >= e_arr, sigma0(x, ep_arr, e_arr), 0.0)

    def sigma_r1(x: np.ndarray, wp: np.ndarray, w: np.ndarray, ep: Any, e: Any) -> np.ndarray:
        cos = np.sum(wp * w, axis=-1)
        gap = (np.asarray(ep, dtype=float) - np.asarray(e, dtype=float)) * inv_lam
        return r1 * profile(x) * (1.0 + cos) / FOUR_PI * np.exp(-gap * gap)

    coeffs = [(2 * ell + 1) / FOUR_PI * g**ell for ell in range(legendre_order + 1)]

    def sigma_r2(x: np.ndarray, wp: np.ndarray, w: np.ndarray, e: Any) -> np.ndarray:
        cos = np.clip(np.sum(wp * w, axis=-1), -1.0, 1.0)
        series = sum(c * eval_legendre(ell, cos) for ell, c in enumerate(coeffs))
        return r2 * profile(x) * series

    def sigma_total(x: np.ndarray, w: np.ndarray, e: Any) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(w)[:-1], np.shape(e))
        return np.full(shape, total)

    return CrossSectionSet(
        sigma_hat=(sigma0, make_sigma(p["c1"]), make_sigma(p["c2"])),
        sigma1_dEp=make_dEp(p["c1"]),
        sigma2_dEp=make_dEp(p["c2"]),
        sigma2_dE=make_dE(p["c2"]),
        sigma_r1=sigma_r1,
        sigma_r2=sigma_r2,
        sigma_hat3=sigma_hat3,
        total=sigma_total,
        M1=p["M1"],
        M2=p["M2"],
        family=family_id,
        params={k: v for k, v in p.items() if k not in ("M1", "M2")},
        smoothness={"sigma_hat": "C-inf(I' x I)", "x": "C-inf(G)"},
    )


def parse_xs_config(block: Optional[Dict[str, Any]]) -> CrossSectionSet:
    """Build a cross-section set from the ``cross_sections`` config block."""
    if block is None:
        return builtin_xs()
    if not isinstance(block, dict):
        raise ConfigError("cross_sections must be an object")
    family = str(block.get("family", "synthetic"))
    return builtin_xs(family, {k: v for k, v in block.items() if k != "family"})


def schur_bounds(xs: CrossSectionSet, space: Any, samples: int = 4) -> Tuple[float, float]:
    """Estimated Schur row and column sups of K_r = K1 + K2 + K3.

    Rows integrate |kernel| over the incoming variables (w', E'), columns
    over the outgoing ones (w, E).  The circle term carries the 2pi circle
    measure.  Spatial samples run along the x1 axis.
    """
    from core.quadrature import interval_rule
    from core.sphere import sphere_rule

    dirs, wd = sphere_rule(space.sphere_polar, space.sphere_azimuth)
    e_nodes, we = interval_rule(space.e0, space.em, space.energy_nodes)
    radii = np.linspace(0.0, 0.95 * space.radius, samples)
    row_sup = 0.0
    col_sup = 0.0
    for r in radii:
        x = np.array([r, 0.0, 0.0])
        # axes: (w, E, w', E')
        w = dirs[:, None, None, None, :]
        e = e_nodes[None, :, None, None]
        wp = dirs[None, None, :, None, :]
        ep = e_nodes[None, None, None, :]
        k1 = np.abs(xs.sigma_r1(x, wp, w, ep, e))
        k2 = np.abs(xs.sigma_r2(x, dirs[None, :, :], dirs[:, None, :], 0.0))
        k3 = 2.0 * math.pi * np.abs(xs.sigma_hat3(x, e_nodes[None, :], e_nodes[:, None]))
        weights_in = wd[None, None, :, None] * we[None, None, None, :]
        row1 = np.sum(k1 * weights_in, axis=(2, 3))
        col1 = np.einsum("abcd,a,b->cd", k1, wd, we)
        row2 = k2 @ wd
        col2 = wd @ k2
        row3 = k3 @ we
        col3 = we @ k3
        row_sup = max(row_sup, float(np.max(row1 + row2[:, None] + row3[None, :])))
        col_sup = max(col_sup, float(np.max(col1 + col2[:, None] + col3[None, :])))
    return row_sup, col_sup


def check_schur(xs: CrossSectionSet, space: Any) -> Dict[str, Any]:
    row, col = schur_bounds(xs, space)
    return {"row_sup": row, "col_sup": col, "M1": xs.M1, "M2": xs.M2,
            "ok": row <= xs.M1 and col <= xs.M2}
