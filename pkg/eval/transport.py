"""Exact transport operator T and its formal adjoint.

T psi = A2 psi + A1 psi + A0 psi with

    A2 psi = -H_2(K̄_2 psi),   A1 psi = H_1(K̄_1 psi),
    A0 psi = w . grad_x psi + Sigma psi - K_r psi.

Three assemblies are available:

    strong   hyper-singular order-2 finite part, as above
    pseudo   A2 rewritten through d/dE of an order-1 finite part
    refined  the pseudo form with every diagonal limit written out:
             -d_E H_1(K̄_2 psi) + H_1((d_E sigma_hat_2) C) + H_1(sigma_hat_2 G_E)
             - 2pi sigma_hat_2 d_E psi + pi sigma_hat_2 (d_E' mu) Lap_S psi
             - 2pi (d_E' sigma_hat_2) psi + A1 psi + A0 psi

where G_E = int <grad_S psi(gamma), d gamma/dE> ds.
"""

from __future__ import annotations

import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import kinematics
from core.errors import DomainError
from core.finite_part import pf_batch, pf_nodes
from core.quadrature import QuadratureSpec, stable_sum
from core.sphere import circle_gradient_integral, circle_rule, scatter_circle, scatter_circle_dE
from eval.collision import (
    FD_STEP_E,
    OUTER_ROUTES,
    TWO_PI,
    CollisionContext,
    _h1_k2_dE_parts,
    apply_rows,
    circle_integrals,
    collision_pseudo_form,
    field_fn,
    hadamard_collision,
    outer_derivative,
    restricted_adjoint_apply,
    restricted_apply,
)

FORMS = ("strong", "pseudo", "refined")
FD_MARGIN = 100
RowFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def _noop(_: str) -> None:
    return None


class TransportContext:
    """Collision context plus the settings of the transport assemblies.

    ``drop_outflow_trace`` selects test functions with vanishing outflow
    trace, in which case the bilinear form carries no Gamma_+ term.
    """

    def __init__(
        self,
        collision: CollisionContext,
        fd_step_E: float = FD_STEP_E,
        form: str = "refined",
        outer_route: str = "fd",
        drop_outflow_trace: bool = False,
        pairing_quadrature: Optional[QuadratureSpec] = None,
        logger: Optional[Callable[[str], None]] = None,
    ) -> None:
        space = collision.space
        if not 0.0 < fd_step_E < (space.em - space.e0) / 10.0:
            raise DomainError(
                f"fd_step_E must lie in (0, (Em-E0)/10), got {fd_step_E}"
            )
        if form not in FORMS:
            raise DomainError(f"unknown transport form {form!r}; expected one of {FORMS}")
        if outer_route not in OUTER_ROUTES:
            raise DomainError(f"outer_route must be one of {OUTER_ROUTES}, got {outer_route!r}")
        self.collision = collision
        self.fd_step_E = fd_step_E
        self.form = form
        self.outer_route = outer_route
        self.drop_outflow_trace = drop_outflow_trace
        self.pairing_quadrature = pairing_quadrature or QuadratureSpec(
            panel_count=6, nodes_per_panel=6
        )
        self._logger: Optional[Callable[[str], None]] = logger
        self._log_buffer: List[str] = []

    @property
    def space(self) -> Any:
        return self.collision.space

    @property
    def xs(self) -> Any:
        return self.collision.xs

    def _log(self, msg: str) -> None:
        if self._logger is not None:
            try:
                self._logger(msg)
            except Exception:
                pass
        self._log_buffer.append(msg)
        if len(self._log_buffer) > 100:
            self._log_buffer.pop(0)

    def pairing_energies(self) -> Tuple[np.ndarray, np.ndarray]:
        """Outer energy rule for pairings, graded toward E0 and Em."""
        return self.space.energy_rule(self.pairing_quadrature)

    def route_at(self, e: float) -> str:
        """Outer-derivative route at energy e.

        Within FD_MARGIN difference steps of E0 or Em this is always
        ``analytic``.
        """
        space = self.space
        margin = FD_MARGIN * self.fd_step_E
        if self.outer_route == "fd" and not (space.e0 + margin <= e <= space.em - margin):
            self._log(f"E={e:.6g} is {margin:g} or closer to the ends; analytic outer route")
            return "analytic"
        return self.outer_route

    def explain_transport(self, psi: Any, x: Any, omega: Any, e: float) -> Dict[str, Any]:
        """Refined-form terms of T psi at one phase point."""
        terms = {k: float(v) for k, v in refined_terms(psi, x, omega, e, self).items()}
        total = sum(terms.values())
        self._log_buffer.clear()
        self._log("=== Transport Trace ===")
        for name, value in terms.items():
            self._log(f"  {name}: {value:.10g}")
        self._log(f"Total T psi: {total:.10g}")
        return {"total": total, "terms": terms, "form": "refined",
                "log": list(self._log_buffer)}


def create_transport_context(
    collision: CollisionContext, logger: Optional[Callable[[str], None]] = None, **options: Any
) -> TransportContext:
    return TransportContext(collision, logger=logger or _noop, **options)


# ----------------------------------------------------------- forward T


def _check_energy(e: float, ctx: TransportContext) -> None:
    space = ctx.space
    if not space.e0 <= e < space.em:
        raise DomainError(f"energy {e} must lie in [E0, Em) = [{space.e0}, {space.em})")


def _check_points(x: Any, ctx: TransportContext) -> None:
    norms = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if np.any(norms > ctx.space.radius * (1.0 + 1e-12)):
        raise DomainError(f"point outside the ball of radius {ctx.space.radius}")


def advection_terms(psi: Any, x: Any, omega: Any, e: float, ctx: TransportContext) -> Any:
    """A0 psi = w . grad_x psi + Sigma psi - K_r psi."""
    x_arr = np.asarray(x, dtype=float)
    w_arr = np.asarray(omega, dtype=float)
    local = psi.advect(x_arr, w_arr, e) + ctx.xs.total(x_arr, w_arr, e) * psi.value(
        x_arr, w_arr, e
    )
    return local - restricted_apply(psi, x, omega, e, ctx.collision)


def refined_terms(psi: Any, x: Any, omega: Any, e: float, ctx: TransportContext
                  ) -> Dict[str, Any]:
    """Signed terms whose sum is the refined form of T psi."""
    _check_energy(e, ctx)
    cc = ctx.collision
    xs = ctx.xs
    route = ctx.route_at(e)

    def mixed_rows(xr: np.ndarray, wr: np.ndarray) -> np.ndarray:
        return np.stack(_h1_k2_dE_parts(xr, wr, psi, e, cc), axis=-1)

    mixed = np.asarray(apply_rows(mixed_rows, x, omega, cc))
    xb = np.asarray(x, dtype=float)
    wb = np.asarray(omega, dtype=float)
    sigma = xs.sigma_hat[2](xb, e, e)
    return {
        "outer": -np.asarray(outer_derivative(psi, x, omega, e, cc, route, ctx.fd_step_E)),
        "sigma_dE_pf": mixed[..., 0],
        "circle_dE_pf": mixed[..., 1],
        "stopping": -TWO_PI * sigma * psi.dE(xb, wb, e),
        "laplace_beltrami": math.pi * sigma * kinematics.mu_dEp(e, e) * psi.laplace_s(xb, wb, e),
        "sigma_dEp": -TWO_PI * xs.sigma2_dEp(xb, e, e) * psi.value(xb, wb, e),
        "A1": np.asarray(hadamard_collision(psi, x, omega, e, 1, cc)),
        "A0": np.asarray(advection_terms(psi, x, omega, e, ctx)),
    }


def transport_apply(psi: Any, x: Any, omega: Any, e: float, ctx: TransportContext,
                    form: Optional[str] = None) -> Any:
    """(T psi)(x, w, E) in the requested form (defaults to ``ctx.form``)."""
    form = form or ctx.form
    if form not in FORMS:
        raise DomainError(f"unknown transport form {form!r}; expected one of {FORMS}")
    _check_energy(e, ctx)
    _check_points(x, ctx)
    cc = ctx.collision
    if form == "strong":
        value = (
            -np.asarray(hadamard_collision(psi, x, omega, e, 2, cc))
            + hadamard_collision(psi, x, omega, e, 1, cc)
            + advection_terms(psi, x, omega, e, ctx)
        )
    elif form == "pseudo":
        x_arr = np.asarray(x, dtype=float)
        w_arr = np.asarray(omega, dtype=float)
        local = psi.advect(x_arr, w_arr, e) + ctx.xs.total(x_arr, w_arr, e) * psi.value(
            x_arr, w_arr, e
        )
        value = local - np.asarray(
            collision_pseudo_form(psi, x, omega, e, cc, ctx.fd_step_E, ctx.route_at(e))
        )
    else:
        value = sum(refined_terms(psi, x, omega, e, ctx).values())
    out = np.asarray(value, dtype=float)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------ adjoints


def _check_lower(ep: float, ctx: TransportContext) -> None:
    space = ctx.space
    if not space.e0 < ep <= space.em:
        raise DomainError(f"energy {ep} must lie in (E0, Em] = ({space.e0}, {space.em}]")


def _lower_density(v: Any, x: np.ndarray, wp: np.ndarray, ep: float, order: int,
                   cc: CollisionContext) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes below E', samples of sigma_hat_j(E', E) C_v(E', E, w') and the value at E = E'."""
    t = pf_nodes(ep, cc.space.e0, cc.quadrature)
    sigma = cc.xs.sigma_hat[order]
    circ = circle_integrals(field_fn(v), x, wp, ep, t, t, cc.circle_nodes)
    dens = sigma(x[:, None, :], ep, t[None, :]) * circ
    fx = TWO_PI * sigma(x, ep, ep) * field_fn(v)(x, wp, ep)
    return t, dens, fx


def _lower_dE_limit(v: Any, x: np.ndarray, wp: np.ndarray, ep: float, cc: CollisionContext
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pieces of d/dE [sigma_hat_2(E', E) C_v(E', E, w')] at E = E'."""
    xs = cc.xs
    sigma = xs.sigma_hat[2](x, ep, ep)
    coef = TWO_PI * xs.sigma2_dE(x, ep, ep) * v.value(x, wp, ep)
    energy = TWO_PI * sigma * v.dE(x, wp, ep)
    circle = -math.pi * sigma * kinematics.mu_dE(ep, ep) * v.laplace_s(x, wp, ep)
    return coef, energy, circle


def _a1_adjoint_rows(x: np.ndarray, wp: np.ndarray, v: Any, ep: float, cc: CollisionContext
                     ) -> np.ndarray:
    _, dens, fx = _lower_density(v, x, wp, ep, 1, cc)
    return -pf_batch(dens, fx, None, ep, cc.space.e0, 1, cc.quadrature)


def _a2_adjoint_rows(x: np.ndarray, wp: np.ndarray, v: Any, ep: float, cc: CollisionContext
                     ) -> np.ndarray:
    _, dens, fx = _lower_density(v, x, wp, ep, 2, cc)
    dfx = sum(_lower_dE_limit(v, x, wp, ep, cc))
    return -pf_batch(dens, fx, dfx, ep, cc.space.e0, 2, cc.quadrature)


def lowered_a2_terms(x: np.ndarray, wp: np.ndarray, v: Any, ep: float, cc: CollisionContext
                     ) -> Dict[str, np.ndarray]:
    """A2* v with the order-2 singularity lowered to order 1 (needs v(E0) = 0).

    Three p.f. integrals of the E-derivative of the density plus their
    diagonal values.
    """
    xs = cc.xs
    e0, q = cc.space.e0, cc.quadrature
    t = pf_nodes(ep, e0, q)
    xt = x[:, None, :]
    circ = circle_integrals(v.value, x, wp, ep, t, t, cc.circle_nodes)
    circ_dE = circle_integrals(v.dE, x, wp, ep, t, t, cc.circle_nodes)
    tang = _lower_tangent(v, x, wp, ep, t, cc)
    coef_lim, energy_lim, circle_lim = _lower_dE_limit(v, x, wp, ep, cc)
    sigma_t = xs.sigma_hat[2](xt, ep, t[None, :])
    return {
        "sigma_dE_pf": -pf_batch(xs.sigma2_dE(xt, ep, t[None, :]) * circ, coef_lim, None, ep, e0,
                                 1, q),
        "energy_pf": -pf_batch(sigma_t * circ_dE, energy_lim, None, ep, e0, 1, q),
        "circle_pf": -pf_batch(sigma_t * tang, circle_lim, None, ep, e0, 1, q),
        "sigma_dE_diag": coef_lim,
        "energy_diag": energy_lim,
        "circle_diag": circle_lim,
    }


def _lower_tangent(v: Any, x: np.ndarray, wp: np.ndarray, ep: float, t: np.ndarray,
                   cc: CollisionContext) -> np.ndarray:
    """int <grad_S v(gamma(E', E, w')(s), E), d gamma/dE> ds on the nodes E = t."""
    s, ws = circle_rule(cc.circle_nodes)
    args = (ep, t[None, :, None], wp[:, None, None, :], s[None, None, :])
    pts = scatter_circle(*args)
    tangent = scatter_circle_dE(*args)
    grad = v.grad_s(x[:, None, None, :], pts, t[None, :, None])
    return np.broadcast_to(np.sum(grad * tangent, axis=-1), pts.shape[:-1]) @ ws


def adjoint_A1_apply(v: Any, x: Any, omega_p: Any, ep: float, ctx: TransportContext) -> Any:
    """A1* v = p.f. int_E0^E' sigma_hat_1(E', E) / (E' - E) int v(gamma(E', E, w')(s), E) ds dE."""
    _check_lower(ep, ctx)
    return apply_rows(_a1_adjoint_rows, x, omega_p, ctx.collision, v, ep, ctx.collision)


def adjoint_A2_apply(v: Any, x: Any, omega_p: Any, ep: float, ctx: TransportContext) -> Any:
    """A2* v = -p.f. int_E0^E' sigma_hat_2(E', E) / (E' - E)^2 int v(gamma, E) ds dE."""
    _check_lower(ep, ctx)
    return apply_rows(_a2_adjoint_rows, x, omega_p, ctx.collision, v, ep, ctx.collision)


def adjoint_A2_lowered(v: Any, x: Any, omega_p: Any, ep: float, ctx: TransportContext) -> Any:
    _check_lower(ep, ctx)

    def rows(xr: np.ndarray, wr: np.ndarray) -> np.ndarray:
        return sum(lowered_a2_terms(xr, wr, v, ep, ctx.collision).values())

    return apply_rows(rows, x, omega_p, ctx.collision)


def transport_adjoint_apply(v: Any, x: Any, omega_p: Any, ep: float, ctx: TransportContext
                            ) -> Any:
    """T* v = A2* v + A1* v - w . grad_x v + Sigma v - K_r* v."""
    _check_lower(ep, ctx)
    x_arr = np.asarray(x, dtype=float)
    w_arr = np.asarray(omega_p, dtype=float)
    local = -v.advect(x_arr, w_arr, ep) + ctx.xs.total(x_arr, w_arr, ep) * v.value(
        x_arr, w_arr, ep
    )
    value = (
        np.asarray(adjoint_A2_apply(v, x, omega_p, ep, ctx))
        + adjoint_A1_apply(v, x, omega_p, ep, ctx)
        + local
        - restricted_adjoint_apply(v, x, omega_p, ep, ctx.collision)
    )
    return float(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------- limits


def circle_gradient_limit_profile(psi: Any, x: Any, omega: Any, e: float, ctx: TransportContext,
                                  gaps: Sequence[float] = (1e-2, 1e-3)) -> List[float]:
    """Deviation of int <grad_S psi(gamma), d gamma/dE'> ds from -pi (d_E' mu)(E,E) Lap_S psi.

    The deviation shrinks like sqrt(E' - E).
    """
    x_arr = np.asarray(x, dtype=float)
    w = np.asarray(omega, dtype=float)
    target = float(-math.pi * kinematics.mu_dEp(e, e) * psi.laplace_s(x_arr, w, e))
    out = []
    for gap in gaps:
        value = circle_gradient_integral(
            lambda pts: psi.grad_s(x_arr, pts, e),
            lambda pts: psi.laplace_s(x_arr, pts, e),
            e + gap,
            e,
            w,
            wrt="Ep",
            circle_nodes=ctx.collision.circle_nodes,
        )
        out.append(abs(value - target))
    return out


def vanishing_limit_profile(v: Any, x: Any, omega: Any, ctx: TransportContext,
                            offsets: Sequence[float] = (0.1, 0.01, 0.001)) -> List[float]:
    """|p.f. int_E0^E' sigma_hat_2 C_v / (E' - E) dE| at E' = E0 + offset.

    For v vanishing at E0 the values tend to 0.
    """
    cc = ctx.collision
    xr, wr = np.asarray(x, dtype=float).reshape(1, 3), np.asarray(omega, dtype=float).reshape(1, 3)
    out = []
    for offset in offsets:
        ep = cc.space.e0 + offset
        _, dens, fx = _lower_density(v, xr, wr, ep, 2, cc)
        out.append(abs(float(pf_batch(dens, fx, None, ep, cc.space.e0, 1, cc.quadrature)[0])))
    return out


# --------------------------------------------------------------- pairing


def grid_rows(ctx: TransportContext) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (x, w) pairs of the phase-space grid as rows, with product weights."""
    x, wx = ctx.space.ball
    dirs, wd = ctx.space.directions
    xr = np.repeat(x, len(dirs), axis=0)
    wr = np.tile(dirs, (len(x), 1))
    return xr, wr, np.outer(wx, wd).ravel()


def pair(op: RowFn, v: Any, ctx: TransportContext,
         energies: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> float:
    """int_{G x S x I} op(x, w, E) v(x, w, E) with the pairing energy rule."""
    xr, wr, weights = grid_rows(ctx)
    en, we = energies if energies is not None else ctx.pairing_energies()
    fn = field_fn(v)
    parts = []
    for e, w_e in zip(en, we):
        parts.append(w_e * weights * np.asarray(op(xr, wr, float(e))) * fn(xr, wr, float(e)))
    return stable_sum(np.asarray(parts))


def pair_fields(psi: Any, v: Any, ctx: TransportContext) -> float:
    return pair(lambda xr, wr, e: field_fn(psi)(xr, wr, e), v, ctx)
