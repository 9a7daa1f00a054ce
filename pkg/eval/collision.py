"""Collision operators.

Circle averages K̄_j, the Hadamard compositions H_j(K̄_j psi), the collision
operator in its hyper-singular and pseudo-differential forms, and the
restricted operator K_r = K1 + K2 + K3 with its adjoint.

With C(E', E, w) = int_0^{2pi} psi(x, gamma(E', E, w)(s), E') ds:

    K psi = H_2(sigma_hat_2 C) - H_1(sigma_hat_1 C) + K_r psi,
    H_j(g)(E) = p.f. int_E^Em g(E') / (E' - E)^j dE'.

Evaluators take ``x`` and ``omega`` of shape (..., 3) and a scalar energy and
return an array of the leading shape (a float for single points).
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import kinematics
from core.errors import DomainError, FinitePartError, KinematicsError
from core.finite_part import BivariateDensity, pf1_derivative, pf_batch, pf_nodes
from core.kinematics import CrossSectionSet
from core.phase import PhaseSpace
from core.quadrature import QuadratureSpec, interval_rule
from core.sphere import circle_rule, scatter_circle, scatter_circle_dE, scatter_circle_dEp

TWO_PI = 2.0 * math.pi
FD_STEP_E = 1e-4
OUTER_ROUTES = ("fd", "analytic", "lemma")

FieldFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
RowOp = Callable[..., np.ndarray]


def _noop(_: str) -> None:
    return None


class CollisionContext:
    """Cross sections, phase space and quadrature shared by the collision operators."""

    def __init__(
        self,
        xs: CrossSectionSet,
        space: PhaseSpace,
        quadrature: Optional[QuadratureSpec] = None,
        circle_nodes: int = 32,
        regular_nodes: int = 16,
        sqrt_substitution: bool = True,
        chunk_size: int = 256,
        logger: Optional[Callable[[str], None]] = None,
    ) -> None:
        if circle_nodes < 1 or regular_nodes < 1 or chunk_size < 1:
            raise DomainError(
                f"node counts must be positive, got circle_nodes={circle_nodes}, "
                f"regular_nodes={regular_nodes}, chunk_size={chunk_size}"
            )
        base = quadrature or QuadratureSpec(panel_count=12, nodes_per_panel=8)
        self.xs = xs
        self.space = space
        self.quadrature = replace(base, sqrt_substitution=sqrt_substitution)
        self.circle_nodes = circle_nodes
        self.regular_nodes = regular_nodes
        self.chunk_size = chunk_size
        self._logger: Optional[Callable[[str], None]] = logger
        self._log_buffer: List[str] = []

    @property
    def sqrt_substitution(self) -> bool:
        return self.quadrature.sqrt_substitution

    def _log(self, msg: str) -> None:
        if self._logger is not None:
            try:
                self._logger(msg)
            except Exception:
                pass
        self._log_buffer.append(msg)
        if len(self._log_buffer) > 100:
            self._log_buffer.pop(0)

    def settings(self) -> Dict[str, Any]:
        q = self.quadrature
        return {
            "panel_count": q.panel_count,
            "nodes_per_panel": q.nodes_per_panel,
            "endpoint_grading": q.endpoint_grading,
            "sqrt_substitution": q.sqrt_substitution,
            "circle_nodes": self.circle_nodes,
            "regular_nodes": self.regular_nodes,
        }

    def explain_collision(self, psi: Any, x: Any, omega: Any, e: float) -> Dict[str, Any]:
        """Term-by-term breakdown of K psi at one phase point."""
        terms = {
            "H2": float(hadamard_collision(psi, x, omega, e, 2, self)),
            "H1": float(hadamard_collision(psi, x, omega, e, 1, self)),
        }
        terms.update({k: float(v) for k, v in restricted_terms(psi, x, omega, e, self).items()})
        total = terms["H2"] - terms["H1"] + terms["K1"] + terms["K2"] + terms["K3"]
        self._log_buffer.clear()
        self._log("=== Collision Trace ===")
        for name, value in terms.items():
            self._log(f"  {name}: {value:.10g}")
        self._log(f"Total K psi: {total:.10g}")
        return {"total": total, "terms": terms, "settings": self.settings(),
                "log": list(self._log_buffer)}


def create_collision_context(
    xs: CrossSectionSet,
    space: PhaseSpace,
    quadrature: Optional[QuadratureSpec] = None,
    logger: Optional[Callable[[str], None]] = None,
    **options: Any,
) -> CollisionContext:
    return CollisionContext(xs, space, quadrature, logger=logger or _noop, **options)


# ------------------------------------------------------------------ helpers


def field_fn(psi: Any) -> FieldFn:
    """Value callable of a TestField, or the callable itself."""
    return psi.value if hasattr(psi, "value") else psi


def as_rows(x: Any, omega: Any) -> Tuple[np.ndarray, np.ndarray, Tuple[int, ...]]:
    x_arr = np.asarray(x, dtype=float)
    w_arr = np.asarray(omega, dtype=float)
    shape = np.broadcast_shapes(x_arr.shape[:-1], w_arr.shape[:-1])
    xb = np.broadcast_to(x_arr, shape + (3,)).reshape(-1, 3)
    wb = np.broadcast_to(w_arr, shape + (3,)).reshape(-1, 3)
    return xb, wb, shape


def finish(values: np.ndarray, shape: Tuple[int, ...]) -> Any:
    """Restore the leading point shape; trailing axes of the row output are kept."""
    arr = np.asarray(values, dtype=float)
    out = arr.reshape(shape + arr.shape[1:])
    return float(out) if out.ndim == 0 else out


def apply_rows(op: RowOp, x: Any, omega: Any, ctx: CollisionContext, *args: Any) -> Any:
    """Evaluate a row operator op(xr, wr, *args) over (x, omega) in chunks."""
    xb, wb, shape = as_rows(x, omega)
    size = ctx.chunk_size
    parts = [op(xb[i:i + size], wb[i:i + size], *args) for i in range(0, len(xb), size)]
    values = np.concatenate(parts) if parts else np.zeros(0)
    return finish(values, shape)


def circle_integrals(fn: FieldFn, x: np.ndarray, w: np.ndarray, ep: Any, e: Any, at: Any,
                     circle_nodes: int) -> np.ndarray:
    """int_0^{2pi} fn(x, gamma(E', E, w)(s), at) ds.

    ``x`` and ``w`` are rows of shape (P, 3); ``ep``, ``e`` and ``at`` broadcast
    to a node axis of length n.  Returns shape (P, n).
    """
    s, ws = circle_rule(circle_nodes)
    ep_n, e_n, at_n = np.broadcast_arrays(
        np.atleast_1d(np.asarray(ep, dtype=float)),
        np.atleast_1d(np.asarray(e, dtype=float)),
        np.atleast_1d(np.asarray(at, dtype=float)),
    )
    pts = scatter_circle(ep_n[None, :, None], e_n[None, :, None], w[:, None, None, :],
                         s[None, None, :])
    vals = fn(x[:, None, None, :], pts, at_n[None, :, None])
    return np.broadcast_to(vals, pts.shape[:-1]) @ ws


def circle_tangent_integrals(psi: Any, x: np.ndarray, w: np.ndarray, ep: Any, e: Any,
                             wrt: str, circle_nodes: int) -> np.ndarray:
    """int_0^{2pi} <grad_S psi(x, gamma, E'), d gamma / d(E' or E)> ds for E' > E."""
    s, ws = circle_rule(circle_nodes)
    ep_n, e_n = np.broadcast_arrays(np.atleast_1d(np.asarray(ep, dtype=float)),
                                    np.atleast_1d(np.asarray(e, dtype=float)))
    args = (ep_n[None, :, None], e_n[None, :, None], w[:, None, None, :], s[None, None, :])
    pts = scatter_circle(*args)
    tangent = (scatter_circle_dEp if wrt == "Ep" else scatter_circle_dE)(*args)
    grad = psi.grad_s(x[:, None, None, :], pts, ep_n[None, :, None])
    return np.broadcast_to(np.sum(grad * tangent, axis=-1), pts.shape[:-1]) @ ws


def _check_upper(e: float, ctx: CollisionContext) -> None:
    if not ctx.space.e0 <= e < ctx.space.em:
        raise DomainError(f"energy {e} must lie in [E0, Em) = [{ctx.space.e0}, {ctx.space.em})")


def _check_order(order: int) -> None:
    if order not in (1, 2):
        raise FinitePartError(f"order must be 1 or 2, got {order}")


# ------------------------------------------------- circle-limit formulas


def k2_dEp_limit(psi: Any, x: np.ndarray, w: np.ndarray, e: float, xs: CrossSectionSet
                 ) -> np.ndarray:
    """d/dE' of sigma_hat_2 C at E' = E.

    2pi (d_E' sigma_hat_2) psi + sigma_hat_2 (2pi d_E psi - pi (d_E' mu)(E,E) Lap_S psi).
    """
    sigma = xs.sigma_hat[2](x, e, e)
    return TWO_PI * xs.sigma2_dEp(x, e, e) * psi.value(x, w, e) + sigma * (
        TWO_PI * psi.dE(x, w, e) - math.pi * kinematics.mu_dEp(e, e) * psi.laplace_s(x, w, e)
    )


def k2_dE_limit(psi: Any, x: np.ndarray, w: np.ndarray, e: float, xs: CrossSectionSet
                ) -> Tuple[np.ndarray, np.ndarray]:
    """The two pieces of d/dE of sigma_hat_2 C at E' = E: coefficient and circle parts."""
    coef = TWO_PI * xs.sigma2_dE(x, e, e) * psi.value(x, w, e)
    circle = xs.sigma_hat[2](x, e, e) * (
        -math.pi * kinematics.mu_dE(e, e) * psi.laplace_s(x, w, e)
    )
    return coef, circle


# ------------------------------------------------------- row operators


def _hadamard_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, order: int,
                   ctx: CollisionContext) -> np.ndarray:
    em, q = ctx.space.em, ctx.quadrature
    t = pf_nodes(e, em, q)
    sigma = ctx.xs.sigma_hat[order]
    circ = circle_integrals(field_fn(psi), x, w, t, e, t, ctx.circle_nodes)
    dens = sigma(x[:, None, :], t[None, :], e) * circ
    fx = TWO_PI * sigma(x, e, e) * field_fn(psi)(x, w, e)
    dfx = k2_dEp_limit(psi, x, w, e, ctx.xs) if order == 2 else None
    return pf_batch(dens, fx, dfx, e, em, order, q)


def _h1_k2_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, ctx: CollisionContext
                ) -> np.ndarray:
    """H_1(sigma_hat_2 C) at energy e (also used off-grid by the outer difference)."""
    em, q = ctx.space.em, ctx.quadrature
    t = pf_nodes(e, em, q)
    sigma = ctx.xs.sigma_hat[2]
    circ = circle_integrals(psi.value, x, w, t, e, t, ctx.circle_nodes)
    dens = sigma(x[:, None, :], t[None, :], e) * circ
    fx = TWO_PI * sigma(x, e, e) * psi.value(x, w, e)
    return pf_batch(dens, fx, None, e, em, 1, q)


def _h1_k2_dE_parts(x: np.ndarray, w: np.ndarray, psi: Any, e: float, ctx: CollisionContext
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """H_1 of (d_E sigma_hat_2) C and of sigma_hat_2 int <grad_S psi, d gamma/dE> ds."""
    em, q = ctx.space.em, ctx.quadrature
    t = pf_nodes(e, em, q)
    xs = ctx.xs
    xt = x[:, None, :]
    circ = circle_integrals(psi.value, x, w, t, e, t, ctx.circle_nodes)
    tang = circle_tangent_integrals(psi, x, w, t, e, "E", ctx.circle_nodes)
    coef_lim, circle_lim = k2_dE_limit(psi, x, w, e, xs)
    coef = pf_batch(xs.sigma2_dE(xt, t[None, :], e) * circ, coef_lim, None, e, em, 1, q)
    circle = pf_batch(xs.sigma_hat[2](xt, t[None, :], e) * tang, circle_lim, None, e, em, 1, q)
    return coef, circle


def _split_diagonal(p: Any, t: Any, off: Callable[[float, np.ndarray], np.ndarray],
                    on_diagonal: Callable[[float], float]) -> np.ndarray:
    """off(E, E') for E' > E and the circle limit for E' <= E; p is a single energy."""
    shape = np.broadcast_shapes(np.shape(p), np.shape(t))
    e = float(np.ravel(p)[0])
    ts = np.broadcast_to(np.asarray(t, dtype=float), shape).ravel()
    out = np.empty(ts.shape)
    diag = ts <= e
    if diag.any():
        out[diag] = on_diagonal(e)
    if not diag.all():
        out[~diag] = off(e, ts[~diag])
    return out.reshape(shape)


def _first(values: Any) -> float:
    return float(np.ravel(values)[0])


def outer_density(psi: Any, x: np.ndarray, w: np.ndarray, ctx: CollisionContext
                  ) -> BivariateDensity:
    """f(E, E') = sigma_hat_2(x, E', E) C(E', E) for a single row, with both partials.

    ``x`` and ``w`` have shape (1, 3).  The partials take their circle limits
    on E' = E.
    """
    xs, n = ctx.xs, ctx.circle_nodes
    xt = x[:, None, :]
    sigma = xs.sigma_hat[2]

    def circ(e: float, t: np.ndarray) -> np.ndarray:
        return circle_integrals(psi.value, x, w, t, e, t, n)

    def value_off(e: float, t: np.ndarray) -> np.ndarray:
        return (sigma(xt, t[None, :], e) * circ(e, t))[0]

    def d_e_off(e: float, t: np.ndarray) -> np.ndarray:
        tang = circle_tangent_integrals(psi, x, w, t, e, "E", n)
        return (xs.sigma2_dE(xt, t[None, :], e) * circ(e, t)
                + sigma(xt, t[None, :], e) * tang)[0]

    def d_ep_off(e: float, t: np.ndarray) -> np.ndarray:
        jet = (circle_integrals(psi.dE, x, w, t, e, t, n)
               + circle_tangent_integrals(psi, x, w, t, e, "Ep", n))
        return (xs.sigma2_dEp(xt, t[None, :], e) * circ(e, t)
                + sigma(xt, t[None, :], e) * jet)[0]

    def value_diag(e: float) -> float:
        return _first(TWO_PI * sigma(x, e, e) * psi.value(x, w, e))

    def d_e_diag(e: float) -> float:
        coef, circle = k2_dE_limit(psi, x, w, e, xs)
        return _first(coef + circle)

    def d_ep_diag(e: float) -> float:
        return _first(k2_dEp_limit(psi, x, w, e, xs))

    return BivariateDensity(
        lambda p, t: _split_diagonal(p, t, value_off, value_diag),
        lambda p, t: _split_diagonal(p, t, d_e_off, d_e_diag),
        lambda p, t: _split_diagonal(p, t, d_ep_off, d_ep_diag),
    )


def _outer_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, ctx: CollisionContext,
                route: str, step: float) -> np.ndarray:
    """d/dE of H_1(sigma_hat_2 C).

    ``fd`` takes central differences; ``analytic`` differentiates under the
    finite part (pf2 of the density plus pf1 of its E-partial minus the E'
    partial on the diagonal); ``lemma`` feeds each row's density to
    ``pf1_derivative``.
    """
    if route == "fd":
        plus = _h1_k2_rows(x, w, psi, e + step, ctx)
        minus = _h1_k2_rows(x, w, psi, e - step, ctx)
        return (plus - minus) / (2.0 * step)
    if route == "analytic":
        coef, circle = _h1_k2_dE_parts(x, w, psi, e, ctx)
        h2 = _hadamard_rows(x, w, psi, e, 2, ctx)
        return h2 + coef + circle - k2_dEp_limit(psi, x, w, e, ctx.xs)
    if route == "lemma":
        em, q = ctx.space.em, ctx.quadrature
        return np.array([pf1_derivative(outer_density(psi, x[i:i + 1], w[i:i + 1], ctx), e, em, q)
                         for i in range(len(x))])
    raise DomainError(f"outer derivative route must be one of {OUTER_ROUTES}, got {route!r}")


def _k1_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, ctx: CollisionContext
             ) -> np.ndarray:
    dirs, wd = ctx.space.directions
    en, we = ctx.space.energies
    xr = x[:, None, None, :]
    ker = ctx.xs.sigma_r1(xr, dirs[None, :, None, :], w[:, None, None, :], en[None, None, :], e)
    vals = field_fn(psi)(xr, dirs[None, :, None, :], en[None, None, :])
    prod = np.broadcast_to(ker * vals, (len(x), len(dirs), len(en)))
    return np.einsum("pij,i,j->p", prod, wd, we)


def _k2_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, ctx: CollisionContext
             ) -> np.ndarray:
    dirs, wd = ctx.space.directions
    xr = x[:, None, :]
    ker = ctx.xs.sigma_r2(xr, dirs[None, :, :], w[:, None, :], e)
    vals = field_fn(psi)(xr, dirs[None, :, :], e)
    return np.broadcast_to(ker * vals, (len(x), len(dirs))) @ wd


def _k3_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, ctx: CollisionContext
             ) -> np.ndarray:
    if e >= ctx.space.em:
        return np.zeros(len(x))
    en, we = interval_rule(e, ctx.space.em, ctx.regular_nodes)
    circ = circle_integrals(field_fn(psi), x, w, en, e, en, ctx.circle_nodes)
    sig = ctx.xs.sigma_hat3(x[:, None, :], en[None, :], e)
    return (sig * circ) @ we


def _k1_adjoint_rows(x: np.ndarray, wp: np.ndarray, v: Any, ep: float, ctx: CollisionContext
                     ) -> np.ndarray:
    dirs, wd = ctx.space.directions
    en, we = ctx.space.energies
    xr = x[:, None, None, :]
    ker = ctx.xs.sigma_r1(xr, wp[:, None, None, :], dirs[None, :, None, :], ep, en[None, None, :])
    vals = field_fn(v)(xr, dirs[None, :, None, :], en[None, None, :])
    prod = np.broadcast_to(ker * vals, (len(x), len(dirs), len(en)))
    return np.einsum("pij,i,j->p", prod, wd, we)


def _k2_adjoint_rows(x: np.ndarray, wp: np.ndarray, v: Any, ep: float, ctx: CollisionContext
                     ) -> np.ndarray:
    dirs, wd = ctx.space.directions
    xr = x[:, None, :]
    ker = ctx.xs.sigma_r2(xr, wp[:, None, :], dirs[None, :, :], ep)
    vals = field_fn(v)(xr, dirs[None, :, :], ep)
    return np.broadcast_to(ker * vals, (len(x), len(dirs))) @ wd


def _k3_adjoint_rows(x: np.ndarray, wp: np.ndarray, v: Any, ep: float, ctx: CollisionContext
                     ) -> np.ndarray:
    if ep <= ctx.space.e0:
        return np.zeros(len(x))
    en, we = interval_rule(ctx.space.e0, ep, ctx.regular_nodes)
    circ = circle_integrals(field_fn(v), x, wp, ep, en, en, ctx.circle_nodes)
    sig = ctx.xs.sigma_hat3(x[:, None, :], ep, en[None, :])
    return (sig * circ) @ we


# ----------------------------------------------------------- public API


def circle_average(psi: Any, x: Any, omega: Any, ep: float, e: float,
                   ctx: CollisionContext) -> Any:
    """Bare circle integral int_0^{2pi} psi(x, gamma(E', E, w)(s), E') ds."""
    if ep < e:
        raise KinematicsError(f"circle average needs E' >= E, got E'={ep}, E={e}")
    fn = field_fn(psi)

    def rows(xr: np.ndarray, wr: np.ndarray) -> np.ndarray:
        return circle_integrals(fn, xr, wr, ep, e, ep, ctx.circle_nodes)[:, 0]

    return apply_rows(rows, x, omega, ctx)


def holder_ratios(psi: Any, x: Any, omega: Any, e: float, ctx: CollisionContext,
                  gaps: Sequence[float] = (0.2, 0.1, 0.05, 0.025)) -> List[float]:
    """|h(E') - h(E)| / (E' - E)^(1/2) along E' = E + gap, h the circle integral.

    Gaps reaching past Em are skipped.
    """
    base = circle_average(psi, x, omega, e, e, ctx)
    ratios = []
    for gap in gaps:
        if gap <= 0.0 or e + gap > ctx.space.em:
            continue
        value = circle_average(psi, x, omega, e + gap, e, ctx)
        ratios.append(float(np.max(np.abs(np.asarray(value) - base))) / math.sqrt(gap))
    return ratios


def circle_average_holder_check(psi: Any, x: Any, omega: Any, e: float, ctx: CollisionContext,
                                gaps: Sequence[float] = (0.2, 0.1, 0.05, 0.025)) -> float:
    """Sampled sup of the square-root Hoelder quotient of the circle integral."""
    ratios = holder_ratios(psi, x, omega, e, ctx, gaps)
    return max(ratios) if ratios else 0.0


def hadamard_collision(psi: Any, x: Any, omega: Any, e: float, order: int,
                       ctx: CollisionContext) -> Any:
    """H_j(K̄_j psi)(x, w, E) = p.f. int_E^Em sigma_hat_j C / (E' - E)^j dE'.

    For j = 2 the density derivative at E' = E is the analytic circle limit.
    """
    _check_order(order)
    _check_upper(e, ctx)
    return apply_rows(_hadamard_rows, x, omega, ctx, psi, e, order, ctx)


def restricted_terms(psi: Any, x: Any, omega: Any, e: float, ctx: CollisionContext
                     ) -> Dict[str, Any]:
    return {
        "K1": apply_rows(_k1_rows, x, omega, ctx, psi, e, ctx),
        "K2": apply_rows(_k2_rows, x, omega, ctx, psi, e, ctx),
        "K3": apply_rows(_k3_rows, x, omega, ctx, psi, e, ctx),
    }


def restricted_apply(psi: Any, x: Any, omega: Any, e: float, ctx: CollisionContext) -> Any:
    """K_r psi = K1 psi + K2 psi + K3 psi."""
    terms = restricted_terms(psi, x, omega, e, ctx)
    return terms["K1"] + terms["K2"] + terms["K3"]


def restricted_adjoint_apply(v: Any, x: Any, omega_p: Any, ep: float, ctx: CollisionContext
                             ) -> Any:
    """K_r* v at (x, w', E') with swapped kernel arguments and the lower circle integral."""
    k1 = apply_rows(_k1_adjoint_rows, x, omega_p, ctx, v, ep, ctx)
    k2 = apply_rows(_k2_adjoint_rows, x, omega_p, ctx, v, ep, ctx)
    k3 = apply_rows(_k3_adjoint_rows, x, omega_p, ctx, v, ep, ctx)
    return k1 + k2 + k3


def collision_apply(psi: Any, x: Any, omega: Any, e: float, ctx: CollisionContext) -> Any:
    """K psi in hyper-singular form: H_2(K̄_2 psi) - H_1(K̄_1 psi) + K_r psi."""
    h2 = hadamard_collision(psi, x, omega, e, 2, ctx)
    h1 = hadamard_collision(psi, x, omega, e, 1, ctx)
    return h2 - h1 + restricted_apply(psi, x, omega, e, ctx)


def outer_derivative(psi: Any, x: Any, omega: Any, e: float, ctx: CollisionContext,
                     route: str = "fd", step: float = FD_STEP_E) -> Any:
    """d/dE of H_1(K̄_2 psi) by central differences, under the finite part, or per row
    through ``pf1_derivative``.
    """
    if route == "fd" and not (ctx.space.e0 + step <= e <= ctx.space.em - step):
        raise DomainError(
            f"energy {e} lies within one difference step ({step}) of the interval ends"
        )
    _check_upper(e, ctx)
    return apply_rows(_outer_rows, x, omega, ctx, psi, e, ctx, route, step)


def collision_pseudo_form(psi: Any, x: Any, omega: Any, e: float, ctx: CollisionContext,
                          step: float = FD_STEP_E, route: str = "fd") -> Any:
    """K psi in pseudo-differential form.

    d_E H_1(K̄_2 psi) - H_1(d_E K̄_2 psi) + d_E' K̄_2 psi|_{E'=E} - H_1(K̄_1 psi) + K_r psi
    """
    outer = outer_derivative(psi, x, omega, e, ctx, route, step)

    def inner_rows(xr: np.ndarray, wr: np.ndarray) -> np.ndarray:
        coef, circle = _h1_k2_dE_parts(xr, wr, psi, e, ctx)
        return coef + circle - k2_dEp_limit(psi, xr, wr, e, ctx.xs)

    inner = apply_rows(inner_rows, x, omega, ctx)
    h1 = hadamard_collision(psi, x, omega, e, 1, ctx)
    total = outer - inner - h1 + restricted_apply(psi, x, omega, e, ctx)
    ctx._log(f"pseudo form at E={e}: outer derivative via {route}")
    return total
