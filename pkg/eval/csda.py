"""Truncation at the kappa cut-off and the CSDA Fokker-Planck operator.

Each singular energy integral K_j psi = H_j(sigma_hat_j C) is split at
E' = u(E) = min(kappa E, Em) into a finite part over [E, u] and a regular
tail over [u, Em].  Replacing sigma_hat_j C on [E, u] by its first-order
Taylor polynomial at E' = E gives, with l = ln(u - E),

    T_k psi = -S_k d_E psi - Q_k psi + w . grad_x psi + Sigma_k psi - K_r,k psi
    S_k     = 2pi sigma_hat_2(E, E) l
    Q_k psi = -pi l sigma_hat_2(E, E) (d_E' mu)(E, E) Lap_S psi
    Sigma_k = Sigma + 2pi sigma_hat_2 / (u - E) - 2pi l d_E' sigma_hat_2 + 2pi l sigma_hat_1
    K_r,k   = K_r + K_{2,0} - K_{1,0}

where K_{j,0} are the regular tails.  When kappa E >= Em the window is
clipped to [E, Em] and the tails vanish.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from core import kinematics
from core.errors import ConfigError, DomainError
from core.finite_part import pf_batch, pf_nodes
from core.phase import PhaseSpace, phase_points, trace_inner
from core.quadrature import QuadratureSpec, graded_rule, two_sided_rule
from eval.collision import (
    TWO_PI,
    CollisionContext,
    _check_order,
    apply_rows,
    circle_integrals,
    field_fn,
    k2_dEp_limit,
    restricted_adjoint_apply,
    restricted_apply,
)
from eval.transport import (
    TransportContext,
    _check_points,
    pair,
    transport_adjoint_apply,
    transport_apply,
)
from eval.variational import _require_vanishing
from performance.report import ConvergenceReport, ConvergenceRow, fit_slope

DEFAULT_SWEEP: Tuple[float, ...] = tuple(1.0 + 2.0**-k for k in range(1, 7))


@dataclass(frozen=True)
class KappaConfig:
    """Cut-off kappa for single evaluations and the sweep used for rate fits."""

    kappa: float = 1.5
    kappa_sweep: Tuple[float, ...] = DEFAULT_SWEEP

    def __post_init__(self) -> None:
        sweep = tuple(float(k) for k in self.kappa_sweep)
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "kappa_sweep", sweep)
        bad = [k for k in (self.kappa,) + sweep if not k > 1.0]
        if bad:
            raise ConfigError(f"kappa values must exceed 1, got {bad}")
        if any(b >= a for a, b in zip(sweep, sweep[1:])):
            raise ConfigError(f"kappa_sweep must decrease strictly toward 1, got {list(sweep)}")

    def to_dict(self) -> Dict[str, Any]:
        return {"kappa": self.kappa, "kappa_sweep": list(self.kappa_sweep)}


def _check_kappa(kappa: float) -> None:
    if not kappa > 1.0:
        raise DomainError(f"kappa must exceed 1, got {kappa}")


def _collision(ctx: Any) -> CollisionContext:
    return ctx.collision if isinstance(ctx, TransportContext) else ctx


def window(e: float, kappa: float, space: PhaseSpace) -> Tuple[float, bool]:
    """Upper end u = min(kappa E, Em) of the singular window and whether it was clipped."""
    reach = kappa * e
    if reach >= space.em:
        return space.em, True
    return reach, False


def _tail_rule(length: float, q: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    return graded_rule(length, replace(q, sqrt_substitution=False))


# ------------------------------------------------------------- row operators


def _singular_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, order: int, upper: float,
                   cc: CollisionContext) -> np.ndarray:
    q = cc.quadrature
    fn = field_fn(psi)
    sigma = cc.xs.sigma_hat[order]
    t = pf_nodes(e, upper, q)
    circ = circle_integrals(fn, x, w, t, e, t, cc.circle_nodes)
    dens = sigma(x[:, None, :], t[None, :], e) * circ
    fx = TWO_PI * sigma(x, e, e) * fn(x, w, e)
    dfx = k2_dEp_limit(psi, x, w, e, cc.xs) if order == 2 else None
    return pf_batch(dens, fx, dfx, e, upper, order, q)


def _tail_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, upper: float,
               cc: CollisionContext) -> np.ndarray:
    """K_{1,0} psi and K_{2,0} psi: regular integrals over [u, Em], graded toward u."""
    em = cc.space.em
    if upper >= em:
        return np.zeros((len(x), 2))
    d, wt = _tail_rule(em - upper, cc.quadrature)
    t = upper + d
    circ = circle_integrals(field_fn(psi), x, w, t, e, t, cc.circle_nodes)
    xt = x[:, None, :]
    gap = t[None, :] - e
    k1 = (cc.xs.sigma_hat[1](xt, t[None, :], e) * circ / gap) @ wt
    k2 = (cc.xs.sigma_hat[2](xt, t[None, :], e) * circ / (gap * gap)) @ wt
    return np.stack([k1, k2], axis=-1)


def _split_rows(x: np.ndarray, w: np.ndarray, psi: Any, e: float, order: int, kappa: float,
                cc: CollisionContext) -> np.ndarray:
    upper, _ = window(e, kappa, cc.space)
    singular = _singular_rows(x, w, psi, e, order, upper, cc)
    regular = _tail_rows(x, w, psi, e, upper, cc)[:, order - 1]
    return np.stack([singular, regular], axis=-1)


def _tail_adjoint_rows(x: np.ndarray, wp: np.ndarray, v: Any, ep: float, kappa: float,
                       cc: CollisionContext) -> np.ndarray:
    """Adjoints of the tails: int_E0^{E'/kappa} sigma_hat_j(E', E) / (E' - E)^j C_v dE."""
    lo = cc.space.e0
    hi = ep / kappa
    if hi <= lo:
        return np.zeros((len(x), 2))
    d, wt = _tail_rule(hi - lo, cc.quadrature)
    t = hi - d
    circ = circle_integrals(field_fn(v), x, wp, ep, t, t, cc.circle_nodes)
    xt = x[:, None, :]
    gap = ep - t[None, :]
    k1 = (cc.xs.sigma_hat[1](xt, ep, t[None, :]) * circ / gap) @ wt
    k2 = (cc.xs.sigma_hat[2](xt, ep, t[None, :]) * circ / (gap * gap)) @ wt
    return np.stack([k1, k2], axis=-1)


def _columns(values: Any) -> Tuple[Any, Any]:
    arr = np.asarray(values, dtype=float)
    first, second = arr[..., 0], arr[..., 1]
    if first.ndim == 0:
        return float(first), float(second)
    return first, second


# ------------------------------------------------------------- public API


def split_K(psi: Any, x: Any, omega: Any, e: float, order: int, kappa: float, ctx: Any
            ) -> Tuple[Any, Any]:
    """(K_{j,1} psi, K_{j,0} psi): the finite part over [E, u] and the tail over [u, Em].

    The two pieces add up to H_j(sigma_hat_j C) at (x, w, E).
    """
    _check_order(order)
    _check_kappa(kappa)
    cc = _collision(ctx)
    if not cc.space.e0 <= e < cc.space.em:
        raise DomainError(f"energy {e} must lie in [E0, Em) = [{cc.space.e0}, {cc.space.em})")
    return _columns(apply_rows(_split_rows, x, omega, cc, psi, e, order, kappa, cc))


def csda_coefficients(x: Any, e: float, kappa: float, ctx: TransportContext,
                      omega: Optional[Any] = None) -> Dict[str, Any]:
    """Coefficients of T_k at energy E.

    ``fokker_planck`` multiplies Lap_S psi in Q_k psi.  ``Sigma_kappa`` is only
    present when ``omega`` is given, since Sigma depends on direction.
    """
    _check_kappa(kappa)
    space = ctx.space
    if not space.e0 <= e < space.em:
        raise DomainError(f"energy {e} must lie in [E0, Em) = [{space.e0}, {space.em})")
    upper, clipped = window(e, kappa, space)
    length = upper - e
    if not length > 0.0:
        raise DomainError(f"empty cut-off window at E={e}, kappa={kappa}")
    ell = math.log(length)
    dell = -1.0 / length if clipped else 1.0 / e
    xs = ctx.xs
    xb = np.asarray(x, dtype=float)
    sigma2 = xs.sigma_hat[2](xb, e, e)
    sigma1 = xs.sigma_hat[1](xb, e, e)
    d2p = xs.sigma2_dEp(xb, e, e)
    d2e = xs.sigma2_dE(xb, e, e)
    out: Dict[str, Any] = {
        "window": upper,
        "clipped": clipped,
        "log_length": ell,
        "S_kappa": TWO_PI * sigma2 * ell,
        "dS_dE": TWO_PI * ((d2p + d2e) * ell + sigma2 * dell),
        "fokker_planck": -math.pi * ell * sigma2 * float(kinematics.mu_dEp(e, e)),
        "sigma_shift": TWO_PI * (sigma2 / length - ell * d2p + ell * sigma1),
        "theta": float(kinematics.mu_sum_identity(e)),
    }
    if omega is not None:
        wb = np.asarray(omega, dtype=float)
        out["Sigma_kappa"] = xs.total(xb, wb, e) + out["sigma_shift"]
    return out


def csda_terms(psi: Any, x: Any, omega: Any, e: float, kappa: float, ctx: TransportContext
               ) -> Dict[str, Any]:
    """Signed terms whose sum is T_k psi."""
    _check_points(x, ctx)
    c = csda_coefficients(x, e, kappa, ctx, omega)
    cc = ctx.collision
    xb = np.asarray(x, dtype=float)
    wb = np.asarray(omega, dtype=float)
    k1_tail, k2_tail = _columns(apply_rows(_tail_rows, x, omega, cc, psi, e, c["window"], cc))
    return {
        "stopping": -c["S_kappa"] * psi.dE(xb, wb, e),
        "fokker_planck": -c["fokker_planck"] * psi.laplace_s(xb, wb, e),
        "advection": psi.advect(xb, wb, e),
        "absorption": c["Sigma_kappa"] * psi.value(xb, wb, e),
        "restricted": -np.asarray(restricted_apply(psi, x, omega, e, cc)),
        "tail": np.asarray(k1_tail) - np.asarray(k2_tail),
    }


def csda_apply(psi: Any, x: Any, omega: Any, e: float, kappa: float, ctx: TransportContext
               ) -> Any:
    """(T_k psi)(x, w, E)."""
    out = np.asarray(sum(csda_terms(psi, x, omega, e, kappa, ctx).values()), dtype=float)
    return float(out) if out.ndim == 0 else out


def csda_adjoint_terms(v: Any, x: Any, omega_p: Any, ep: float, kappa: float,
                       ctx: TransportContext) -> Dict[str, Any]:
    """Signed terms whose sum is T_k* v.

    T_k* v = S_k d_E v + (d_E S_k) v - Q_k v - w . grad_x v + Sigma_k v - K_r,k* v.
    """
    _check_points(x, ctx)
    c = csda_coefficients(x, ep, kappa, ctx, omega_p)
    cc = ctx.collision
    xb = np.asarray(x, dtype=float)
    wb = np.asarray(omega_p, dtype=float)
    k1_tail, k2_tail = _columns(
        apply_rows(_tail_adjoint_rows, x, omega_p, cc, v, ep, kappa, cc)
    )
    return {
        "stopping": c["S_kappa"] * v.dE(xb, wb, ep),
        "stopping_slope": c["dS_dE"] * v.value(xb, wb, ep),
        "fokker_planck": -c["fokker_planck"] * v.laplace_s(xb, wb, ep),
        "advection": -v.advect(xb, wb, ep),
        "absorption": c["Sigma_kappa"] * v.value(xb, wb, ep),
        "restricted": -np.asarray(restricted_adjoint_apply(v, x, omega_p, ep, cc)),
        "tail": np.asarray(k1_tail) - np.asarray(k2_tail),
    }


def csda_adjoint_apply(v: Any, x: Any, omega_p: Any, ep: float, kappa: float,
                       ctx: TransportContext) -> Any:
    """(T_k* v)(x, w', E')."""
    out = np.asarray(sum(csda_adjoint_terms(v, x, omega_p, ep, kappa, ctx).values()), dtype=float)
    return float(out) if out.ndim == 0 else out


def explain_csda(psi: Any, x: Any, omega: Any, e: float, kappa: float, ctx: TransportContext
                 ) -> Dict[str, Any]:
    """Term breakdown of T_k psi at one phase point, next to T psi."""
    terms = {k: float(v) for k, v in csda_terms(psi, x, omega, e, kappa, ctx).items()}
    total = sum(terms.values())
    exact = float(transport_apply(psi, x, omega, e, ctx))
    upper, clipped = window(e, kappa, ctx.space)
    ctx._log_buffer.clear()
    ctx._log("=== CSDA Trace ===")
    ctx._log(f"kappa={kappa:g} window=[{e:.6g}, {upper:.6g}]" + (" (clipped)" if clipped else ""))
    for name, value in terms.items():
        ctx._log(f"  {name}: {value:.10g}")
    ctx._log(f"T_kappa psi: {total:.10g}  T psi: {exact:.10g}  diff: {abs(total - exact):.3e}")
    return {"total": total, "exact": exact, "terms": terms, "window": upper,
            "clipped": clipped, "log": list(ctx._log_buffer)}


# --------------------------------------------------------------- pairing


def csda_energy_rule(space: PhaseSpace, kappa: float, q: QuadratureSpec
                     ) -> Tuple[np.ndarray, np.ndarray]:
    """Energy rule graded toward E0, Em and the kinks of T_k at Em/kappa and kappa E0."""
    _check_kappa(kappa)
    cuts = {space.e0, space.em}
    for b in (space.em / kappa, kappa * space.e0):
        if space.e0 < b < space.em:
            cuts.add(b)
    edges = sorted(cuts)
    rules = [two_sided_rule(a, b, q) for a, b in zip(edges, edges[1:])]
    return np.concatenate([r[0] for r in rules]), np.concatenate([r[1] for r in rules])


def csda_pairing(psi: Any, v: Any, kappa: float, ctx: TransportContext) -> Tuple[float, float]:
    """(<T_k psi, v>, <psi, T_k* v> + boundary flux).

    The flux term is int_{Gamma_+} psi v |w.nu| - int_{Gamma_-} psi v |w.nu|; it
    vanishes when either field has zero trace on dG.
    """
    space = ctx.space
    _require_vanishing(psi, space.em, "trial", ctx)
    _require_vanishing(v, space.e0, "test", ctx)
    energies = csda_energy_rule(space, kappa, ctx.pairing_quadrature)

    def forward(xr: np.ndarray, wr: np.ndarray, e: float) -> np.ndarray:
        return np.asarray(csda_apply(psi, xr, wr, e, kappa, ctx))

    def backward(xr: np.ndarray, wr: np.ndarray, e: float) -> np.ndarray:
        return np.asarray(csda_adjoint_apply(v, xr, wr, e, kappa, ctx))

    lhs = pair(forward, v, ctx, energies)
    flux = trace_inner(psi, v, "+", space) - trace_inner(psi, v, "-", space)
    rhs = pair(backward, psi, ctx, energies) + flux
    ctx._log(f"kappa={kappa:g}: <T_k psi, v>={lhs:.10g} <psi, T_k* v>+flux={rhs:.10g}")
    return lhs, rhs


# ------------------------------------------------------------ convergence


PointOp = Callable[[np.ndarray, np.ndarray, float], float]


def _sweep(exact: PointOp, approx: Callable[[float], PointOp], ctx: TransportContext,
           config: KappaConfig, points: int, seed: int, field_id: str, kind: str
           ) -> ConvergenceReport:
    sweep = config.kappa_sweep
    if len(sweep) < 3:
        raise DomainError(f"a convergence sweep needs at least 3 kappa values, got {len(sweep)}")
    if points < 1:
        raise DomainError(f"points must be positive, got {points}")
    start = time.perf_counter()
    space = ctx.space
    x, w, e = phase_points(space, points, seed)
    reference = np.array([exact(x[i], w[i], float(e[i])) for i in range(points)])
    volume = (4.0 / 3.0) * math.pi * space.radius**3 * 4.0 * math.pi * (space.em - space.e0)
    rows: List[ConvergenceRow] = []
    for kappa in sweep:
        op = approx(kappa)
        values = np.array([op(x[i], w[i], float(e[i])) for i in range(points)])
        err = np.abs(reference - values)
        row = ConvergenceRow(float(kappa), float(np.max(err)),
                             math.sqrt(volume * float(np.mean(err * err))))
        ctx._log(f"{kind} kappa={kappa:.8g} sup={row.sup_error:.6e} l2={row.l2_error:.6e}")
        rows.append(row)
    slope = fit_slope([r.kappa for r in rows], [r.sup_error for r in rows])
    ctx._log(f"{kind} sweep slope={slope:.4g}")
    return ConvergenceReport(rows, slope, time.perf_counter() - start, field_id, kind)


def convergence_sweep(psi: Any, ctx: TransportContext, config: Optional[KappaConfig] = None,
                      points: int = 16, seed: int = 0) -> ConvergenceReport:
    """Sup and L2 errors of T_k psi against T psi at seeded phase points, per kappa.

    The L2 error is the root mean square over the points scaled by |G x S x I|.
    """
    config = config or KappaConfig()

    def exact(x: np.ndarray, w: np.ndarray, e: float) -> float:
        return float(transport_apply(psi, x, w, e, ctx))

    def approx(kappa: float) -> PointOp:
        return lambda x, w, e: float(csda_apply(psi, x, w, e, kappa, ctx))

    name = str(getattr(psi, "name", "field"))
    return _sweep(exact, approx, ctx, config, points, seed, name, "forward")


def adjoint_convergence_sweep(v: Any, ctx: TransportContext, config: Optional[KappaConfig] = None,
                              points: int = 16, seed: int = 0) -> ConvergenceReport:
    """As ``convergence_sweep`` for T* v against T_k* v."""
    config = config or KappaConfig()

    def exact(x: np.ndarray, w: np.ndarray, e: float) -> float:
        return float(transport_adjoint_apply(v, x, w, e, ctx))

    def approx(kappa: float) -> PointOp:
        return lambda x, w, e: float(csda_adjoint_apply(v, x, w, e, kappa, ctx))

    name = str(getattr(v, "name", "field"))
    return _sweep(exact, approx, ctx, config, points, seed, name, "adjoint")


def sweep_all(fields: Iterable[Any], ctx: TransportContext, config: Optional[KappaConfig] = None,
              points: int = 16, seed: int = 0) -> List[ConvergenceReport]:
    return [convergence_sweep(psi, ctx, config, points, seed) for psi in fields]
