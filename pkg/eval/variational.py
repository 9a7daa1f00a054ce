"""Variational forms of the transport problem.

For trial fields psi with psi(., ., Em) = 0 and test fields v with
v(., ., E0) = 0,

    B(psi, v) = B2(psi, v) + B1(psi, v) + B0(psi, v) = F(v),
    F(v) = <f, v> + int_{Gamma_-} |w . nu| g v,

with f = T psi and g the inflow trace of psi.  All pairings share the grid of
``TransportContext`` with the graded pairing energy rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from core.errors import DomainError
from core.fields import builtin_fields
from core.kinematics import mu_dE
from core.phase import trace_inner
from core.quadrature import stable_sum
from eval.collision import apply_rows, restricted_adjoint_apply
from eval.transport import (
    TransportContext,
    _a1_adjoint_rows,
    _a2_adjoint_rows,
    grid_rows,
    lowered_a2_terms,
    pair,
    transport_apply,
)

VANISHING_TOL = 1e-12
B2_VARIANTS = ("hyper", "lowered")


@dataclass
class BilinearReport:
    """Bilinear form pieces for one (psi, v) pair; B_total = B0 + B1 + B2."""

    B0: float
    B1: float
    B2: float
    B_total: float
    F: float
    residual: float
    psi: str = ""
    v: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _name(field: Any) -> str:
    return str(getattr(field, "name", "field"))


def _require_vanishing(field: Any, energy: float, what: str, ctx: TransportContext) -> None:
    """Reject fields that do not vanish at ``energy`` on the grid samples."""
    xr, wr, _ = grid_rows(ctx)
    worst = float(np.max(np.abs(field.value(xr, wr, energy)))) if len(xr) else 0.0
    if worst > VANISHING_TOL:
        raise DomainError(f"{what} field {_name(field)} does not vanish at E={energy} "
                          f"(max |value| = {worst:.3e})")


def _trace(psi: Any, v: Any, side: str, ctx: TransportContext) -> float:
    return trace_inner(psi, v, side, ctx.space)


def bilinear_B0(psi: Any, v: Any, ctx: TransportContext) -> float:
    """<psi, -w . grad_x v + Sigma v - K_r* v> + <psi, v>_{Gamma_+}.

    Under ``ctx.drop_outflow_trace`` the Gamma_+ term is left out.
    """
    cc = ctx.collision

    def adjoint_local(xr: np.ndarray, wr: np.ndarray, e: float) -> np.ndarray:
        local = -v.advect(xr, wr, e) + ctx.xs.total(xr, wr, e) * v.value(xr, wr, e)
        return local - np.asarray(restricted_adjoint_apply(v, xr, wr, e, cc))

    volume = pair(adjoint_local, psi, ctx)
    if ctx.drop_outflow_trace:
        return volume
    return volume + _trace(psi, v, "+", ctx)


def bilinear_B1(psi: Any, v: Any, ctx: TransportContext) -> float:
    """int psi (A1* v) over G x S x I."""
    cc = ctx.collision

    def a1_star(xr: np.ndarray, wr: np.ndarray, e: float) -> np.ndarray:
        return np.asarray(apply_rows(_a1_adjoint_rows, xr, wr, cc, v, e, cc))

    return pair(a1_star, psi, ctx)


def bilinear_B2(psi: Any, v: Any, ctx: TransportContext, variant: str = "hyper") -> float:
    """int psi (A2* v), with A2* v as an order-2 finite part or in lowered form.

    The lowered form consists of three order-1 finite parts and three
    diagonal terms; the last of these carries the Laplace-Beltrami operator
    and is paired as pi sigma_hat_2 (d_E mu)(E',E') <grad_S psi, grad_S v>.
    """
    if variant not in B2_VARIANTS:
        raise DomainError(f"B2 variant must be one of {B2_VARIANTS}, got {variant!r}")
    space = ctx.space
    _require_vanishing(psi, space.em, "trial", ctx)
    _require_vanishing(v, space.e0, "test", ctx)
    cc = ctx.collision
    if variant == "hyper":

        def a2_star(xr: np.ndarray, wr: np.ndarray, e: float) -> np.ndarray:
            return np.asarray(apply_rows(_a2_adjoint_rows, xr, wr, cc, v, e, cc))

        return pair(a2_star, psi, ctx)
    return sum(lowered_b2_terms(psi, v, ctx).values())


def lowered_b2_terms(psi: Any, v: Any, ctx: TransportContext) -> Dict[str, float]:
    """The six order-1 terms of the lowered B2."""
    cc = ctx.collision
    xs = ctx.xs
    keys = ("sigma_dE_pf", "energy_pf", "circle_pf", "sigma_dE_diag", "energy_diag")

    def five(xr: np.ndarray, wr: np.ndarray, e: float) -> np.ndarray:
        terms = lowered_a2_terms(xr, wr, v, e, cc)
        return np.stack([terms[k] for k in keys], axis=-1)

    xr, wr, weights = grid_rows(ctx)
    en, we = ctx.pairing_energies()
    acc: List[np.ndarray] = []
    grad_acc: List[np.ndarray] = []
    for e, w_e in zip(en, we):
        e = float(e)
        vals = np.concatenate(
            [five(xr[i:i + cc.chunk_size], wr[i:i + cc.chunk_size], e)
             for i in range(0, len(xr), cc.chunk_size)]
        )
        acc.append(w_e * (weights * psi.value(xr, wr, e))[:, None] * vals)
        grad = np.sum(psi.grad_s(xr, wr, e) * v.grad_s(xr, wr, e), axis=-1)
        coef = math.pi * xs.sigma_hat[2](xr, e, e) * float(mu_dE(e, e))
        grad_acc.append(w_e * weights * coef * grad)
    stacked = np.asarray(acc)
    out = {k: stable_sum(stacked[..., i]) for i, k in enumerate(keys)}
    out["gradient_diag"] = stable_sum(np.asarray(grad_acc))
    return out


def linear_form(psi: Any, v: Any, ctx: TransportContext, f: Optional[Any] = None) -> float:
    """F(v) = <f, v> + <g, v>_{Gamma_-} with f = T psi (refined) and g = psi."""
    if f is None:

        def f(xr: np.ndarray, wr: np.ndarray, e: float) -> np.ndarray:
            return np.asarray(transport_apply(psi, xr, wr, e, ctx, "refined"))

    return pair(f, v, ctx) + _trace(psi, v, "-", ctx)


def bilinear_report(psi: Any, v: Any, ctx: TransportContext, b2_variant: str = "hyper",
                    f: Optional[Any] = None) -> BilinearReport:
    b0 = bilinear_B0(psi, v, ctx)
    b1 = bilinear_B1(psi, v, ctx)
    b2 = bilinear_B2(psi, v, ctx, b2_variant)
    total = b0 + b1 + b2
    rhs = linear_form(psi, v, ctx, f)
    ctx._log(f"B({_name(psi)}, {_name(v)}): B0={b0:.8g} B1={b1:.8g} B2={b2:.8g} F={rhs:.8g}")
    return BilinearReport(b0, b1, b2, total, rhs, abs(total - rhs), _name(psi), _name(v))


def _tabulated(psi: Any, ctx: TransportContext) -> Any:
    """T psi on the pairing grid, computed once and reused for every test field."""
    xr, wr, _ = grid_rows(ctx)
    en, _ = ctx.pairing_energies()
    table = {float(e): np.asarray(transport_apply(psi, xr, wr, float(e), ctx, "refined"))
             for e in en}

    def f(xs: np.ndarray, ws: np.ndarray, e: float) -> np.ndarray:
        return table[float(e)]

    return f


def variational_residual(psi: Any, ctx: TransportContext,
                         tests: Optional[Iterable[Any]] = None,
                         b2_variant: str = "hyper") -> BilinearReport:
    """Worst |B(psi, v) - F(v)| over the test battery, with f = T psi and g = psi.

    Without ``tests`` the built-in test fields (vanishing at E0) are used.
    """
    if tests is None:
        space = ctx.space
        tests = builtin_fields(space.radius, space.e0, space.em).test.values()
    test_list = list(tests)
    if not test_list:
        raise DomainError("variational_residual needs at least one test field")
    f = _tabulated(psi, ctx)
    worst: Optional[BilinearReport] = None
    for v in test_list:
        report = bilinear_report(psi, v, ctx, b2_variant, f)
        if worst is None or report.residual > worst.residual:
            worst = report
    assert worst is not None
    return worst


def l2_norm(field: Any, ctx: TransportContext) -> float:
    return math.sqrt(max(pair(lambda xr, wr, e: field.value(xr, wr, e), field, ctx), 0.0))


def b0_bound_estimate(ctx: TransportContext, trials: Iterable[Any], tests: Iterable[Any]
                      ) -> Tuple[float, Dict[str, Any]]:
    """Sampled sup of |B0(psi, v)| / (||psi|| ||v||); a diagnostic, not a proof of the bound."""
    best = 0.0
    where: Dict[str, Any] = {}
    test_list = list(tests)
    norms = {id(v): l2_norm(v, ctx) for v in test_list}
    for psi in trials:
        n_psi = l2_norm(psi, ctx)
        for v in test_list:
            denom = n_psi * norms[id(v)]
            if denom == 0.0:
                continue
            ratio = abs(bilinear_B0(psi, v, ctx)) / denom
            if ratio > best:
                best, where = ratio, {"psi": _name(psi), "v": _name(v)}
    return best, where
