"""Hadamard finite-part quadrature of orders 1 and 2.

The production path subtracts the Taylor polynomial of the density at the
singular endpoint and adds the closed-form finite parts of the subtracted
terms::

    p.f. int_x^b 1/(t-x) dt   = ln(b-x)
    p.f. int_x^b 1/(t-x)^2 dt = -1/(b-x)

(and their mirrored lower-endpoint versions).  The remaining regular integral
is evaluated on Gauss-Legendre panels graded toward the singular endpoint, or
under the substitution t = x + u^2 when ``sqrt_substitution`` is set.

``pf_epsilon_limit`` evaluates the same quantities straight from the
epsilon-limit definition and is meant for tests only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Optional, Sequence, Tuple

import numpy as np

from core.errors import FinitePartError
from core.quadrature import QuadratureSpec, graded_rule, weighted_sum

Density = Callable[[np.ndarray], Any]
Density2 = Callable[[np.ndarray, np.ndarray], Any]

DEFAULT_QUADRATURE = QuadratureSpec()


def _finite_array(values: Any, shape: Tuple[int, ...], what: str) -> np.ndarray:
    out = np.broadcast_to(np.asarray(values, dtype=float), shape)
    if not np.all(np.isfinite(out)):
        raise FinitePartError(f"non-finite {what} sample")
    return out


@dataclass(frozen=True)
class PfIntegrand:
    """One-parameter density t -> f(t) with optional derivative."""

    eval: Density
    eval_deriv: Optional[Density] = None
    holder_exponent: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.holder_exponent <= 1.0:
            raise FinitePartError(
                f"holder_exponent must lie in (0, 1], got {self.holder_exponent}"
            )

    def value(self, t: Any) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return _finite_array(self.eval(t), t.shape, "integrand")

    def derivative(self, t: Any) -> np.ndarray:
        if self.eval_deriv is None:
            raise FinitePartError("order-2 finite part needs eval_deriv")
        t = np.asarray(t, dtype=float)
        return _finite_array(self.eval_deriv(t), t.shape, "derivative")

    def at(self, t: float) -> float:
        return float(self.value(t))

    def derivative_at(self, t: float) -> float:
        return float(self.derivative(t))

    @classmethod
    def constant(cls, c: float) -> "PfIntegrand":
        return cls(lambda t: c, lambda t: 0.0)


@dataclass(frozen=True)
class BivariateDensity:
    """Two-variable density f(p, q) with optional first partials.

    ``d_first`` is the partial in p, ``d_second`` the partial in q.  For the
    energy identities p is the primary energy E' and q the secondary E.
    """

    eval: Density2
    d_first: Optional[Density2] = None
    d_second: Optional[Density2] = None

    def value(self, p: Any, q: Any) -> np.ndarray:
        p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
        return _finite_array(self.eval(p, q), p.shape, "density")

    def partial_first(self, p: Any, q: Any) -> np.ndarray:
        if self.d_first is None:
            raise FinitePartError("density is missing its first partial derivative")
        p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
        return _finite_array(self.d_first(p, q), p.shape, "partial")

    def partial_second(self, p: Any, q: Any) -> np.ndarray:
        if self.d_second is None:
            raise FinitePartError("density is missing its second partial derivative")
        p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
        return _finite_array(self.d_second(p, q), p.shape, "partial")

    def along_first(self, q: float) -> PfIntegrand:
        """t -> f(t, q)."""
        deriv = (lambda t: self.d_first(t, q)) if self.d_first is not None else None
        return PfIntegrand(lambda t: self.eval(t, q), deriv)

    def along_second(self, p: float) -> PfIntegrand:
        """t -> f(p, t)."""
        deriv = (lambda t: self.d_second(p, t)) if self.d_second is not None else None
        return PfIntegrand(lambda t: self.eval(p, t), deriv)


def finite_part_rule(length: float, q: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Offsets d > 0 from the singular endpoint and weights for the regular remainder.

    Under ``sqrt_substitution`` the offsets are u^2 on plain panels in u and
    the weights carry the Jacobian 2u.
    """
    if q.sqrt_substitution:
        # integrand is smooth in u, so plain panels keep the cancellation bounded
        u, w = graded_rule(math.sqrt(length), replace(q, endpoint_grading=1.0))
        return u * u, 2.0 * u * w
    return graded_rule(length, q)


def _remainder(ft: np.ndarray, fx: Any, dfx: Any, d: np.ndarray, sign: float,
               order: int) -> np.ndarray:
    if order == 1:
        return sign * (ft - fx) / d
    return (ft - fx - dfx * sign * d) / (d * d)


def _moment(fx: Any, dfx: Any, length: float, sign: float, order: int) -> Any:
    log_len = math.log(length)
    if order == 1:
        return sign * log_len * fx
    return sign * log_len * dfx - fx / length


def _finite_part(f: PfIntegrand, x: float, length: float, sign: float, order: int,
                 q: QuadratureSpec) -> float:
    fx = f.at(x)
    dfx = f.derivative_at(x) if order == 2 else 0.0
    d, w = finite_part_rule(length, q)
    g = _remainder(f.value(x + sign * d), fx, dfx, d, sign, order)
    return weighted_sum(w, g) + _moment(fx, dfx, length, sign, order)


def pf_nodes(x: float, endpoint: float, q: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """Sample points used by :func:`pf_batch` for the interval between x and endpoint."""
    _check_interval(min(x, endpoint), max(x, endpoint), "pf_nodes")
    d, _ = finite_part_rule(abs(endpoint - x), q)
    return x + math.copysign(1.0, endpoint - x) * d


def pf_batch(values: Any, fx: Any, dfx: Any, x: float, endpoint: float, order: int,
             q: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """Finite parts of many densities sampled on the shared nodes of :func:`pf_nodes`.

    ``values`` has the node axis last; ``fx`` (and ``dfx`` for order 2) give
    the density value and derivative at ``x`` for the leading axes.  The
    integral runs from ``x`` to ``endpoint`` in the orientation of pf1_upper /
    pf1_lower.
    """
    if order not in (1, 2):
        raise FinitePartError(f"order must be 1 or 2, got {order}")
    _check_interval(min(x, endpoint), max(x, endpoint), "pf_batch")
    sign = 1.0 if endpoint > x else -1.0
    length = abs(endpoint - x)
    d, w = finite_part_rule(length, q)
    vals = np.asarray(values, dtype=float)
    if vals.shape[-1:] != d.shape:
        raise FinitePartError(f"expected {d.size} samples on the last axis, got {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise FinitePartError("non-finite integrand sample")
    fx_arr = np.asarray(fx, dtype=float)
    dfx_arr = np.asarray(0.0 if order == 1 else dfx, dtype=float)
    g = _remainder(vals, fx_arr[..., None], dfx_arr[..., None], d, sign, order)
    return g @ w + _moment(fx_arr, dfx_arr, length, sign, order)


def _check_interval(lo: float, hi: float, what: str) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise FinitePartError(f"invalid interval for {what}: [{lo}, {hi}]")


def pf1_upper(f: PfIntegrand, x: float, b: float, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """p.f. int_x^b f(t)/(t-x) dt."""
    _check_interval(x, b, "pf1_upper")
    return _finite_part(f, x, b - x, 1.0, 1, q)


def pf2_upper(f: PfIntegrand, x: float, b: float, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """p.f. int_x^b f(t)/(t-x)^2 dt."""
    _check_interval(x, b, "pf2_upper")
    if f.eval_deriv is None:
        raise FinitePartError("pf2_upper needs eval_deriv")
    return _finite_part(f, x, b - x, 1.0, 2, q)


def pf1_lower(f: PfIntegrand, x: float, a: float, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """p.f. int_a^x f(t)/(t-x) dt."""
    _check_interval(a, x, "pf1_lower")
    return _finite_part(f, x, x - a, -1.0, 1, q)


def pf2_lower(f: PfIntegrand, x: float, a: float, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """p.f. int_a^x f(t)/(t-x)^2 dt."""
    _check_interval(a, x, "pf2_lower")
    if f.eval_deriv is None:
        raise FinitePartError("pf2_lower needs eval_deriv")
    return _finite_part(f, x, x - a, -1.0, 2, q)


def pf1_derivative(f2: BivariateDensity, x: float, b: float,
                   q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """d/dx of p.f. int_x^b f(x,t)/(t-x) dt.

    Uses pf2 of f(x,.) + pf1 of (df/dx)(x,.) - (df/dt)(x,x).
    """
    if f2.d_first is None or f2.d_second is None:
        raise FinitePartError("pf1_derivative needs both partial derivatives")
    d_first = f2.d_first
    section = f2.along_second(x)
    term2 = pf2_upper(section, x, b, q)
    term1 = pf1_upper(PfIntegrand(lambda t: d_first(x, t)), x, b, q)
    return term2 + term1 - float(f2.partial_second(x, x))


def pf1_derivative_fd(f2: BivariateDensity, x: float, b: float,
                      q: QuadratureSpec = DEFAULT_QUADRATURE, step: float = 1e-4) -> float:
    """Central difference in x of p.f. int_x^b f(x,t)/(t-x) dt."""
    if not 0.0 < step < b - x:
        raise FinitePartError(f"difference step {step} does not fit inside [{x}, {b}]")

    def at(y: float) -> float:
        return pf1_upper(f2.along_second(y), y, b, q)

    return (at(x + step) - at(x - step)) / (2.0 * step)


def fubini_pf1_residual(f2: BivariateDensity, e0: float, em: float,
                        q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """|int_I p.f.int_E^Em f/(E'-E) dE' dE - int_I' p.f.int_E0^E' f/(E'-E) dE dE'|.

    ``f2`` is f(E', E).  Both outer integrands carry a logarithmic endpoint
    singularity, so the outer rule is graded with extra panels.
    """
    if em <= e0:
        return 0.0
    outer = replace(q.deeper(32), sqrt_substitution=False)
    d, w = graded_rule(em - e0, outer)
    upper = np.array([pf1_upper(f2.along_first(em - di), em - di, em, q) for di in d])
    lower = np.array([-pf1_lower(f2.along_second(e0 + di), e0 + di, e0, q) for di in d])
    return abs(weighted_sum(w, upper) - weighted_sum(w, lower))


def fubini_pf2_residual(f2: BivariateDensity, e0: float, em: float,
                        q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Order-2 analogue of :func:`fubini_pf1_residual`.

    Requires f(E0,E0) = f(Em,Em) = 0, otherwise the two iterated finite parts
    differ by boundary terms.
    """
    if em <= e0:
        return 0.0
    for corner in (e0, em):
        if abs(float(f2.value(corner, corner))) > 1e-12:
            raise FinitePartError(f"order-2 swap needs f({corner},{corner}) = 0")
    outer = replace(q.deeper(32), sqrt_substitution=False)
    d, w = graded_rule(em - e0, outer)
    upper = np.array([pf2_upper(f2.along_first(em - di), em - di, em, q) for di in d])
    lower = np.array([pf2_lower(f2.along_second(e0 + di), e0 + di, e0, q) for di in d])
    return abs(weighted_sum(w, upper) - weighted_sum(w, lower))


def pf2_to_pf1_identity(f2: BivariateDensity, e: float, em: float,
                        q: QuadratureSpec = DEFAULT_QUADRATURE) -> Tuple[float, float]:
    """Both sides of the upper-limit order-lowering identity.

    left  = p.f. int_E^Em f(E',E)/(E'-E)^2 dE'
    right = p.f. int_E^Em (df/dE')(E',E)/(E'-E) dE' + (df/dE')(E,E) - f(Em,E)/(Em-E)
    """
    if not e < em:
        raise FinitePartError(f"pf2_to_pf1_identity needs E < Em, got E={e}, Em={em}")
    if f2.d_first is None:
        raise FinitePartError("pf2_to_pf1_identity needs the E' partial")
    d_first = f2.d_first
    left = pf2_upper(f2.along_first(e), e, em, q)
    right = (
        pf1_upper(PfIntegrand(lambda t: d_first(t, e)), e, em, q)
        + float(f2.partial_first(e, e))
        - float(f2.value(em, e)) / (em - e)
    )
    return left, right


def pf2_to_pf1_identity_lower(f2: BivariateDensity, ep: float, e0: float,
                              q: QuadratureSpec = DEFAULT_QUADRATURE) -> Tuple[float, float]:
    """Lower-limit twin of :func:`pf2_to_pf1_identity`.

    left  = p.f. int_E0^E' f(E',E)/(E'-E)^2 dE
    right = -p.f. int_E0^E' (df/dE)(E',E)/(E'-E) dE - (df/dE)(E',E') - f(E',E0)/(E'-E0)
    """
    if not e0 < ep:
        raise FinitePartError(f"pf2_to_pf1_identity_lower needs E0 < E', got {e0}, {ep}")
    if f2.d_second is None:
        raise FinitePartError("pf2_to_pf1_identity_lower needs the E partial")
    d_second = f2.d_second
    left = pf2_lower(f2.along_second(ep), ep, e0, q)
    # p.f. int h/(E'-E) dE = -pf1_lower(h)
    right = (
        pf1_lower(PfIntegrand(lambda t: d_second(ep, t)), ep, e0, q)
        - float(f2.partial_second(ep, ep))
        - float(f2.value(ep, e0)) / (ep - e0)
    )
    return left, right


def pf1_log_form(f2: BivariateDensity, e: float, em: float,
                 q: QuadratureSpec = DEFAULT_QUADRATURE) -> Tuple[float, float]:
    """pf1 against its partial-integration form.

    right = -int_E^Em ln(E'-E) (df/dE')(E',E) dE' + ln(Em-E) f(Em,E)
    """
    if not e < em:
        raise FinitePartError(f"pf1_log_form needs E < Em, got E={e}, Em={em}")
    left = pf1_upper(f2.along_first(e), e, em, q)
    d, w = graded_rule(em - e, replace(q.deeper(32), sqrt_substitution=False))
    integral = weighted_sum(w, np.log(d) * f2.partial_first(e + d, e))
    right = -integral + math.log(em - e) * float(f2.value(em, e))
    return left, right


def pf_epsilon_limit(f: PfIntegrand, x: float, endpoint: float, order: int,
                     q: QuadratureSpec = DEFAULT_QUADRATURE,
                     levels: Sequence[int] = (3, 4, 5, 6, 7, 8, 9)) -> float:
    """Finite part from its epsilon-limit definition (test oracle).

    Truncated integrals at eps = L * 2**-k are corrected by the divergent
    terms and Richardson-extrapolated in eps.
    """
    if order not in (1, 2):
        raise FinitePartError(f"order must be 1 or 2, got {order}")
    if endpoint == x:
        raise FinitePartError("degenerate interval")
    sign = 1.0 if endpoint > x else -1.0
    length = abs(endpoint - x)
    fx = f.at(x)
    dfx = f.derivative_at(x) if order == 2 else 0.0
    plain = replace(q, sqrt_substitution=False)
    column = []
    for k in levels:
        eps = length * 2.0 ** (-k)
        d, w = graded_rule(length - eps, plain)
        d = d + eps
        g = f.value(x + sign * d) / (sign * d) ** order
        value = weighted_sum(w, g)
        if order == 1:
            value += sign * fx * math.log(eps)
        else:
            value += sign * dfx * math.log(eps) - fx / eps
        column.append(value)
    table = list(column)
    for m in range(1, len(table)):
        factor = 2.0**m
        table = [(factor * table[i + 1] - table[i]) / (factor - 1.0) for i in range(len(table) - 1)]
    return float(table[-1])
