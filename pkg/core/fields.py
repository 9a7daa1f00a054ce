"""Smooth phase-space test fields with closed-form derivatives.

Built-in fields are separable, psi(x, w, E) = a(x) Y(w) c(E), and are named by
joining factor ids with ``*``, e.g. ``"ax1*Y10*cm2"``:

    spatial   a1 = 1, ax1 = x1, abub = 1 - |x|^2 / r^2
    angular   Y00 = 1, Y10 = w3, Y11 = w1, Y22 = w1^2 - w2^2
    energy    trial (vanish at Em): cm1 = Em - E, cm2 = (Em - E)^2,
                                    cb = (E - E0)(Em - E)
              test  (vanish at E0): c01 = E - E0, c02 = (E - E0)^2
              neither:              c1 = 1

Angular factors are given by polynomial ambient extensions together with
their gradient and Hessian, which is what the surface gradient and the
Laplace-Beltrami operator consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import DomainError
from core.sphere import AmbientFunction, laplace_beltrami, normalize, project_tangent

Array = np.ndarray


def _zeros_like_points(p: Array) -> Array:
    return np.zeros(np.shape(p)[:-1])


@dataclass(frozen=True)
class SpatialFactor:
    name: str
    value: Callable[[Array], Array]
    gradient: Callable[[Array], Array]


@dataclass(frozen=True)
class AngularFactor:
    name: str
    value: Callable[[Array], Array]
    gradient: Callable[[Array], Array]
    hessian: Callable[[Array], Array]
    degree: int = 0


@dataclass(frozen=True)
class EnergyFactor:
    name: str
    value: Callable[[Array], Array]
    d1: Callable[[Array], Array]
    d2: Callable[[Array], Array]
    vanishing_at: str = "none"


class TestField:
    """Phase-space function psi(x, w, E) with the jets operators need.

    Subclasses implement ``value``, ``grad_x``, ``grad_omega`` (ambient),
    ``hess_omega`` (ambient), ``dE`` and ``d2E``; everything else derives.
    Inputs broadcast: x and w carry a trailing axis of length 3.
    """

    name: str = "field"
    vanishing_at: str = "none"

    def value(self, x: Any, w: Any, e: Any) -> Array:
        raise NotImplementedError

    def grad_x(self, x: Any, w: Any, e: Any) -> Array:
        raise NotImplementedError

    def grad_omega(self, x: Any, w: Any, e: Any) -> Array:
        raise NotImplementedError

    def hess_omega(self, x: Any, w: Any, e: Any) -> Array:
        raise NotImplementedError

    def dE(self, x: Any, w: Any, e: Any) -> Array:
        raise NotImplementedError

    def d2E(self, x: Any, w: Any, e: Any) -> Array:
        raise NotImplementedError

    def grad_s(self, x: Any, w: Any, e: Any) -> Array:
        return project_tangent(self.grad_omega(x, w, e), w)

    def laplace_s(self, x: Any, w: Any, e: Any) -> Array:
        return laplace_beltrami(self.on_sphere(x, e), w)

    def advect(self, x: Any, w: Any, e: Any) -> Array:
        """w . grad_x psi."""
        return np.sum(np.asarray(w, dtype=float) * self.grad_x(x, w, e), axis=-1)

    def on_sphere(self, x: Any, e: Any) -> AmbientFunction:
        """Angular slice at fixed (x, E)."""
        return AmbientFunction(
            value=lambda w: self.value(x, w, e),
            gradient=lambda w: self.grad_omega(x, w, e),
            hessian=lambda w: self.hess_omega(x, w, e),
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


class SeparableField(TestField):
    """psi = a(x) Y(w) c(E)."""

    def __init__(self, a: SpatialFactor, y: AngularFactor, c: EnergyFactor) -> None:
        self.a = a
        self.y = y
        self.c = c
        self.name = f"{a.name}*{y.name}*{c.name}"
        self.vanishing_at = c.vanishing_at

    def _parts(self, x: Any, w: Any, e: Any) -> Tuple[Array, Array, Array]:
        return self.a.value(np.asarray(x, float)), self.y.value(np.asarray(w, float)), \
            self.c.value(np.asarray(e, float))

    def value(self, x: Any, w: Any, e: Any) -> Array:
        a, y, c = self._parts(x, w, e)
        return a * y * c

    def grad_x(self, x: Any, w: Any, e: Any) -> Array:
        _, y, c = self._parts(x, w, e)
        return self.a.gradient(np.asarray(x, float)) * (y * c)[..., None]

    def grad_omega(self, x: Any, w: Any, e: Any) -> Array:
        a, _, c = self._parts(x, w, e)
        return self.y.gradient(np.asarray(w, float)) * (a * c)[..., None]

    def hess_omega(self, x: Any, w: Any, e: Any) -> Array:
        a, _, c = self._parts(x, w, e)
        return self.y.hessian(np.asarray(w, float)) * (a * c)[..., None, None]

    def dE(self, x: Any, w: Any, e: Any) -> Array:
        a, y, _ = self._parts(x, w, e)
        return a * y * self.c.d1(np.asarray(e, float))

    def d2E(self, x: Any, w: Any, e: Any) -> Array:
        a, y, _ = self._parts(x, w, e)
        return a * y * self.c.d2(np.asarray(e, float))


class LinearCombination(TestField):
    """sum_k coef_k psi_k."""

    def __init__(self, terms: Sequence[Tuple[float, TestField]], name: str = "combo") -> None:
        self.terms = [(float(c), f) for c, f in terms]
        self.name = name
        marks = {f.vanishing_at for _, f in self.terms}
        self.vanishing_at = marks.pop() if len(marks) == 1 else "none"

    def _combine(self, method: str, *args: Any) -> Array:
        total: Any = 0.0
        for coef, f in self.terms:
            total = total + coef * getattr(f, method)(*args)
        return np.asarray(total, dtype=float)

    def value(self, x: Any, w: Any, e: Any) -> Array:
        return self._combine("value", x, w, e)

    def grad_x(self, x: Any, w: Any, e: Any) -> Array:
        return self._combine("grad_x", x, w, e)

    def grad_omega(self, x: Any, w: Any, e: Any) -> Array:
        return self._combine("grad_omega", x, w, e)

    def hess_omega(self, x: Any, w: Any, e: Any) -> Array:
        return self._combine("hess_omega", x, w, e)

    def dE(self, x: Any, w: Any, e: Any) -> Array:
        return self._combine("dE", x, w, e)

    def d2E(self, x: Any, w: Any, e: Any) -> Array:
        return self._combine("d2E", x, w, e)


class FiniteDifferenceField(TestField):
    """Wraps a plain callable f(x, w, E); derivatives by central differences.

    The angular extension is f(x, v/|v|, E), homogeneous of degree 0, so its
    ambient gradient is tangent.  First derivatives use ``step``, second
    derivatives ``10 * step``; expect roughly 1e-8 and 1e-6 accuracy.
    """

    def __init__(self, func: Callable[[Array, Array, Array], Array], name: str = "user",
                 step: float = 1e-5, vanishing_at: str = "none",
                 logger: Optional[Callable[[str], None]] = None) -> None:
        self.func = func
        self.name = name
        self.step = step
        self.vanishing_at = vanishing_at
        if logger is not None:
            logger(f"field {name}: derivatives from finite differences (h={step:g}), "
                   "reduced accuracy")

    def value(self, x: Any, w: Any, e: Any) -> Array:
        return np.asarray(self.func(np.asarray(x, float), np.asarray(w, float),
                                    np.asarray(e, float)), dtype=float)

    def _ext(self, x: Any, v: Array, e: Any) -> Array:
        return self.value(x, normalize(v), e)

    def grad_x(self, x: Any, w: Any, e: Any) -> Array:
        x = np.asarray(x, float)
        h = self.step
        cols = []
        for k in range(3):
            dx = np.zeros(3)
            dx[k] = h
            cols.append((self.value(x + dx, w, e) - self.value(x - dx, w, e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def grad_omega(self, x: Any, w: Any, e: Any) -> Array:
        w = np.asarray(w, float)
        h = self.step
        cols = []
        for k in range(3):
            dv = np.zeros(3)
            dv[k] = h
            cols.append((self._ext(x, w + dv, e) - self._ext(x, w - dv, e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def hess_omega(self, x: Any, w: Any, e: Any) -> Array:
        w = np.asarray(w, float)
        h = 10.0 * self.step
        rows = []
        for i in range(3):
            di = np.zeros(3)
            di[i] = h
            row = []
            for j in range(3):
                dj = np.zeros(3)
                dj[j] = h
                val = (self._ext(x, w + di + dj, e) - self._ext(x, w + di - dj, e)
                       - self._ext(x, w - di + dj, e) + self._ext(x, w - di - dj, e))
                row.append(val / (4 * h * h))
            rows.append(np.stack(row, axis=-1))
        return np.stack(rows, axis=-2)

    def dE(self, x: Any, w: Any, e: Any) -> Array:
        h = self.step
        e = np.asarray(e, float)
        return (self.value(x, w, e + h) - self.value(x, w, e - h)) / (2 * h)

    def d2E(self, x: Any, w: Any, e: Any) -> Array:
        h = 10.0 * self.step
        e = np.asarray(e, float)
        return (self.value(x, w, e + h) - 2 * self.value(x, w, e) + self.value(x, w, e - h)) / (
            h * h
        )


class ZeroField(SeparableField):
    def __init__(self) -> None:
        zero = EnergyFactor("c0", lambda e: np.zeros_like(e), lambda e: np.zeros_like(e),
                            lambda e: np.zeros_like(e), "both")
        super().__init__(SPATIAL["a1"](1.0), ANGULAR["Y00"], zero)
        self.name = "zero"


# ----------------------------------------------------------------- factors


def _const_angular(w: Array) -> Array:
    return np.ones(np.shape(w)[:-1])


def _hess_zero(w: Array) -> Array:
    return np.zeros(np.shape(w) + (3,))


def _unit(k: int) -> Callable[[Array], Array]:
    def grad(w: Array) -> Array:
        out = np.zeros(np.shape(w))
        out[..., k] = 1.0
        return out

    return grad


def _y22_grad(w: Array) -> Array:
    return np.stack([2 * w[..., 0], -2 * w[..., 1], np.zeros(np.shape(w)[:-1])], axis=-1)


def _y22_hess(w: Array) -> Array:
    return np.broadcast_to(np.diag([2.0, -2.0, 0.0]), np.shape(w) + (3,)).copy()


ANGULAR: Dict[str, AngularFactor] = {
    "Y00": AngularFactor("Y00", _const_angular, lambda w: np.zeros(np.shape(w)), _hess_zero, 0),
    "Y10": AngularFactor("Y10", lambda w: w[..., 2], _unit(2), _hess_zero, 1),
    "Y11": AngularFactor("Y11", lambda w: w[..., 0], _unit(0), _hess_zero, 1),
    "Y22": AngularFactor("Y22", lambda w: w[..., 0] ** 2 - w[..., 1] ** 2, _y22_grad,
                         _y22_hess, 2),
}


def _spatial_const(radius: float) -> SpatialFactor:
    return SpatialFactor("a1", _const_angular, lambda x: np.zeros(np.shape(x)))


def _spatial_x1(radius: float) -> SpatialFactor:
    return SpatialFactor("ax1", lambda x: x[..., 0], _unit(0))


def _spatial_bubble(radius: float) -> SpatialFactor:
    r2 = radius * radius
    return SpatialFactor("abub", lambda x: 1.0 - np.sum(x * x, axis=-1) / r2,
                         lambda x: -2.0 * np.asarray(x) / r2)


SPATIAL: Dict[str, Callable[[float], SpatialFactor]] = {
    "a1": _spatial_const,
    "ax1": _spatial_x1,
    "abub": _spatial_bubble,
}


def energy_factors(e0: float, em: float) -> Dict[str, EnergyFactor]:
    one = lambda e: np.ones_like(e)  # noqa: E731
    zero = lambda e: np.zeros_like(e)  # noqa: E731
    return {
        "c1": EnergyFactor("c1", one, zero, zero, "none"),
        "cm1": EnergyFactor("cm1", lambda e: em - e, lambda e: -one(e), zero, "Em"),
        "cm2": EnergyFactor("cm2", lambda e: (em - e) ** 2, lambda e: -2.0 * (em - e),
                            lambda e: 2.0 * one(e), "Em"),
        "cb": EnergyFactor("cb", lambda e: (e - e0) * (em - e), lambda e: e0 + em - 2.0 * e,
                           lambda e: -2.0 * one(e), "both"),
        "c01": EnergyFactor("c01", lambda e: e - e0, one, zero, "E0"),
        "c02": EnergyFactor("c02", lambda e: (e - e0) ** 2, lambda e: 2.0 * (e - e0),
                            lambda e: 2.0 * one(e), "E0"),
    }


TRIAL_ENERGY = ("cm1", "cm2", "cb")
TEST_ENERGY = ("c01", "c02")


def field_from_id(field_id: str, radius: float, e0: float, em: float) -> TestField:
    """Parse ``"a*Y*c"`` into a separable field."""
    if field_id == "zero":
        return ZeroField()
    parts = field_id.split("*")
    if len(parts) != 3:
        raise DomainError(f"field id must look like 'a1*Y10*cm1', got {field_id!r}")
    a_id, y_id, c_id = parts
    energies = energy_factors(e0, em)
    if a_id not in SPATIAL or y_id not in ANGULAR or c_id not in energies:
        raise DomainError(f"unknown field id: {field_id!r}")
    return SeparableField(SPATIAL[a_id](radius), ANGULAR[y_id], energies[c_id])


@dataclass
class FieldCatalog:
    """Trial fields (vanishing at Em) and test fields (vanishing at E0)."""

    trial: Dict[str, TestField] = field(default_factory=dict)
    test: Dict[str, TestField] = field(default_factory=dict)

    def ids(self) -> List[str]:
        return list(self.trial) + list(self.test)


def builtin_fields(radius: float, e0: float, em: float) -> FieldCatalog:
    catalog = FieldCatalog()
    for a_id in SPATIAL:
        for y_id in ("Y00", "Y10", "Y22"):
            for c_id in TRIAL_ENERGY:
                fid = f"{a_id}*{y_id}*{c_id}"
                catalog.trial[fid] = field_from_id(fid, radius, e0, em)
            for c_id in TEST_ENERGY:
                fid = f"{a_id}*{y_id}*{c_id}"
                catalog.test[fid] = field_from_id(fid, radius, e0, em)
    return catalog
