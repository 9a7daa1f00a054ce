"""Verification batteries behind ``moller-pf verify``.

Each check returns a measured residual that is compared against one of the
configured tolerances; a check passes when ``residual <= tolerance``.
Exceptions raised by the library count as failures with an infinite
residual.
"""

import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import qmc

from core import kinematics
from core.errors import ConfigError, MollerPfError
from core.finite_part import (
    BivariateDensity,
    PfIntegrand,
    fubini_pf1_residual,
    pf1_derivative,
    pf1_derivative_fd,
    pf1_log_form,
    pf1_lower,
    pf1_upper,
    pf2_lower,
    pf2_to_pf1_identity,
    pf2_upper,
)
from core.kinematics import check_schur
from core.phase import green_residual, l2_inner, phase_points, trace_inner
from core.sphere import (
    circle_rule,
    exp_map,
    laplace_beltrami,
    log_map,
    normalize,
    rotation_to,
    scatter_circle,
)
from eval.collision import (
    circle_average,
    collision_apply,
    collision_pseudo_form,
    hadamard_collision,
    outer_derivative,
    restricted_adjoint_apply,
    restricted_apply,
)
from eval.csda import convergence_sweep, csda_apply, csda_pairing, split_K
from eval.transport import (
    TransportContext,
    adjoint_A1_apply,
    adjoint_A2_apply,
    pair,
    transport_adjoint_apply,
    transport_apply,
)
from eval.variational import bilinear_B2, variational_residual
from performance.metrics import MetricsCollector, time_operation

from .config import RunConfig

SUITES = ("finite-part", "geometry", "collision", "transport", "variational", "csda")
SUITE_CHOICES = SUITES + ("all",)

CheckFn = Callable[[], Tuple[float, str]]

# Battery sizes.
FORM_FIELDS = ("abub*Y10*cm1", "a1*Y22*cb", "ax1*Y00*cm2", "a1*Y11*cm1", "abub*Y22*cm2",
               "ax1*Y10*cb")
FORM_POINTS = 50
FRAME_DIRECTIONS = 1000
RANDOM_INTERVALS = 200
LEMMA_DENSITIES = 20


def _noop(_: str) -> None:
    return None


def relative(a: float, b: float) -> float:
    """|a - b| scaled by max(1, |a|, |b|)."""
    return abs(a - b) / max(1.0, abs(a), abs(b))


def exact_relative(got: float, want: float) -> float:
    """|got - want| / |want|, or |got| when want is 0."""
    return abs(got - want) / abs(want) if want else abs(got)


@dataclass
class CheckResult:
    suite: str
    name: str
    residual: float
    tolerance: float
    elapsed_ms: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = (f"[{status}] {self.suite}/{self.name}: residual={self.residual:.3e} "
                f"tol={self.tolerance:.1e} ({self.elapsed_ms:.1f} ms)")
        return f"{text}  {self.detail}" if self.detail else text

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "name": self.name,
            "residual": self.residual if math.isfinite(self.residual) else None,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "elapsed_ms": self.elapsed_ms,
            "detail": self.detail,
        }


class SuiteRunner:
    """Runs the invariant batteries of the library against one configuration."""

    def __init__(self, config: RunConfig, logger: Optional[Callable[[str], None]] = None) -> None:
        self.config = config
        self.metrics = MetricsCollector()
        self._logger: Optional[Callable[[str], None]] = logger
        self._log_buffer: List[str] = []
        self._ctx: Optional[TransportContext] = None

    def _log(self, msg: str) -> None:
        if self._logger is not None:
            try:
                self._logger(msg)
            except Exception:
                pass
        self._log_buffer.append(msg)
        if len(self._log_buffer) > 100:
            self._log_buffer.pop(0)

    @property
    def ctx(self) -> TransportContext:
        if self._ctx is None:
            self._ctx = self.config.build_context(self._logger)
        return self._ctx

    def _points(self, count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return phase_points(self.config.space, count, self.config.seed)

    def _directions(self, count: int) -> np.ndarray:
        """Seeded directions closed off by both poles and a near-pole direction."""
        _, w, _ = phase_points(self.config.space, count - 3, self.config.seed)
        poles = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1e-9, 0.0, 1.0]])
        return normalize(np.concatenate([w, poles]))

    def _trial(self) -> Any:
        return self.config.field(self.config.trial_fields[0])

    def _test(self) -> Any:
        return self.config.field(self.config.test_fields[0])

    # ------------------------------------------------------------ driver

    def run(self, suite: str) -> List[CheckResult]:
        if suite == "all":
            names = list(SUITES)
        elif suite in SUITES:
            names = [suite]
        else:
            raise ConfigError(f"unknown suite {suite!r}; expected one of {list(SUITE_CHOICES)}")
        results: List[CheckResult] = []
        for name in names:
            self._log(f"suite {name}")
            for check, tol_key, fn in self.battery(name):
                results.append(self._run_check(name, check, tol_key, fn))
        return results

    def battery(self, suite: str) -> List[Tuple[str, str, CheckFn]]:
        table: Dict[str, Callable[[], List[Tuple[str, str, CheckFn]]]] = {
            "finite-part": self._finite_part_checks,
            "geometry": self._geometry_checks,
            "collision": self._collision_checks,
            "transport": self._transport_checks,
            "variational": self._variational_checks,
            "csda": self._csda_checks,
        }
        if suite not in table:
            raise ConfigError(f"unknown suite {suite!r}")
        return table[suite]()

    def _run_check(self, suite: str, name: str, tol_key: str, fn: CheckFn) -> CheckResult:
        key = f"{suite}/{name}"
        tolerance = 0.0 if tol_key == "threshold" else self.config.tolerance(tol_key)
        with time_operation(self.metrics, key):
            try:
                residual, detail = fn()
            except MollerPfError as exc:
                residual, detail = math.inf, f"error: {exc}"
        entry = self.metrics.get(key)
        result = CheckResult(suite, name, float(residual), tolerance,
                             entry.elapsed_ms if entry else 0.0, detail)
        self._log(result.line())
        return result

    # ------------------------------------------------------- finite part

    def _finite_part_checks(self) -> List[Tuple[str, str, CheckFn]]:
        q = self.config.quadrature
        square = PfIntegrand(lambda t: t * t, lambda t: 2.0 * t)
        x, b, a = 1.3, 2.0, 1.0

        def hada_upper() -> Tuple[float, str]:
            length = b - x
            pf1 = length**2 / 2 + 2 * x * length + x * x * math.log(length)
            pf2 = length + 2 * x * math.log(length) - x * x / length
            r1 = abs(pf1_upper(square, x, b, q) - pf1)
            r2 = abs(pf2_upper(square, x, b, q) - pf2)
            return max(r1, r2), f"pf1={r1:.1e} pf2={r2:.1e}"

        def hada_lower() -> Tuple[float, str]:
            xl = 1.7
            length = xl - a
            pf1 = -(length**2) / 2 + 2 * xl * length - xl * xl * math.log(length)
            pf2 = length - 2 * xl * math.log(length) - xl * xl / length
            r1 = abs(pf1_lower(square, xl, a, q) - pf1)
            r2 = abs(pf2_lower(square, xl, a, q) - pf2)
            return max(r1, r2), f"pf1={r1:.1e} pf2={r2:.1e}"

        def unit_intervals() -> Tuple[float, str]:
            u = qmc.Halton(d=2, scramble=True, seed=self.config.seed).random(RANDOM_INTERVALS)
            one = PfIntegrand.constant(1.0)
            worst = 0.0
            for xi, length in zip(10.0 * u[:, 0] - 5.0, 1e-3 + 20.0 * u[:, 1]):
                xi, bi = float(xi), float(xi + length)
                worst = max(worst,
                            exact_relative(pf1_upper(one, xi, bi, q), math.log(bi - xi)),
                            exact_relative(pf2_upper(one, xi, bi, q), -1.0 / (bi - xi)))
            return worst, f"{RANDOM_INTERVALS} intervals"

        def wave(a: float, c: float) -> BivariateDensity:
            return BivariateDensity(
                lambda p, t: np.cos(a * p + c * t) + a * c * p * t,
                lambda p, t: -a * np.sin(a * p + c * t) + a * c * t,
                lambda p, t: -c * np.sin(a * p + c * t) + a * c * p,
            )

        def derivative() -> Tuple[float, str]:
            u = qmc.Halton(d=4, scramble=True, seed=self.config.seed).random(LEMMA_DENSITIES)
            worst = 0.0
            for row in u:
                f2 = wave(2.0 * row[0] - 1.0, 2.0 * row[1] - 1.0)
                xi = float(row[2])
                bi = xi + 0.5 + 1.5 * float(row[3])
                got = pf1_derivative(f2, xi, bi, q)
                worst = max(worst, abs(got - pf1_derivative_fd(f2, xi, bi, q)))
            return worst, f"{LEMMA_DENSITIES} densities"

        def density() -> BivariateDensity:
            return BivariateDensity(
                lambda p, s: np.exp(s - p) * (1.0 + p * s),
                lambda p, s: np.exp(s - p) * (s - 1.0 - p * s),
                lambda p, s: np.exp(s - p) * (1.0 + p * s + p),
            )

        space = self.config.space

        def lowering() -> Tuple[float, str]:
            left, right = pf2_to_pf1_identity(density(), 1.4, space.em, q)
            return relative(left, right), f"left={left:.10g}"

        def log_form() -> Tuple[float, str]:
            left, right = pf1_log_form(density(), 1.4, space.em, q)
            return relative(left, right), f"left={left:.10g}"

        def fubini() -> Tuple[float, str]:
            return fubini_pf1_residual(density(), space.e0, space.em, q), ""

        return [
            ("closed_forms_upper", "finite_part", hada_upper),
            ("closed_forms_lower", "finite_part", hada_lower),
            ("closed_forms_random_intervals", "finite_part", unit_intervals),
            ("derivative_vs_differences", "derivative", derivative),
            ("order_lowering", "finite_part", lowering),
            ("log_form", "finite_part", log_form),
            ("fubini_pf1", "finite_part", fubini),
        ]

    # ---------------------------------------------------------- geometry

    def _geometry_checks(self) -> List[Tuple[str, str, CheckFn]]:
        space = self.config.space
        dirs = self._directions(FRAME_DIRECTIONS)

        def frames() -> Tuple[float, str]:
            rot = rotation_to(dirs)
            gram = np.einsum("...ji,...jk->...ik", rot, rot) - np.eye(3)
            det = np.abs(np.linalg.det(rot) - 1.0)
            e3 = np.abs(rot[..., 2] - dirs)
            worst = max(np.max(np.abs(gram)), np.max(det), np.max(e3))
            return float(worst), f"{len(dirs)} directions"

        def circles() -> Tuple[float, str]:
            s, _ = circle_rule(16)
            ep, e = 1.7, 1.2
            pts = scatter_circle(ep, e, dirs[:, None, :], s[None, :])
            cos = np.sum(pts * dirs[:, None, :], axis=-1)
            norm = np.abs(np.linalg.norm(pts, axis=-1) - 1.0)
            dev = np.abs(cos - float(kinematics.mu(ep, e)))
            return float(max(np.max(dev), np.max(norm))), ""

        def exp_log() -> Tuple[float, str]:
            _, w2, _ = phase_points(space, len(dirs), self.config.seed + 1)
            back = exp_map(dirs, log_map(dirs, w2))
            return float(np.max(np.abs(back - w2))), ""

        def eigen() -> Tuple[float, str]:
            worst = 0.0
            for angular, degree in (("Y00", 0), ("Y10", 1), ("Y11", 1), ("Y22", 2)):
                sph = self.config.field(f"a1*{angular}*c1").on_sphere(np.zeros(3), space.e0)
                lap = laplace_beltrami(sph, dirs)
                dev = np.abs(lap + degree * (degree + 1) * sph.value(dirs))
                worst = max(worst, float(np.max(dev)))
            return worst, "l <= 2"

        one = self.config.field("a1*Y00*c1")
        span = space.em - space.e0

        def volume() -> Tuple[float, str]:
            got = l2_inner(one, one, space)
            want = (4.0 / 3.0) * math.pi * space.radius**3 * 4.0 * math.pi * span
            return relative(got, want), f"value={got:.6f}"

        def boundary() -> Tuple[float, str]:
            got = trace_inner(one, one, "both", space)
            want = 8.0 * math.pi**2 * space.radius**2 * span
            return relative(got, want), f"value={got:.6f}"

        def green() -> Tuple[float, str]:
            return green_residual(self._trial(), self._test(), space), ""

        return [
            ("frame_orthonormal", "geometry", frames),
            ("circle_cosine", "geometry", circles),
            ("exp_log_inverse", "geometry", exp_log),
            ("laplace_beltrami_eigen", "geometry", eigen),
            ("l2_volume", "trace", volume),
            ("trace_measure", "trace", boundary),
            ("green_formula", "trace", green),
        ]

    # --------------------------------------------------------- collision

    def _collision_checks(self) -> List[Tuple[str, str, CheckFn]]:
        x, w, e = self._points(FORM_POINTS)

        def forms() -> Tuple[float, str]:
            cc = self.ctx.collision
            worst = 0.0
            for fid in FORM_FIELDS:
                psi = self.config.field(fid)
                for i in range(len(e)):
                    ei = float(e[i])
                    strong = float(collision_apply(psi, x[i], w[i], ei, cc))
                    pseudo = float(collision_pseudo_form(psi, x[i], w[i], ei, cc,
                                                         self.config.fd_step_E))
                    worst = max(worst, relative(strong, pseudo))
            return worst, f"{len(FORM_FIELDS)} fields x {len(e)} points"

        def outer_routes() -> Tuple[float, str]:
            cc = self.ctx.collision
            psi = self._trial()
            worst = 0.0
            for i in range(3):
                ei = float(e[i])
                analytic = float(outer_derivative(psi, x[i], w[i], ei, cc, "analytic"))
                lemma = float(outer_derivative(psi, x[i], w[i], ei, cc, "lemma"))
                worst = max(worst, relative(analytic, lemma))
            return worst, ""

        def average() -> Tuple[float, str]:
            one = self.config.field("a1*Y00*c1")
            got = float(circle_average(one, x[0], w[0], 1.6, 1.2, self.ctx.collision))
            return abs(got - 2.0 * math.pi), f"value={got:.12f}"

        def restricted() -> Tuple[float, str]:
            cc = self.ctx.collision
            psi, v = self._trial(), self._test()
            lhs = pair(lambda xr, wr, en: np.asarray(restricted_apply(psi, xr, wr, en, cc)), v,
                       self.ctx)
            rhs = pair(lambda xr, wr, en: np.asarray(restricted_adjoint_apply(v, xr, wr, en, cc)),
                       psi, self.ctx)
            return relative(lhs, rhs), f"<K_r psi, v>={lhs:.10g}"

        def schur() -> Tuple[float, str]:
            report = check_schur(self.ctx.xs, self.config.space)
            excess = max(0.0, report["row_sup"] - report["M1"], report["col_sup"] - report["M2"])
            return excess, f"row={report['row_sup']:.4g} col={report['col_sup']:.4g}"

        return [
            ("strong_vs_pseudo", "forms", forms),
            ("outer_derivative_routes", "derivative", outer_routes),
            ("circle_average_constant", "collision", average),
            ("restricted_adjoint", "pairing", restricted),
            ("schur_bounds", "collision", schur),
        ]

    # --------------------------------------------------------- transport

    def _transport_checks(self) -> List[Tuple[str, str, CheckFn]]:
        x, w, e = self._points(FORM_POINTS)

        def forms() -> Tuple[float, str]:
            worst = 0.0
            for fid in FORM_FIELDS:
                psi = self.config.field(fid)
                for i in range(len(e)):
                    ei = float(e[i])
                    strong = float(transport_apply(psi, x[i], w[i], ei, self.ctx, "strong"))
                    for form in ("pseudo", "refined"):
                        other = float(transport_apply(psi, x[i], w[i], ei, self.ctx, form))
                        worst = max(worst, relative(strong, other))
            return worst, f"{len(FORM_FIELDS)} fields x {len(e)} points"

        def adjoint(op: Callable[..., Any], adj: Callable[..., Any]) -> CheckFn:
            def check() -> Tuple[float, str]:
                psi, v = self._trial(), self._test()
                lhs = pair(lambda xr, wr, en: np.asarray(op(psi, xr, wr, en, self.ctx.collision)),
                           v, self.ctx)
                rhs = pair(lambda xr, wr, en: np.asarray(adj(v, xr, wr, en, self.ctx)), psi,
                           self.ctx)
                return relative(lhs, rhs), f"lhs={lhs:.10g}"

            return check

        def a1(psi: Any, xr: Any, wr: Any, en: float, cc: Any) -> Any:
            return hadamard_collision(psi, xr, wr, en, 1, cc)

        def a2(psi: Any, xr: Any, wr: Any, en: float, cc: Any) -> Any:
            return -np.asarray(hadamard_collision(psi, xr, wr, en, 2, cc))

        def full() -> Tuple[float, str]:
            psi, v = self._trial(), self._test()
            space = self.config.space
            lhs = pair(lambda xr, wr, en: np.asarray(transport_apply(psi, xr, wr, en, self.ctx)),
                       v, self.ctx)
            rhs = pair(lambda xr, wr, en: np.asarray(transport_adjoint_apply(v, xr, wr, en,
                                                                             self.ctx)),
                       psi, self.ctx)
            flux = trace_inner(psi, v, "+", space) - trace_inner(psi, v, "-", space)
            return relative(lhs, rhs + flux), f"lhs={lhs:.10g}"

        return [
            ("form_equivalence", "forms", forms),
            ("adjoint_A1", "pairing", adjoint(a1, adjoint_A1_apply)),
            ("adjoint_A2", "pairing", adjoint(a2, adjoint_A2_apply)),
            ("adjoint_T", "pairing", full),
        ]

    # ------------------------------------------------------- variational

    def _variational_checks(self) -> List[Tuple[str, str, CheckFn]]:
        def residual() -> Tuple[float, str]:
            tests = [self.config.field(fid) for fid in self.config.test_fields]
            report = variational_residual(self._trial(), self.ctx, tests)
            return report.residual / max(1.0, abs(report.F)), f"worst v={report.v}"

        def lowered() -> Tuple[float, str]:
            psi, v = self._trial(), self._test()
            hyper = bilinear_B2(psi, v, self.ctx, "hyper")
            low = bilinear_B2(psi, v, self.ctx, "lowered")
            return relative(hyper, low), f"B2={hyper:.10g}"

        return [
            ("variational_identity", "variational", residual),
            ("b2_lowered", "pairing", lowered),
        ]

    # -------------------------------------------------------------- csda

    def _csda_checks(self) -> List[Tuple[str, str, CheckFn]]:
        x, w, e = self._points(self.config.points)
        kappa = self.config.kappa.kappa

        def additivity() -> Tuple[float, str]:
            psi = self._trial()
            worst = 0.0
            for order in (1, 2):
                for i in range(len(e)):
                    ei = float(e[i])
                    sing, reg = split_K(psi, x[i], w[i], ei, order, kappa, self.ctx)
                    whole = float(hadamard_collision(psi, x[i], w[i], ei, order,
                                                     self.ctx.collision))
                    worst = max(worst, relative(sing + reg, whole))
            return worst, ""

        def no_singular() -> Tuple[float, str]:
            raw = dict(self.config.cross_sections)
            raw["family"] = "advection"
            cfg = replace(self.config, cross_sections=raw)
            ctx = cfg.build_context(self._logger)
            psi = self._trial()
            worst = 0.0
            for i in range(len(e)):
                ei = float(e[i])
                exact = float(transport_apply(psi, x[i], w[i], ei, ctx))
                approx = float(csda_apply(psi, x[i], w[i], ei, kappa, ctx))
                worst = max(worst, abs(exact - approx))
            return worst, ""

        def pairing() -> Tuple[float, str]:
            lhs, rhs = csda_pairing(self._trial(), self._test(), kappa, self.ctx)
            return relative(lhs, rhs), f"lhs={lhs:.10g}"

        def rate() -> Tuple[float, str]:
            report = convergence_sweep(self._trial(), self.ctx, self.config.kappa,
                                       self.config.points, self.config.seed)
            slope = report.fitted_slope
            if math.isnan(slope):
                return math.inf, "slope undefined"
            threshold = self.config.tolerance("slope")
            return max(0.0, threshold - slope), f"slope={slope:.4f} (>= {threshold})"

        return [
            ("split_additivity", "additivity", additivity),
            ("exact_without_singular_terms", "collision", no_singular),
            ("adjoint_pairing", "pairing", pairing),
            ("convergence_rate", "threshold", rate),
        ]


def create_suite_runner(config: RunConfig, logger: Optional[Callable[[str], None]] = None
                        ) -> SuiteRunner:
    return SuiteRunner(config, logger or _noop)


def summarize(results: List[CheckResult]) -> Dict[str, Any]:
    failed = [r for r in results if not r.passed]
    return {
        "checks": len(results),
        "failed": len(failed),
        "passed": len(results) - len(failed),
        "results": [r.to_dict() for r in results],
    }
