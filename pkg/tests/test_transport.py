"""Tests for the transport operator forms, adjoints and pairings."""

import numpy as np
import pytest

from cli.suites import FORM_FIELDS
from core.errors import DomainError
from core.phase import phase_points, trace_inner
from eval.collision import hadamard_collision
from eval.transport import (
    FD_MARGIN,
    TransportContext,
    adjoint_A1_apply,
    adjoint_A2_apply,
    adjoint_A2_lowered,
    circle_gradient_limit_profile,
    pair,
    transport_adjoint_apply,
    transport_apply,
    vanishing_limit_profile,
)
from tests.support import fast_context, field

X = np.array([0.1, 0.25, -0.2])
W = np.array([0.0, 0.6, 0.8])


def relative(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


class TestForms:
    """Strong, pseudo-differential and refined forms of T psi agree."""

    @pytest.mark.parametrize("field_id", FORM_FIELDS)
    def test_forms_agree(self, field_id: str) -> None:
        ctx = fast_context()
        psi = field(field_id)
        x, w, e = phase_points(ctx.space, 50, seed=3)
        for i in range(len(e)):
            strong = transport_apply(psi, x[i], w[i], float(e[i]), ctx, "strong")
            for form in ("pseudo", "refined"):
                other = transport_apply(psi, x[i], w[i], float(e[i]), ctx, form)
                assert relative(strong, other) < 1e-5, (form, i)

    def test_default_form_from_context(self) -> None:
        ctx = fast_context(form="strong")
        psi = field("abub*Y10*cm1")
        assert transport_apply(psi, X, W, 1.3, ctx) == transport_apply(psi, X, W, 1.3, ctx,
                                                                       "strong")

    def test_advection_only_family(self) -> None:
        """With no scattering, T psi = w . grad_x psi + Sigma psi."""
        ctx = fast_context("advection")
        psi = field("ax1*Y11*cm1")
        expected = float(psi.advect(X, W, 1.3) + 1.0 * psi.value(X, W, 1.3))
        for form in ("strong", "pseudo", "refined"):
            assert transport_apply(psi, X, W, 1.3, ctx, form) == pytest.approx(expected,
                                                                               abs=1e-12)

    def test_vectorised_rows(self) -> None:
        ctx = fast_context()
        psi = field("abub*Y10*cm1")
        xs = np.stack([X, -X])
        values = transport_apply(psi, xs, W, 1.3, ctx, "strong")
        assert values.shape == (2,)
        assert values[1] == pytest.approx(transport_apply(psi, -X, W, 1.3, ctx, "strong"))

    def test_unknown_form(self) -> None:
        with pytest.raises(DomainError):
            transport_apply(field("abub*Y10*cm1"), X, W, 1.3, fast_context(), "weak")

    def test_point_outside_ball(self) -> None:
        with pytest.raises(DomainError):
            transport_apply(field("abub*Y10*cm1"), 2.0 * W, W, 1.3, fast_context())

    def test_energy_at_top(self) -> None:
        with pytest.raises(DomainError):
            transport_apply(field("abub*Y10*cm1"), X, W, 2.0, fast_context())


class TestContext:
    """Settings validation and outer-derivative routing."""

    def test_route_switches_near_ends(self) -> None:
        ctx = fast_context()
        margin = FD_MARGIN * ctx.fd_step_E
        assert ctx.route_at(1.5) == "fd"
        assert ctx.route_at(1.0 + 0.5 * margin) == "analytic"
        assert ctx.route_at(2.0 - 0.5 * margin) == "analytic"

    def test_lemma_route_is_kept_everywhere(self) -> None:
        ctx = TransportContext(fast_context().collision, outer_route="lemma")
        assert ctx.route_at(1.5) == "lemma"
        assert ctx.route_at(2.0 - 1e-5) == "lemma"

    @pytest.mark.parametrize(
        "options",
        [{"fd_step_E": 0.0}, {"fd_step_E": 0.5}, {"form": "weak"}, {"outer_route": "spline"}],
    )
    def test_invalid_options(self, options: dict) -> None:
        collision = fast_context().collision
        with pytest.raises(DomainError):
            TransportContext(collision, **options)

    def test_explain_transport(self) -> None:
        ctx = fast_context()
        psi = field("a1*Y22*cb")
        result = ctx.explain_transport(psi, X, W, 1.4)
        assert result["log"][0] == "=== Transport Trace ==="
        assert result["total"] == pytest.approx(sum(result["terms"].values()))
        assert result["total"] == pytest.approx(transport_apply(psi, X, W, 1.4, ctx, "refined"))


class TestAdjoints:
    """Pairings of the singular pieces and of the full operator."""

    def test_A1_adjoint(self) -> None:
        ctx = fast_context()
        psi, v = field("abub*Y10*cm1"), field("abub*Y10*c01")
        lhs = pair(lambda xr, wr, e: np.asarray(hadamard_collision(psi, xr, wr, e, 1,
                                                                   ctx.collision)), v, ctx)
        rhs = pair(lambda xr, wr, e: np.asarray(adjoint_A1_apply(v, xr, wr, e, ctx)), psi, ctx)
        assert relative(lhs, rhs) < 1e-4

    def test_A2_adjoint(self) -> None:
        ctx = fast_context()
        psi, v = field("abub*Y10*cm1"), field("abub*Y10*c01")
        lhs = pair(lambda xr, wr, e: -np.asarray(hadamard_collision(psi, xr, wr, e, 2,
                                                                    ctx.collision)), v, ctx)
        rhs = pair(lambda xr, wr, e: np.asarray(adjoint_A2_apply(v, xr, wr, e, ctx)), psi, ctx)
        assert relative(lhs, rhs) < 1e-4

    def test_A2_lowered_matches_hyper(self) -> None:
        ctx = fast_context()
        v = field("abub*Y22*c02")
        hyper = adjoint_A2_apply(v, X, W, 1.6, ctx)
        lowered = adjoint_A2_lowered(v, X, W, 1.6, ctx)
        assert relative(hyper, lowered) < 1e-5

    def test_full_adjoint_with_boundary_flux(self) -> None:
        ctx = fast_context()
        psi, v = field("ax1*Y10*cm1"), field("a1*Y11*c01")
        lhs = pair(lambda xr, wr, e: np.asarray(transport_apply(psi, xr, wr, e, ctx)), v, ctx)
        rhs = pair(lambda xr, wr, e: np.asarray(transport_adjoint_apply(v, xr, wr, e, ctx)),
                   psi, ctx)
        flux = trace_inner(psi, v, "+", ctx.space) - trace_inner(psi, v, "-", ctx.space)
        assert relative(lhs, rhs + flux) < 1e-4

    def test_adjoint_energy_at_bottom(self) -> None:
        with pytest.raises(DomainError):
            transport_adjoint_apply(field("abub*Y10*c01"), X, W, 1.0, fast_context())


class TestLimitProfiles:
    """Behaviour of the singular densities next to the diagonal and E0."""

    def test_circle_gradient_limit_shrinks(self) -> None:
        ctx = fast_context()
        devs = circle_gradient_limit_profile(field("a1*Y22*c1"), X, W, 1.3, ctx)
        assert devs[1] < devs[0]

    def test_vanishing_limit_tends_to_zero(self) -> None:
        ctx = fast_context()
        values = vanishing_limit_profile(field("abub*Y10*c01"), X, W, ctx)
        assert values[-1] < values[1] < values[0]
        assert values[-1] < 0.1 * values[0]
