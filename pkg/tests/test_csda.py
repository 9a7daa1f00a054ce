"""Tests for the kappa split of the singular integrals and the CSDA operator."""

import math

import numpy as np
import pytest

from core.errors import ConfigError, DomainError
from eval.collision import hadamard_collision
from eval.csda import (
    DEFAULT_SWEEP,
    KappaConfig,
    adjoint_convergence_sweep,
    convergence_sweep,
    csda_adjoint_apply,
    csda_apply,
    csda_coefficients,
    csda_energy_rule,
    csda_pairing,
    explain_csda,
    split_K,
    sweep_all,
    window,
)
from eval.transport import transport_apply
from tests.support import fast_context, field

X = np.array([0.15, -0.2, 0.3])
W = np.array([0.6, 0.0, 0.8])
SHORT_SWEEP = KappaConfig(kappa_sweep=(1.5, 1.25, 1.125, 1.0625))


def relative(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


class TestKappaConfig:
    """Cut-off and sweep validation."""

    def test_default_sweep(self) -> None:
        config = KappaConfig()
        assert config.kappa == 1.5
        assert config.kappa_sweep == DEFAULT_SWEEP
        assert DEFAULT_SWEEP[0] == 1.5
        assert DEFAULT_SWEEP[-1] == pytest.approx(1.0 + 1.0 / 64.0)

    @pytest.mark.parametrize("kappa", [1.0, 0.5, -2.0])
    def test_kappa_must_exceed_one(self, kappa: float) -> None:
        with pytest.raises(ConfigError):
            KappaConfig(kappa=kappa)

    def test_sweep_must_decrease(self) -> None:
        with pytest.raises(ConfigError):
            KappaConfig(kappa_sweep=(1.25, 1.5, 1.1))

    def test_sweep_rejects_one(self) -> None:
        with pytest.raises(ConfigError):
            KappaConfig(kappa_sweep=(1.5, 1.25, 1.0))

    def test_to_dict(self) -> None:
        data = SHORT_SWEEP.to_dict()
        assert data == {"kappa": 1.5, "kappa_sweep": [1.5, 1.25, 1.125, 1.0625]}


class TestWindow:
    """Upper end of the singular window."""

    def test_unclipped(self) -> None:
        space = fast_context().space
        assert window(1.2, 1.25, space) == (pytest.approx(1.5), False)

    def test_clipped_at_top(self) -> None:
        space = fast_context().space
        assert window(1.5, 1.5, space) == (2.0, True)


class TestSplit:
    """K_{j,1} + K_{j,0} reproduces the whole finite part."""

    @pytest.mark.parametrize("order", [1, 2])
    @pytest.mark.parametrize("e", [1.1, 1.4, 1.7])
    def test_additivity(self, order: int, e: float) -> None:
        ctx = fast_context()
        psi = field("abub*Y10*cm1")
        singular, regular = split_K(psi, X, W, e, order, 1.25, ctx)
        whole = float(hadamard_collision(psi, X, W, e, order, ctx.collision))
        assert relative(singular + regular, whole) < 1e-6

    def test_tail_empty_when_window_clipped(self) -> None:
        ctx = fast_context()
        singular, regular = split_K(field("a1*Y22*cb"), X, W, 1.5, 2, 1.5, ctx)
        assert regular == 0.0
        whole = float(hadamard_collision(field("a1*Y22*cb"), X, W, 1.5, 2, ctx.collision))
        assert singular == pytest.approx(whole, rel=1e-12, abs=1e-12)

    def test_zero_field(self) -> None:
        assert split_K(field("zero"), X, W, 1.3, 2, 1.25, fast_context()) == (0.0, 0.0)

    def test_accepts_collision_context(self) -> None:
        ctx = fast_context()
        psi = field("abub*Y10*cm1")
        assert split_K(psi, X, W, 1.3, 1, 1.25, ctx.collision) == split_K(psi, X, W, 1.3, 1,
                                                                          1.25, ctx)

    def test_rows(self) -> None:
        xs = np.stack([X, 0.5 * X, np.zeros(3)])
        singular, regular = split_K(field("abub*Y10*cm1"), xs, W, 1.3, 2, 1.25, fast_context())
        assert singular.shape == (3,) and regular.shape == (3,)

    def test_invalid_kappa(self) -> None:
        with pytest.raises(DomainError):
            split_K(field("abub*Y10*cm1"), X, W, 1.3, 2, 1.0, fast_context())

    def test_invalid_energy(self) -> None:
        with pytest.raises(DomainError):
            split_K(field("abub*Y10*cm1"), X, W, 2.0, 2, 1.25, fast_context())


class TestCoefficients:
    """Stopping power, Fokker-Planck coefficient and shifted absorption."""

    @pytest.mark.parametrize("e,kappa", [(1.2, 1.25), (1.6, 1.5)])
    def test_stopping_slope_matches_difference(self, e: float, kappa: float) -> None:
        ctx = fast_context()
        h = 1e-6
        plus = csda_coefficients(X, e + h, kappa, ctx)["S_kappa"]
        minus = csda_coefficients(X, e - h, kappa, ctx)["S_kappa"]
        slope = csda_coefficients(X, e, kappa, ctx)["dS_dE"]
        assert float(slope) == pytest.approx(float(plus - minus) / (2 * h), rel=1e-5)

    def test_log_length(self) -> None:
        ctx = fast_context()
        c = csda_coefficients(X, 1.2, 1.25, ctx)
        assert c["log_length"] == pytest.approx(math.log(0.3))
        assert not c["clipped"]
        assert abs(c["theta"]) < 1e-14
        assert "Sigma_kappa" not in c

    def test_shifted_absorption(self) -> None:
        ctx = fast_context()
        c = csda_coefficients(X, 1.2, 1.25, ctx, W)
        assert float(c["Sigma_kappa"]) == pytest.approx(1.0 + float(c["sigma_shift"]))


class TestCsdaOperator:
    """T_k against T on fields where the truncation error is known."""

    def test_constant_field_exact_for_constant_cross_sections(self) -> None:
        """For psi = 1 and energy-independent kernels the Taylor window is exact."""
        ctx = fast_context("constant")
        one = field("a1*Y00*c1")
        for e, kappa in [(1.2, 1.25), (1.6, 1.5), (1.05, 1.0625)]:
            exact = transport_apply(one, X, W, e, ctx, "strong")
            approx = csda_apply(one, X, W, e, kappa, ctx)
            assert approx == pytest.approx(exact, rel=1e-7, abs=1e-7)

    def test_constant_field_error_is_window_remainder(self) -> None:
        """T 1 - T_k 1 = (K_{1,1} - its Taylor value) - (K_{2,1} - its Taylor value)."""
        ctx = fast_context()
        one = field("a1*Y00*c1")
        e, kappa = 1.3, 1.25
        c = csda_coefficients(X, e, kappa, ctx)
        xs = ctx.xs
        ell, length = c["log_length"], c["window"] - e
        sing1, _ = split_K(one, X, W, e, 1, kappa, ctx)
        sing2, _ = split_K(one, X, W, e, 2, kappa, ctx)
        taylor1 = 2 * math.pi * float(xs.sigma_hat[1](X, e, e)) * ell
        taylor2 = 2 * math.pi * (-float(xs.sigma_hat[2](X, e, e)) / length
                                 + float(xs.sigma2_dEp(X, e, e)) * ell)
        expected = (sing1 - taylor1) - (sing2 - taylor2)
        diff = transport_apply(one, X, W, e, ctx, "strong") - csda_apply(one, X, W, e, kappa, ctx)
        assert diff == pytest.approx(expected, abs=1e-6)

    def test_terms_drop_out_for_constant_field(self) -> None:
        ctx = fast_context()
        terms = explain_csda(field("a1*Y00*c1"), X, W, 1.3, 1.25, ctx)["terms"]
        assert terms["stopping"] == 0.0
        assert terms["fokker_planck"] == 0.0
        assert terms["advection"] == 0.0

    def test_advection_family_is_exact(self) -> None:
        ctx = fast_context("advection")
        psi, v = field("abub*Y22*cm2"), field("abub*Y22*c02")
        for e in (1.1, 1.5, 1.9):
            exact = transport_apply(psi, X, W, e, ctx)
            assert csda_apply(psi, X, W, e, 1.5, ctx) == pytest.approx(exact, abs=1e-12)
            adjoint = float(-v.advect(X, W, e) + v.value(X, W, e))
            assert csda_adjoint_apply(v, X, W, e, 1.5, ctx) == pytest.approx(adjoint, abs=1e-12)

    def test_explain_trace(self) -> None:
        ctx = fast_context()
        psi = field("abub*Y10*cm1")
        result = explain_csda(psi, X, W, 1.4, 1.25, ctx)
        assert result["log"][0] == "=== CSDA Trace ==="
        assert result["total"] == pytest.approx(sum(result["terms"].values()))
        assert result["total"] == pytest.approx(csda_apply(psi, X, W, 1.4, 1.25, ctx))
        assert not result["clipped"]

    def test_point_outside_ball(self) -> None:
        with pytest.raises(DomainError):
            csda_apply(field("abub*Y10*cm1"), 3.0 * X, W, 1.4, 1.25, fast_context())


class TestPairing:
    """<T_k psi, v> = <psi, T_k* v> plus the boundary flux."""

    def test_energy_rule_breaks_at_kinks(self) -> None:
        ctx = fast_context()
        e, w = csda_energy_rule(ctx.space, 1.5, ctx.pairing_quadrature)
        assert float(np.sum(w)) == pytest.approx(1.0, rel=1e-12)
        assert np.all((e > 1.0) & (e < 2.0))

    def test_adjoint_pairing(self) -> None:
        ctx = fast_context()
        lhs, rhs = csda_pairing(field("abub*Y10*cm1"), field("abub*Y10*c01"), 1.5, ctx)
        assert relative(lhs, rhs) < 1e-4

    def test_pairing_needs_vanishing_fields(self) -> None:
        with pytest.raises(DomainError):
            csda_pairing(field("a1*Y00*c1"), field("abub*Y10*c01"), 1.5, fast_context())


class TestConvergence:
    """kappa sweeps of T_k against T."""

    def test_forward_rate(self) -> None:
        report = convergence_sweep(field("abub*Y10*cm1"), fast_context(), SHORT_SWEEP,
                                   points=4, seed=0)
        assert report.kappas == [1.5, 1.25, 1.125, 1.0625]
        assert report.fitted_slope >= 0.45
        assert report.sup_errors[-1] < report.sup_errors[0]
        assert report.kind == "forward"
        assert report.field_id == "abub*Y10*cm1"

    def test_adjoint_rate(self) -> None:
        report = adjoint_convergence_sweep(field("abub*Y10*c01"), fast_context(), SHORT_SWEEP,
                                           points=4, seed=0)
        assert report.kind == "adjoint"
        assert report.fitted_slope >= 0.45

    def test_zero_field_has_no_slope(self) -> None:
        report = convergence_sweep(field("zero"), fast_context(), SHORT_SWEEP, points=2)
        assert all(row.sup_error == 0.0 for row in report.rows)
        assert math.isnan(report.fitted_slope)

    def test_sweep_needs_three_values(self) -> None:
        config = KappaConfig(kappa_sweep=(1.5, 1.25))
        with pytest.raises(DomainError):
            convergence_sweep(field("abub*Y10*cm1"), fast_context(), config, points=2)

    def test_sweep_all(self) -> None:
        reports = sweep_all([field("zero"), field("zero")], fast_context(), SHORT_SWEEP, 1)
        assert len(reports) == 2
