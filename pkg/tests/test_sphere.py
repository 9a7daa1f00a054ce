"""Tests for sphere geometry: frames, scattering circles, exp/log maps."""

import math

import numpy as np
import pytest

from core import kinematics
from core.errors import GeometryError, KinematicsError
from core.sphere import (
    AmbientFunction,
    circle_gradient_integral,
    circle_rule,
    circle_sphere_swap_residual,
    exp_map,
    frame,
    hemisphere_rule,
    laplace_beltrami,
    log_map,
    rotation_to,
    scatter_circle,
    scatter_circle_dE,
    scatter_circle_dEp,
    sphere_rule,
    sphere_taylor1,
    surface_gradient,
)


def many_directions(count: int = 1000) -> np.ndarray:
    """Random unit vectors plus both poles, near-pole and equatorial directions."""
    rng = np.random.default_rng(7)
    raw = rng.normal(size=(count - len(DIRECTIONS), 3))
    return np.concatenate([DIRECTIONS, raw / np.linalg.norm(raw, axis=-1, keepdims=True)])


def linear_function(axis: int) -> AmbientFunction:
    """f(w) = w_axis, an l = 1 harmonic."""
    unit = np.eye(3)[axis]
    return AmbientFunction(
        value=lambda w: w[..., axis],
        gradient=lambda w: np.broadcast_to(unit, w.shape),
        hessian=lambda w: np.zeros(w.shape[:-1] + (3, 3)),
    )

DIRECTIONS = np.array(
    [
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0],
        [0.6, 0.0, 0.8],
        [1.0 / math.sqrt(3.0)] * 3,
        [1e-10, 0.0, math.sqrt(1.0 - 1e-20)],
    ]
)


def xy_harmonic() -> AmbientFunction:
    """f(w) = w1 w2, an l = 2 harmonic."""
    hess = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return AmbientFunction(
        value=lambda w: w[..., 0] * w[..., 1],
        gradient=lambda w: np.stack([w[..., 1], w[..., 0], 0.0 * w[..., 2]], axis=-1),
        hessian=lambda w: np.broadcast_to(hess, w.shape[:-1] + (3, 3)),
    )


class TestFrame:
    """Tangent frames stay orthonormal, including at the poles."""

    def test_orthonormal_everywhere(self) -> None:
        big1, big2 = frame(DIRECTIONS)
        assert np.allclose(np.sum(big1 * big1, axis=-1), 1.0, atol=1e-12)
        assert np.allclose(np.sum(big2 * big2, axis=-1), 1.0, atol=1e-12)
        assert np.allclose(np.sum(big1 * big2, axis=-1), 0.0, atol=1e-12)
        assert np.allclose(np.sum(big1 * DIRECTIONS, axis=-1), 0.0, atol=1e-12)
        assert np.allclose(np.sum(big2 * DIRECTIONS, axis=-1), 0.0, atol=1e-12)

    def test_rotation_maps_e3(self) -> None:
        rot = rotation_to(DIRECTIONS)
        mapped = rot @ np.array([0.0, 0.0, 1.0])
        assert np.allclose(mapped, DIRECTIONS, atol=1e-12)
        eye = np.einsum("nji,njk->nik", rot, rot)
        assert np.allclose(eye, np.eye(3), atol=1e-12)

    def test_thousand_directions(self) -> None:
        dirs = many_directions()
        assert len(dirs) == 1000
        rot = rotation_to(dirs)
        gram = np.einsum("nji,njk->nik", rot, rot)
        assert np.max(np.abs(gram - np.eye(3))) <= 1e-12
        assert np.max(np.abs(rot @ np.array([0.0, 0.0, 1.0]) - dirs)) <= 1e-12
        assert np.allclose(np.linalg.det(rot), 1.0, atol=1e-12)

    def test_equator_raises_no_floating_point_error(self) -> None:
        """The pole fallback is only formed for pole rows."""
        dirs = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]])
        with np.errstate(all="raise"):
            big1, big2 = frame(dirs)
            single1, single2 = frame(dirs[0])
        assert np.all(np.isfinite(big1)) and np.all(np.isfinite(big2))
        assert np.allclose(single1, big1[0]) and np.allclose(single2, big2[0])
        assert np.allclose(big2[1], [1.0, 0.0, 0.0])


class TestScatterCircle:
    """Points on the scattering circle sit at cosine mu from w."""

    @pytest.mark.parametrize("ep,e", [(1.5, 1.0), (3.0, 1.2), (2.0, 2.0)])
    def test_cosine_equals_mu(self, ep: float, e: float) -> None:
        s, _ = circle_rule(12)
        for w in DIRECTIONS:
            pts = scatter_circle(ep, e, w[None, :], s)
            assert np.allclose(np.linalg.norm(pts, axis=-1), 1.0, atol=1e-12)
            assert np.allclose(pts @ w, kinematics.mu(ep, e), atol=1e-12)

    @pytest.mark.parametrize("ep,e", [(1.7, 1.2), (3.0, 1.05), (1.25, 1.2)])
    def test_energy_partials_match_differences(self, ep: float, e: float) -> None:
        s, _ = circle_rule(12)
        h = 1e-6
        for w in DIRECTIONS:
            wr = w[None, :]
            fd_ep = (scatter_circle(ep + h, e, wr, s) - scatter_circle(ep - h, e, wr, s)) / (2 * h)
            fd_e = (scatter_circle(ep, e + h, wr, s) - scatter_circle(ep, e - h, wr, s)) / (2 * h)
            assert np.allclose(scatter_circle_dEp(ep, e, wr, s), fd_ep, atol=1e-6)
            assert np.allclose(scatter_circle_dE(ep, e, wr, s), fd_e, atol=1e-6)

    def test_energy_partials_singular_on_diagonal(self) -> None:
        s, _ = circle_rule(4)
        with pytest.raises(KinematicsError):
            scatter_circle_dEp(1.3, 1.3, DIRECTIONS[:1], s)

    def test_swap_residual_small(self) -> None:
        psi = lambda w: w[..., 0] * w[..., 2] + w[..., 1]  # noqa: E731
        v = lambda w: w[..., 2] ** 2  # noqa: E731
        assert circle_sphere_swap_residual(psi, v, 2.5, 1.4) < 1e-10

    def test_gradient_integral_limit_at_diagonal(self) -> None:
        f = xy_harmonic()
        w = DIRECTIONS[4]
        lap = lambda p: laplace_beltrami(f, p)  # noqa: E731
        grad = lambda p: surface_gradient(f, p)  # noqa: E731
        limit = circle_gradient_integral(grad, lap, 1.3, 1.3, w)
        expected = -math.pi * float(kinematics.mu_dEp(1.3, 1.3)) * float(lap(w))
        assert limit == pytest.approx(expected, rel=1e-12)
        near = circle_gradient_integral(grad, lap, 1.3 + 1e-7, 1.3, w)
        assert near == pytest.approx(limit, rel=1e-4)

    def test_gradient_integral_rejects_bad_variable(self) -> None:
        f = xy_harmonic()
        with pytest.raises(GeometryError):
            circle_gradient_integral(f.gradient, f.value, 2.0, 1.0, DIRECTIONS[0], wrt="x")


class TestExpLog:
    """exp and log maps are mutually inverse away from the cut locus."""

    def test_round_trip(self) -> None:
        w = DIRECTIONS[3]
        others = np.array([[0.0, 1.0, 0.0], [0.0, 0.6, 0.8], [-0.6, 0.0, 0.8], w])
        for wp in others:
            zeta = log_map(w, wp)
            assert abs(float(np.dot(zeta, w))) < 1e-12
            assert np.allclose(exp_map(w, zeta), wp, atol=1e-12)

    def test_antipodal_rejected(self) -> None:
        with pytest.raises(GeometryError):
            log_map([0.0, 0.0, 1.0], [0.0, 0.0, -1.0])

    def test_taylor_residual_is_second_order(self) -> None:
        f = xy_harmonic()
        w = DIRECTIONS[4]
        tangent = np.cross(w, [0.0, 0.0, 1.0])
        tangent /= np.linalg.norm(tangent)
        residuals = []
        for h in (1e-2, 5e-3):
            _, res = sphere_taylor1(f, w, exp_map(w, h * tangent))
            residuals.append(abs(res))
        assert residuals[0] / residuals[1] == pytest.approx(4.0, rel=0.05)


class TestLaplaceBeltrami:
    """Delta_S of an l = 2 harmonic is -6 times the harmonic."""

    def test_degree_two_eigenvalue(self) -> None:
        f = xy_harmonic()
        lap = laplace_beltrami(f, DIRECTIONS)
        assert np.allclose(lap, -6.0 * f.value(DIRECTIONS), atol=1e-12)

    def test_constant_is_harmonic(self) -> None:
        const = AmbientFunction(
            value=lambda w: np.ones(w.shape[:-1]),
            gradient=lambda w: np.zeros(w.shape),
            hessian=lambda w: np.zeros(w.shape[:-1] + (3, 3)),
        )
        assert np.max(np.abs(laplace_beltrami(const, many_directions()))) <= 1e-12

    @pytest.mark.parametrize("axis", [0, 1, 2])
    def test_degree_one_eigenvalue(self, axis: int) -> None:
        dirs = many_directions()
        f = linear_function(axis)
        lap = laplace_beltrami(f, dirs)
        assert np.max(np.abs(lap + 2.0 * f.value(dirs))) <= 1e-12

    def test_degree_two_on_many_directions(self) -> None:
        dirs = many_directions()
        f = xy_harmonic()
        assert np.max(np.abs(laplace_beltrami(f, dirs) + 6.0 * f.value(dirs))) <= 1e-10

    def test_needs_hessian(self) -> None:
        f = AmbientFunction(value=lambda w: w[..., 0], gradient=lambda w: w)
        with pytest.raises(GeometryError):
            laplace_beltrami(f, DIRECTIONS[0])


class TestRules:
    """Sphere and hemisphere rules integrate the surface measure."""

    def test_sphere_weights(self) -> None:
        _, w = sphere_rule(6, 12)
        assert float(np.sum(w)) == pytest.approx(4.0 * math.pi, rel=1e-13)

    @pytest.mark.parametrize("side", ["+", "-"])
    def test_hemisphere_projected_area(self, side: str) -> None:
        normal = np.array([0.0, 0.6, 0.8])
        pts, w = hemisphere_rule(normal, side, 6, 12)
        cos = pts @ normal
        assert np.all(cos > 0) if side == "+" else np.all(cos < 0)
        assert float(np.sum(w * np.abs(cos))) == pytest.approx(math.pi, rel=1e-12)

    def test_hemisphere_bad_side(self) -> None:
        with pytest.raises(GeometryError):
            hemisphere_rule([0.0, 0.0, 1.0], "0")
