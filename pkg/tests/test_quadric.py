"""
quadric モジュールのテスト
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from core.errors import OffSliceError, SliceError
from core.quadric import EllipsoidFactor, Quadric, SigmaPoint, gauss_legendre

MIXED = [
    ((1, 1, -1), 1.0),
    ((1, 1, -1), -1.0),
    ((1, 1, -1), 0.0),
    ((1, -1), 1.0),
    ((1, -2), -0.5),
    ((2, -1, -1), 1.0),
    ((2, 1, -1, -3), -2.0),
    ((1, 1, 1, -1), 1.0),
]


def gram_density(jac):
    return math.sqrt(np.linalg.det(jac.T @ jac))


def test_gauss_legendre_exact_for_polynomials():
    nodes, weights = gauss_legendre(0.0, 2.0, 4, panels=3)
    assert len(nodes) == 12
    assert np.sum(weights * nodes ** 5) == pytest.approx(64 / 6, rel=1e-13)


class TestEllipsoidFactor:
    @given(st.lists(st.floats(min_value=0.0, max_value=6.28), min_size=2, max_size=2))
    @settings(max_examples=30)
    def test_points_on_ellipsoid(self, angles):
        factor = EllipsoidFactor((1.0, 2.0, 3.0))
        x = factor.points(np.array(angles))
        assert np.sum(factor.weights * x[0] ** 2) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("weights, expected", [
        ((1.0, 1.0), 2 * math.pi),
        ((1.0, 1.0, 1.0), 4 * math.pi),
        ((1.0, 4.0), 4.844224110273838),
    ])
    def test_quadrature_area(self, weights, expected):
        _, _, w = EllipsoidFactor(weights).quadrature(64)
        assert np.sum(w) == pytest.approx(expected, rel=1e-8)

    def test_two_point_factor(self):
        factor = EllipsoidFactor((4.0,))
        angles, signs, weights = factor.quadrature(16)
        assert factor.n_angles == 0
        assert_allclose(factor.points(angles, signs)[:, 0], [0.5, -0.5])
        assert_allclose(weights, [1.0, 1.0])

    def test_angles_of(self):
        factor = EllipsoidFactor((1.0, 2.0, 3.0))
        angles = np.array([0.7, 4.0])
        back, sign = factor.angles_of(factor.points(angles)[0])
        assert sign == 1.0
        assert_allclose(back, angles, atol=1e-12)


class TestQuadric:
    def test_emptiness(self):
        assert Quadric((1, 1), -1.0).is_empty
        assert Quadric((1, 1), 0.0).is_empty
        assert not Quadric((1, 1), 1.0).is_empty
        assert Quadric((-1, -1), 1.0).is_empty
        assert not Quadric((1, -1), 0.0).is_empty

    def test_rejects_bad_lambdas(self):
        with pytest.raises(SliceError):
            Quadric((-1, 1), 1.0)
        with pytest.raises(SliceError):
            Quadric((1, 0, -1), 1.0)

    def test_compact_slice_has_no_chart(self):
        quadric = Quadric((1, 2), 1.0)
        assert not quadric.is_mixed
        with pytest.raises(SliceError):
            quadric.require_mixed()

    def test_signed_radius(self):
        assert Quadric((1, 1, -1), 1.0).signed_radius
        assert not Quadric((1, 1, -1), -1.0).signed_radius
        assert not Quadric((1, 1, -1), 0.0).signed_radius

    def test_off_slice(self):
        quadric = Quadric((1, 1, -1), 2.0)
        quadric.check_on_slice([1.0, 1.0, 0.0])
        with pytest.raises(OffSliceError):
            quadric.check_on_slice([1.0, 0.0, 0.0])

    @pytest.mark.parametrize("lambdas, level", MIXED)
    def test_samples_on_slice(self, lambdas, level, rng):
        quadric = Quadric(lambdas, level)
        x = np.array([quadric.chart_point(u, b) for u, b in quadric.sample_chart(rng, 50)])
        assert np.max(np.abs(quadric.residual(x))) < 1e-12 * max(1.0, abs(level))

    def test_sigma_point(self):
        quadric = Quadric((1, 1, -1), 0.0)
        x = quadric.sigma_point(SigmaPoint(2.0, np.array([1.0, 0.0]), np.array([1.0])))
        assert_allclose(x, [2.0, 0.0, 2.0])

    @pytest.mark.parametrize("lambdas, level", MIXED)
    def test_chart_jacobian(self, lambdas, level, rng):
        quadric = Quadric(lambdas, level)
        for u, branch in quadric.sample_chart(rng, 5):
            jac = quadric.chart_jacobian(u, branch)
            h = 1e-6
            fd = np.column_stack([
                (quadric.chart_point(u + h * e, branch) - quadric.chart_point(u - h * e, branch)) / (2 * h)
                for e in np.eye(len(u))
            ])
            assert_allclose(jac, fd, atol=1e-7)

    @pytest.mark.parametrize("lambdas, level", MIXED)
    def test_chart_density_is_gram(self, lambdas, level, rng):
        quadric = Quadric(lambdas, level)
        for u, branch in quadric.sample_chart(rng, 5):
            expected = gram_density(quadric.chart_jacobian(u, branch))
            assert quadric.chart_density(u, branch) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("lambdas, level", MIXED)
    def test_chart_coordinates_inverse(self, lambdas, level, rng):
        quadric = Quadric(lambdas, level)
        for u, branch in quadric.sample_chart(rng, 10):
            x = quadric.chart_point(u, branch)
            back, back_branch = quadric.chart_coordinates(x)
            assert_allclose(quadric.chart_point(back, back_branch), x, atol=1e-12)

    @pytest.mark.parametrize("lambdas", [(1, 1, -1), (2, 1, -1), (3, 1, -1, -1)])
    def test_volume_bound(self, lambdas, rng):
        quadric = Quadric(lambdas, 1.0)
        samples = quadric.sample_chart(rng, 100, r_max=5.0)
        r = np.array([u[0] for u, _ in samples])
        x = np.array([quadric.chart_point(u, b) for u, b in samples])
        assert np.all(quadric.radial_power(r) <= quadric.volume_bound(x) * (1 + 1e-12))

    def _node_pairs(self, quadric, count=8):
        ang_p, sgn_p, _ = quadric.plus.quadrature(count)
        ang_m, sgn_m, _ = quadric.minus.quadrature(count)
        x1 = quadric.plus.points(ang_p, sgn_p)
        x2 = quadric.minus.points(ang_m, sgn_m)
        ip, im = (g.ravel() for g in np.meshgrid(np.arange(len(x1)), np.arange(len(x2)), indexing="ij"))
        return x1, x2, x1[ip], x2[im]

    def test_support_radius_isotropic(self):
        quadric = Quadric((1, 1, -1), -0.5)
        x1, x2, p, m = self._node_pairs(quadric)
        radius = quadric.support_radius(1.0, x1, x2)
        x = quadric.assemble(np.full(len(p), radius), p, m)
        assert_allclose(np.linalg.norm(x, axis=1), 1.0, rtol=1e-12)

    def test_support_radius_anisotropic(self):
        quadric = Quadric((2, 1, -1), -0.5)
        x1, x2, p, m = self._node_pairs(quadric)
        radius = quadric.support_radius(1.0, x1, x2)
        norms = np.linalg.norm(quadric.assemble(np.full(len(p), radius), p, m), axis=1)
        assert np.min(norms) == pytest.approx(1.0, rel=1e-12)
        inside = np.linalg.norm(quadric.assemble(np.full(len(p), 0.99 * radius), p, m), axis=1)
        assert np.min(inside) < 1.0

    def test_support_radius_out_of_reach(self):
        quadric = Quadric((1, 1, -1), 1.0)
        x1, x2, _, _ = self._node_pairs(quadric)
        assert quadric.support_radius(0.5, x1, x2) == 0.0

    def test_chart_bounds_dimension(self):
        quadric = Quadric((2, 1, -1, -3), 1.0)
        lower, upper = quadric.chart_bounds()
        assert len(lower) == len(upper) == quadric.chart_dim == 3
