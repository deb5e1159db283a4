"""
integer_family モジュールのテスト
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from core import integer_family
from core.errors import OffSliceError, SliceError
from core.geometry import mean_curvature, normal_projection, tangent_frame
from core.integer_family import (IntegerFamily, IntegerSlice, LambdaSpec, classify,
                                 density_closed_form, fold, immerse, psi,
                                 scale_between_slices, sigma_parametrize,
                                 volume_form_closed)
from core.quadric import SigmaPoint


class TestLambdaSpec:
    def test_parse(self):
        spec = LambdaSpec.parse("1,1,-1")
        assert spec.lambdas == (1.0, 1.0, -1.0)
        assert (spec.n, spec.k, spec.total) == (3, 2, 1.0)
        assert spec.label() == "1,1,-1"

    def test_reorder(self):
        assert LambdaSpec.parse("-1,2", reorder=True).lambdas == (2.0, -1.0)

    @pytest.mark.parametrize("text", ["0,1", "1", "a,b", "-1,1", "1.5,-1"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            LambdaSpec.parse(text)

    def test_real_lambdas_when_not_strict(self):
        spec = LambdaSpec.parse("1.5,-1", strict_integer=False)
        assert not spec.is_integral
        assert spec.sum_positive

    def test_special(self):
        assert LambdaSpec((1, -1)).is_special
        assert not LambdaSpec((1, 1, -1)).is_special


class TestSlices:
    def test_level(self, spec_112):
        assert IntegerSlice.at_time(spec_112, -0.5).level == 1.0
        assert IntegerSlice.at_time(spec_112, 1.0).level == -2.0

    def test_kind(self, spec_112):
        assert IntegerSlice.at_time(spec_112, -1).kind == "shrinker"
        assert IntegerSlice.at_time(spec_112, 1).kind == "expander"
        assert IntegerSlice.at_time(spec_112, 0).kind == "cone"
        assert IntegerSlice.at_level(LambdaSpec((1, -1)), 2.0).kind == "special"

    def test_at_level_requires_special(self, spec_112):
        with pytest.raises(SliceError):
            IntegerSlice.at_level(spec_112, 1.0)

    def test_inconsistent_level(self, spec_112):
        with pytest.raises(SliceError):
            IntegerSlice(spec_112, -0.5, 3.0)


class TestImmersion:
    def test_real_slice(self, shrinker_112):
        assert_allclose(immerse(shrinker_112, [1, 0, 0], 0.0), [1, 0, 0])
        assert_allclose(immerse(shrinker_112, [1, 0, 0], math.pi / 2), [1j, 0, 0], atol=1e-15)

    def test_off_slice(self, shrinker_112):
        with pytest.raises(OffSliceError):
            immerse(shrinker_112, [2, 0, 0], 0.0)

    @given(st.floats(min_value=0.0, max_value=2 * math.pi), st.floats(min_value=0.0, max_value=2 * math.pi))
    @settings(max_examples=30)
    def test_double_cover(self, a, s):
        spec = LambdaSpec((2, 1, -1))
        slice_ = IntegerSlice.at_time(spec, -0.5)
        x = np.array([math.cos(a), math.sin(a), 0.0]) / np.array([math.sqrt(2), 1.0, 1.0]) * math.sqrt(slice_.level)
        assert_allclose(immerse(slice_, x, s + math.pi), immerse(slice_, psi(spec, x), s), atol=1e-14)

    def test_fold(self, shrinker_112):
        x = np.array([0.6, 0.8, 0.0])
        y, s = fold(shrinker_112.spec, x, 4.0)
        assert 0 <= s < math.pi
        assert_allclose(y, [-0.6, -0.8, 0.0])
        assert_allclose(immerse(shrinker_112, y, s), immerse(shrinker_112, x, 4.0), atol=1e-14)

    def test_chart_coordinates(self, shrinker_112, rng):
        for u_sigma, branch in shrinker_112.quadric.sample_chart(rng, 10):
            x = shrinker_112.quadric.chart_point(u_sigma, branch)
            u, b = integer_family.chart_coordinates(shrinker_112, x, 1.2)
            assert_allclose(integer_family.chart(shrinker_112, b).evaluate(u),
                            immerse(shrinker_112, x, 1.2), atol=1e-12)


class TestDensity:
    def test_unit_point(self, shrinker_112):
        d = density_closed_form(shrinker_112, [1, 0, 0])
        assert (d.position_norm_sq, d.h_norm_sq, d.radon_density) == pytest.approx((1.0, 1.0, 1.0))

    def test_h_norm(self, spec_112):
        slice_ = IntegerSlice.at_time(spec_112, -1.0)
        d = density_closed_form(slice_, [0, 2, math.sqrt(2)])
        assert d.h_norm_sq == pytest.approx(1 / 6)

    def test_vertex(self, spec_112):
        with pytest.raises(SliceError):
            density_closed_form(IntegerSlice.at_time(spec_112, 0.0), [0, 0, 0])

    def test_matches_fd_curvature(self, shrinker_112, rng):
        for u_sigma, branch in shrinker_112.quadric.sample_chart(rng, 8):
            u = np.concatenate([u_sigma, [rng.uniform(0.2, 2.9)]])
            h = mean_curvature(integer_family.chart(shrinker_112, branch), u)
            x = shrinker_112.quadric.chart_point(u_sigma, branch)
            expected = density_closed_form(shrinker_112, x).h_norm_sq
            assert np.sum(np.abs(h) ** 2) == pytest.approx(expected, rel=1e-4)

    @pytest.mark.parametrize("lambdas, t", [
        ((1, 1, -1), -0.5), ((1, 1, -1), 1.0), ((2, -1, -1), -0.5), ((1, -2), 0.7), ((3, 1, -1, -1), -0.25),
    ])
    def test_gram_oracle(self, lambdas, t, rng):
        slice_ = IntegerSlice.at_time(LambdaSpec(lambdas), t)
        for u_sigma, branch in slice_.quadric.sample_chart(rng, 6):
            u = np.concatenate([u_sigma, [rng.uniform(0.2, 2.9)]])
            gram = math.sqrt(tangent_frame(integer_family.chart(slice_, branch), u).metric().determinant)
            assert integer_family.chart_density(slice_, u, branch) == pytest.approx(gram, rel=1e-5)


class TestSigma:
    def test_waist(self, shrinker_112):
        x = sigma_parametrize(shrinker_112, SigmaPoint(0.0, np.array([1.0, 0.0]), np.array([1.0])))
        assert_allclose(x, [1, 0, 0])

    def test_cone_rays(self, spec_112):
        cone = IntegerSlice.at_time(spec_112, 0.0)
        x = sigma_parametrize(cone, SigmaPoint(1.5, np.array([0.0, 1.0]), np.array([-1.0])))
        assert_allclose(x, [0.0, 1.5, -1.5])

    def test_volume_form_degenerate_factor(self):
        slice_ = IntegerSlice.at_time(LambdaSpec((2, -1, -1)), -0.5)
        value = volume_form_closed(slice_, SigmaPoint(0.7, np.array([1 / math.sqrt(2)]), np.array([1.0, 0.0])))
        assert math.isfinite(value) and value > 0


class TestScaling:
    @pytest.mark.parametrize("ta, tb", [(-0.5, -2.0), (1.0, 4.0)])
    def test_factor_two(self, spec_112, ta, tb, rng):
        a = IntegerSlice.at_time(spec_112, ta)
        b = IntegerSlice.at_time(spec_112, tb)
        u, branch = a.quadric.sample_chart(rng, 1)[0]
        x = a.quadric.chart_point(u, branch)
        y = scale_between_slices(a, b, x)
        assert_allclose(y, 2 * x)
        b.quadric.check_on_slice(y)

    def test_opposite_sign(self, spec_112):
        a = IntegerSlice.at_time(spec_112, -1.0)
        b = IntegerSlice.at_time(spec_112, 1.0)
        with pytest.raises(SliceError):
            scale_between_slices(a, b, [math.sqrt(2), 0, 0])

    def test_self_similar_expander(self, spec_112, rng):
        slice_ = IntegerSlice.at_time(spec_112, 1.0)
        for u_sigma, branch in slice_.quadric.sample_chart(rng, 6):
            u = np.concatenate([u_sigma, [rng.uniform(0.2, 2.9)]])
            imm = integer_family.chart(slice_, branch)
            perp = normal_projection(imm, u)
            h = mean_curvature(imm, u)
            # F⊥ = 2tH
            assert np.linalg.norm(perp - 2.0 * h) < 1e-6 * (1 + np.linalg.norm(perp))


CLASSIFICATION = [
    ((1, 1, -1), "+", "S^1 x R^1 x S^1, non-orientable, connected, embedded"),
    ((1, 1, -1), "-", "R^2 x S^0 x S^1, non-orientable, connected, embedded"),
    ((1, 1, -1), "0", "cone over S^1 x S^0 x S^1, non-orientable, connected, embedded"),
    ((1, -1), "+", "S^0 x R^1 x S^1, orientable, connected, embedded"),
    ((2, -1, -1), "+", "S^0 x R^2 x S^1, orientable, two components, immersed"),
    ((1, 1, -2), "-", "R^2 x S^0 x S^1, orientable, two components, immersed"),
    ((1, 1, 1), "+", "S^2 x S^1, non-orientable, connected, embedded"),
    ((2, 2, -1), "+", "S^1 x R^1 x S^1, non-orientable, connected, immersed"),
    ((3, 1, -2), "0", "cone over S^1 x S^0 x S^1, orientable, connected, embedded"),
]


class TestClassify:
    @pytest.mark.parametrize("lambdas, sign, expected", CLASSIFICATION)
    def test_table(self, lambdas, sign, expected):
        assert classify(LambdaSpec(lambdas), sign).summary() == expected

    def test_empty(self):
        assert classify(LambdaSpec((1, 1, 1)), "-").topology == "empty"

    def test_special_flag(self):
        assert classify(LambdaSpec((1, -1)), "+").special
        assert not classify(LambdaSpec((1, 1, -1)), "+").special

    def test_rejects_real_lambdas(self):
        with pytest.raises(SliceError):
            classify(LambdaSpec((1.5, -1), strict_integer=False), "+")

    def test_rejects_sign(self):
        with pytest.raises(ValueError):
            classify(LambdaSpec((1, -1)), "positive")


def test_family_describe(spec_112):
    family = IntegerFamily(spec_112)
    assert family.n == 3
    assert family.describe() == {"family": "integer", "lambdas": [1.0, 1.0, -1.0]}
    assert family.slice(-0.5).level == 1.0
