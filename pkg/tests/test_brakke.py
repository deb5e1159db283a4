"""
brakke モジュールのテスト

時間のかかる受け入れ確認は slow マーク付き（pytest -m slow で実行）。
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from core import brakke, integer_family
from core.brakke import TestFunction as Bump
from core.brakke import (LIMIT_TOL, BumpSum, Extrapolation, GridResolution, QuadratureGrid,
                         default_flow_times, dyadic_times, evaluate, extrapolate, first_variation,
                         flow_identity, integrate_functionals, limit_check, log_divergence_probe,
                         mass, pairwise_sum, step_ratio, volume_bound_holds)
from core.errors import FitError, QuadratureError, SliceError
from core.integer_family import IntegerFamily, IntegerSlice, LambdaSpec
from core.ode_family import OdeFamily

COARSE = GridResolution(r_panels=4, r_order=6, angle_nodes=8, s_nodes=16)


class TestTestFunction:
    def test_profile(self):
        phi = Bump.at_origin(2, radius=2.0, amplitude=3.0)
        assert phi.value(np.zeros(2))[0] == pytest.approx(3.0)
        assert phi.value(np.array([2.0, 0.0]))[0] == 0.0
        assert phi.value(np.array([0.0, 1j]))[0] == pytest.approx(3.0 * 0.75 ** 3)
        assert phi.reach == 2.0

    def test_vanishing_at_origin(self):
        phi = Bump.vanishing_at_origin(2, radius=0.5)
        assert phi.value(np.zeros(2))[0] == 0.0
        assert phi.value(np.array([0.5, 0.0]))[0] == 1.0

    @given(st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=4, max_size=4))
    @settings(max_examples=30)
    def test_gradient(self, coords):
        phi = Bump((0.2 + 0.1j, -0.3j), radius=1.5)
        z = np.array([coords[0] + 1j * coords[1], coords[2] + 1j * coords[3]])
        h = 1e-6
        for direction in (np.array([1, 0]), np.array([1j, 0]), np.array([0, 1]), np.array([0, 1j])):
            fd = (phi.value(z + h * direction)[0] - phi.value(z - h * direction)[0]) / (2 * h)
            assert phi.directional(z, direction)[0] == pytest.approx(fd, abs=1e-6)

    def test_scaled(self):
        phi = Bump((0.5, 0.2j), radius=1.0)
        z = np.array([0.3 + 0.1j, 0.4])
        assert phi.scaled(2.0).value(2 * z)[0] == pytest.approx(phi.value(z)[0])

    def test_radius(self):
        with pytest.raises(ValueError):
            Bump((0j,), radius=0.0)


def test_pairwise_sum():
    values = [0.1 * i for i in range(13)]
    assert pairwise_sum(values) == pytest.approx(sum(values))
    assert pairwise_sum([]) == 0.0


def test_grid_resolution():
    res = GridResolution()
    assert res.label() == "r8x8/a16/s64"
    assert res.refined().label() == "r16x8/a32/s128"


def test_dyadic_times():
    assert dyadic_times(0.5, 3, -1) == [-0.5, -0.25, -0.125]
    assert dyadic_times(-0.5, 2, 1) == [0.5, 0.25]


class TestExtrapolate:
    TIMES = dyadic_times(0.5, 8, 1)

    def test_square_root_series(self):
        sigma = np.sqrt(self.TIMES)
        values = 2.0 + 0.8 * sigma - 0.3 * sigma ** 2
        fit = extrapolate(self.TIMES, values)
        assert fit.monotone
        assert fit.order >= 2
        assert fit.limit == pytest.approx(2.0, abs=1e-10)
        assert fit.error < 1e-10

    def test_linear_in_time(self):
        times = dyadic_times(0.5, 6, -1)
        fit = extrapolate(times, [1.0 + 3.0 * t for t in times])
        assert fit.limit == pytest.approx(1.0, abs=1e-10)

    def test_slow_square_root_tail(self):
        # 大きな √t 係数と高次項をもつ片側の展開。10 段で錐の値の 0.2% 以内
        levels = dyadic_times(0.5, 10, 1)
        e = np.sqrt(2.0 * np.asarray(levels))
        cone = 0.6465
        values = cone + 2.0 * e - 6.788 * e ** 2 + 14.0 * e ** 3 - 14.14 * e ** 4
        fit = extrapolate(levels, values)
        assert fit.monotone
        assert fit.limit == pytest.approx(cone, abs=2e-3)
        assert fit.error < LIMIT_TOL * cone

    def test_constant(self):
        times = dyadic_times(0.5, 3, 1)
        assert extrapolate(times, [1.5, 1.5, 1.5]) == Extrapolation(1.5, 0.0, True, 0.0, 0)

    def test_non_monotone(self):
        fit = extrapolate(dyadic_times(0.5, 4, 1), [1.0, 1.2, 1.1, 1.3])
        assert (fit.limit, fit.rate, fit.monotone) == (None, None, False)

    def test_diverging(self):
        fit = extrapolate(dyadic_times(0.5, 4, 1), [1.0, 2.0, 4.0, 8.0])
        assert fit.limit is None and not fit.monotone
        assert fit.rate == pytest.approx(2.0)

    def test_too_short(self):
        with pytest.raises(QuadratureError):
            extrapolate([0.5, 0.25], [1.0, 2.0])

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            extrapolate([0.5, 0.25], [1.0, 2.0, 3.0])


class TestStepRatio:
    def test_geometric(self):
        q, converging = step_ratio([1.0, 1.5, 1.75, 1.875])
        assert q == pytest.approx(0.5)
        assert converging

    def test_growing(self):
        q, converging = step_ratio([0.0, 1.0, 3.0, 7.0])
        assert q == pytest.approx(2.0)
        assert not converging

    def test_negligible_steps(self):
        assert step_ratio([2.0, 2.0, 2.0]) == (0.0, True)


class TestFunctionals:
    def setup_method(self):
        self.spec = LambdaSpec((1, 1, -1))
        self.family = IntegerFamily(self.spec)
        self.phi = Bump.at_origin(3, radius=1.5)

    def test_empty_slice(self):
        family = IntegerFamily(LambdaSpec((1, 1, 1)))
        assert mass(family.slice(1.0), self.phi, COARSE) == 0.0
        assert first_variation(family.slice(1.0), self.phi, COARSE) == 0.0
        report = evaluate(family.slice(1.0), self.phi, COARSE)
        assert (report.mass, report.variation, report.error_estimate) == (0.0, 0.0, 0.0)

    def test_compact_slice_rejected(self):
        family = IntegerFamily(LambdaSpec((1, 1, 1)))
        with pytest.raises(SliceError):
            mass(family.slice(-1.0), self.phi, COARSE)

    def test_support_misses_slice(self):
        # |F| ≥ 1 on C = 1
        phi = Bump.at_origin(3, radius=0.5)
        report = evaluate(self.family.slice(-0.5), phi, COARSE)
        assert report.mass == 0.0
        assert report.variation == 0.0

    def test_special_lagrangian_has_no_variation(self):
        slice_ = IntegerSlice.at_level(LambdaSpec((1, -1)), 1.0)
        phi = Bump.at_origin(2, radius=2.0)
        report = evaluate(slice_, phi, COARSE)
        assert report.mass > 0
        assert report.variation == 0.0

    def test_positive_mass(self):
        assert mass(self.family.slice(-0.5), self.phi, COARSE) > 0

    def test_scaling_law(self):
        base = mass(self.family.slice(-0.25), self.phi, COARSE)
        scaled = mass(self.family.slice(-1.0), self.phi.scaled(2.0), COARSE)
        assert scaled == pytest.approx(8.0 * base, rel=1e-10)

    def test_self_convergence(self):
        report = evaluate(self.family.slice(-0.5), self.phi, GridResolution(8, 8, 16, 32))
        assert report.error_estimate < 1e-3 * report.mass
        assert report.grid == "r16x8/a32/s64"

    def test_workers_do_not_change_result(self):
        slice_ = self.family.slice(-0.5)
        grid = QuadratureGrid.build(slice_, COARSE, self.phi.reach)
        assert integrate_functionals(slice_, self.phi, grid, 1) == integrate_functionals(slice_, self.phi, grid, 4)

    def test_volume_bound(self):
        holds, worst = volume_bound_holds(self.family.slice(-0.5), COARSE, self.phi.reach)
        assert holds and worst <= 1.0

    def test_gram_density(self):
        slice_ = self.family.slice(-0.5)
        rng = np.random.default_rng(5)
        for u_sigma, branch in slice_.quadric.sample_chart(rng, 4):
            u = np.concatenate([u_sigma, [1.0]])
            gram = brakke.gram_density(integer_family.chart(slice_, branch), u)
            assert gram == pytest.approx(integer_family.chart_density(slice_, u, branch), rel=1e-8)

    def test_report_dict(self):
        report = evaluate(self.family.slice(-0.5), self.phi, COARSE, refine=False)
        assert set(report.to_dict()) == {"t", "mass", "variation", "curvature_term", "transport_term",
                                         "error_estimate", "grid", "nodes"}
        assert report.variation == pytest.approx(report.transport_term - report.curvature_term)

    def test_linear_in_test_function(self):
        slice_ = self.family.slice(-0.125)
        first = Bump.at_origin(3, 1.0)
        second = Bump((0.3, 0.0, 0.0), 0.7)
        combined = BumpSum(((2.0, first), (-0.5, second)))
        a = evaluate(slice_, first, COARSE, refine=False)
        b = evaluate(slice_, second, COARSE, refine=False)
        c = evaluate(slice_, combined, COARSE, refine=False)
        assert c.mass == pytest.approx(2.0 * a.mass - 0.5 * b.mass, rel=1e-10)
        for name in ("curvature_term", "transport_term"):
            expected = 2.0 * getattr(a, name) - 0.5 * getattr(b, name)
            assert getattr(c, name) == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_unresolved_quadrature_raises(self):
        # サポートの縁が r の端点に揃わない偏心バンプ
        phi = Bump((0.5, 0.0, 0.0), 0.6)
        with pytest.raises(QuadratureError):
            evaluate(self.family.slice(-0.125), phi, COARSE, tol=1e-12)
        report = evaluate(self.family.slice(-0.125), phi, COARSE, tol=None)
        assert report.error_estimate > 0

    def test_support_touches_slice_at_a_point(self):
        grid = QuadratureGrid.build(self.family.slice(-0.5), COARSE, 1.0)
        assert grid.r_max == 0.0
        assert integrate_functionals(self.family.slice(-0.5), Bump.at_origin(3, 1.0), grid) == (0.0, 0.0, 0.0)

    def test_radial_extent_follows_moduli(self, rigid_orbit_32):
        slice_ = OdeFamily(rigid_orbit_32).slice(-0.25)
        grid = QuadratureGrid.build(slice_, COARSE, 1.0)
        s = grid.s_nodes[:3]
        moduli = slice_.moduli_sq(s)
        r, _ = grid.radial(slice_.quadric, moduli)
        r_end = r[..., -1] / grid.unit_nodes[-1] ** 2
        assert np.any(r_end > 0)
        for i in range(len(s)):
            reached = r_end[i] > 0
            x = slice_.quadric.assemble(r_end[i][reached], grid.omega_plus[reached], grid.omega_minus[reached])
            radius = np.sqrt(np.sum(x ** 2 * moduli[i], axis=1))
            np.testing.assert_allclose(radius, 1.0, rtol=1e-12)


class TestFlowIdentity:
    def setup_method(self):
        self.family = IntegerFamily(LambdaSpec((1, 1, -1)))
        self.phi = Bump.at_origin(3, 1.0)

    def test_interior_time(self):
        report = flow_identity(self.family, self.phi, -0.125, resolution=COARSE)
        assert report.applicable
        assert report.mass > 0
        assert report.passed, report.to_dict()
        assert report.status == "PASS"

    def test_support_outside_slice(self):
        # C = 2 の近くでは |x| ≥ √2 でサポートに届かない
        report = flow_identity(self.family, self.phi, -1.0, resolution=COARSE)
        assert not report.applicable
        assert report.passed
        assert report.status == "n/a"
        assert report.to_dict()["status"] == "n/a"

    def test_zero_time_rejected(self):
        with pytest.raises(SliceError):
            flow_identity(self.family, self.phi, 0.0)

    def test_default_times(self):
        assert default_flow_times(0.5) == [-0.125, 0.125]
        assert default_flow_times(-0.5) == [-0.125, 0.125]


class TestLogDivergenceErrors:
    def test_requires_n2(self):
        family = IntegerFamily(LambdaSpec((1, 1, -1)))
        with pytest.raises(FitError):
            log_divergence_probe(family, Bump.at_origin(3), [-0.5, -0.25, -0.125])

    def test_requires_negative_times(self, rigid_orbit_21):
        family = OdeFamily(rigid_orbit_21)
        with pytest.raises(FitError):
            log_divergence_probe(family, Bump.at_origin(2), [0.5, 0.25, 0.125])


@pytest.mark.slow
class TestAcceptance:
    def test_self_convergence_tight(self):
        family = IntegerFamily(LambdaSpec((1, 1, -1)))
        report = evaluate(family.slice(-0.125), Bump.at_origin(3, 1.0), GridResolution(16, 8, 32, 64))
        assert report.mass > 0
        assert report.error_estimate < 1e-5 * report.mass

    def test_flow_identity(self):
        family = IntegerFamily(LambdaSpec((1, 1, -1)))
        for t in default_flow_times(0.5):
            report = flow_identity(family, Bump.at_origin(3, 1.0), t, workers=4)
            assert report.applicable
            assert report.relative_error <= 0.01, report.to_dict()

    def test_ode_flow_identity(self, rigid_orbit_32):
        report = flow_identity(OdeFamily(rigid_orbit_32), Bump.at_origin(3, 1.0), -0.125, workers=4)
        assert report.applicable
        assert report.passed, report.to_dict()

    def test_integer_limit(self):
        family = IntegerFamily(LambdaSpec((1, 1, -1)))
        report = limit_check(family, Bump.at_origin(3, 1.0), t0=0.5, levels=10, workers=4)
        assert report.verdict == "PASS", report.to_dict()
        assert all(side.converged for side in report.sides)

    def test_ode_limit(self, rigid_orbit_32):
        report = limit_check(OdeFamily(rigid_orbit_32), Bump.at_origin(3, 1.0), levels=10, workers=4)
        assert report.verdict == "PASS", report.to_dict()

    def test_log_divergence(self, rigid_orbit_21):
        family = OdeFamily(rigid_orbit_21)
        times = dyadic_times(0.5, 6, -1)
        report = log_divergence_probe(family, Bump.at_origin(2, 1.0), times, workers=4)
        assert report.slope > 0
        assert report.correlation > 0.99
        assert report.transport_converging
        # 入力の順序によらない
        shuffled = log_divergence_probe(family, Bump.at_origin(2, 1.0), times[::-1], workers=4)
        assert shuffled.transport_rate == pytest.approx(report.transport_rate)
        assert shuffled.transport_converging

    def test_vanishing_bump_control(self, rigid_orbit_21):
        family = OdeFamily(rigid_orbit_21)
        report = limit_check(family, Bump.vanishing_at_origin(2, 1.0), levels=10, workers=4)
        assert report.verdict == "PASS", report.to_dict()
