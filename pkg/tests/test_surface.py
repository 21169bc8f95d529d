import numpy as np
import pytest
from scipy import stats

from glset import (Constant, Coordinate, Linear, Norm2, SublevelBump,
                   SurfaceMeasureHandle, build_model, hausdorff_compare,
                   hyperplane_quadrature, ibp_residual, ibp_residuals,
                   perimeter_identity_check, positivity_scan, sphere_quadrature,
                   surface_integral, surface_report, trace_eval)
from glset.expressions import ExpressionFunctional
from glset.surface import unit_sphere_grid

ONE = Constant(1.0)
GAMMA0 = float(stats.norm.pdf(0.0))


def handle(model, G, r, n=2 * 10 ** 5, seed=101, estimator="divergence", **kw):
    return SurfaceMeasureHandle(model=model, G=G, r=r, n=n, seed=seed,
                                estimator=estimator, **kw)


class TestSurfaceIntegral:
    def test_total_mass_is_chi5_density(self, iid5):
        h = handle(iid5, Norm2(), 5.0, n=10 ** 6)
        value, se = surface_integral(h, ONE)
        oracle = float(stats.chi2.pdf(5.0, df=5))
        assert value == pytest.approx(oracle, rel=0.02)
        assert abs(value - oracle) <= 4 * se

    def test_odd_weight_vanishes_on_sphere(self, iid5):
        h = handle(iid5, Norm2(), 5.0)
        value, se = surface_integral(h, Coordinate(2))
        assert abs(value) <= 4 * se

    def test_weight_supported_away_from_level_set(self, iid5):
        # phi vanishes on a neighborhood of the level set, so the surface
        # integral must vanish despite a nontrivial sublevel integrand
        h = handle(iid5, Norm2(), 5.0)
        phi = SublevelBump(Norm2(), c=4.0, delta=0.5)
        value, se = surface_integral(h, phi)
        assert abs(value) <= 4 * se

    def test_total_mass_equals_handle_q1_exactly(self, iid5):
        h = handle(iid5, Norm2(), 3.0)
        a, _ = surface_integral(h, ONE)
        report = surface_report(h, [ONE])
        assert report.total_mass == a


class TestIbp:
    def test_constant_weight_closed_form(self, iid3):
        # both sides equal the standard normal density at the level
        rec = ibp_residual(handle(iid3, Coordinate(1), 0.0, n=10 ** 6), ONE, 1)
        assert rec.lhs == pytest.approx(GAMMA0, rel=0.01)
        assert rec.rhs == pytest.approx(GAMMA0, rel=0.01)
        assert rec.within_band

    def test_linear_weight_closed_form_zero(self, iid3):
        # E[1_{xi1<0}(1 - xi1^2)] = 0 and the surface moment of xi1 at the
        # hyperplane {xi1=0} is 0
        rec = ibp_residual(handle(iid3, Coordinate(1), 0.0, n=10 ** 6),
                           Coordinate(1), 1)
        assert abs(rec.lhs) <= 4 * rec.lhs_stderr
        assert abs(rec.rhs) <= 4 * rec.rhs_stderr
        assert rec.within_band

    def test_zero_weight_both_sides_zero(self, iid3):
        rec = ibp_residual(handle(iid3, Coordinate(1), 0.5), Constant(0.0), 1)
        assert rec.lhs == 0.0 and rec.rhs == 0.0

    def test_battery_within_bands(self, iid5):
        # directions up to min(d, 4) on a builtin pair
        phi = ExpressionFunctional("exp(-norm2())")
        for k in (1, 2, 3, 4):
            for rec in ibp_residuals(iid5, Norm2(), phi, k, (2.0, 4.0, 6.0),
                                     2 * 10 ** 5, seed=107):
                assert rec.within_band, (k, rec.r, rec.residual, rec.band)

    def test_direction_out_of_range(self, iid3):
        with pytest.raises(IndexError):
            ibp_residual(handle(iid3, Norm2(), 2.0), ONE, 4)

    def test_perimeter_reframing_matches(self, iid5):
        h = handle(iid5, Norm2(), 4.0)
        rec = ibp_residual(h, ONE, 1)
        per = perimeter_identity_check(h, ONE, 1)
        assert per.sublevel_side == rec.lhs
        assert per.surface_flux == rec.rhs
        assert per.residual == rec.residual
        assert per.within_band == rec.within_band


class TestTrace:
    def test_clamped_sequence_converges_and_saturates(self, iid5):
        phi = ExpressionFunctional("exp(-norm2())")
        rep = trace_eval(handle(iid5, Norm2(), 4.0), phi)
        assert rep.converged
        # once the clamp radius exceeds every sampled |xi| the truncation is
        # the identity on the sample and the difference is exactly zero
        assert rep.exact_tail
        assert rep.diffs[-1] <= rep.diffs[0] + 4 * rep.target_stderr

    def test_nonnegative_weight_nonnegative_trace(self, iid5):
        phi = ExpressionFunctional("exp(-norm2())")
        rep = trace_eval(handle(iid5, Norm2(), 4.0), phi)
        assert rep.target >= -4 * rep.target_stderr

    def test_constant_weight_traces_to_total_mass(self, iid5):
        h = handle(iid5, Norm2(), 4.0)
        rep = trace_eval(h, ONE)
        mass, _ = surface_integral(h, ONE)
        assert rep.target == mass
        assert rep.estimates[-1] == mass


class TestPositivity:
    def test_gaussian_level_always_positive(self, iid3):
        scan = positivity_scan(iid3, Coordinate(1), (-2.0, -1.0, 0.0, 1.0, 2.0),
                               2 * 10 ** 5, seed=109)
        assert np.all(scan.estimates > 4 * scan.stderrs)
        assert scan.consistent

    def test_chi5_support_boundary(self, iid5):
        scan = positivity_scan(iid5, Norm2(), (-0.5, 1.0, 5.0), 2 * 10 ** 5,
                               seed=113)
        assert scan.g_min > 0.0
        est = dict(zip(scan.r.tolist(), scan.estimates))
        se = dict(zip(scan.r.tolist(), scan.stderrs))
        assert est[-0.5] == 0.0
        assert est[1.0] > 4 * se[1.0] and est[5.0] > 4 * se[5.0]
        assert scan.consistent

    def test_clipped_functional_upper_bound(self, iid5):
        clipped = ExpressionFunctional("min(norm2(), 6)")
        scan = positivity_scan(iid5, clipped, (3.0, 7.0), 2 * 10 ** 5, seed=127,
                               estimator="mollified")
        assert scan.g_max == pytest.approx(6.0)
        assert scan.estimates[1] == 0.0  # nothing above the clip level
        assert scan.consistent


class TestQuadratureOracles:
    def test_unit_sphere_areas(self):
        # sum of weights reproduces |S^(d-1)| = 2 pi^(d/2) / Gamma(d/2)
        from scipy.special import gamma

        for d in (2, 3, 4):
            _, w = unit_sphere_grid(d)
            area = 2 * np.pi ** (d / 2) / gamma(d / 2)
            assert np.sum(w) == pytest.approx(area, rel=1e-12)

    def test_sphere_value_is_chi_density(self):
        # G = norm2: total surface mass equals the chi-square density
        for d in (2, 3, 5):
            for r in (1.0, 3.0):
                quad = sphere_quadrature(ONE, d, r)
                assert quad == pytest.approx(float(stats.chi2.pdf(r, df=d)),
                                             rel=1e-10)

    def test_sphere_d3_r1_closed_form(self):
        assert sphere_quadrature(ONE, 3, 1.0) == pytest.approx(
            np.exp(-0.5) / np.sqrt(2 * np.pi), rel=1e-12)
        assert sphere_quadrature(ONE, 3, 1.0) == pytest.approx(0.24197, abs=1e-5)

    def test_hyperplane_value_is_normal_density(self):
        # G = w . xi: total mass is the N(0, |w|^2) density at the level
        w = np.array([0.5, 0.5, 0.5, 0.5])
        for r in (0.0, 0.3):
            quad = hyperplane_quadrature(ONE, w, 4, r)
            oracle = float(stats.norm.pdf(r, scale=np.linalg.norm(w)))
            assert quad == pytest.approx(oracle, rel=1e-10)

    def test_hyperplane_d2_r0_closed_form(self):
        quad = hyperplane_quadrature(ONE, np.array([1.0]), 2, 0.0)
        assert quad == pytest.approx(0.39894, abs=1e-5)

    def test_sphere_level_must_be_positive(self):
        with pytest.raises(ValueError):
            sphere_quadrature(ONE, 3, -1.0)


class TestHausdorffCompare:
    def test_sphere_d3(self, iid3):
        h = handle(iid3, Norm2(), 1.0, n=10 ** 6, estimator="mollified",
                   seed=131)
        rec = hausdorff_compare(h, ONE)
        assert rec.geometry == "sphere"
        assert rec.rel_error <= max(0.01, 4 * rec.mc_stderr / rec.quad_value)

    def test_sphere_d5_nontrivial_weight(self, iid5):
        phi = ExpressionFunctional("exp(-norm2())")
        h = handle(iid5, Norm2(), 3.0, n=2 * 10 ** 5, seed=137)
        rec = hausdorff_compare(h, phi)
        # oracle factorizes on the sphere: exp(-r) times the surface mass
        assert rec.quad_value == pytest.approx(
            np.exp(-3.0) * float(stats.chi2.pdf(3.0, df=5)), rel=1e-10)
        assert rec.rel_error <= max(0.01, 4 * rec.mc_stderr / rec.quad_value)

    def test_hyperplane_d2(self):
        m = build_model(("iid_gaussian", 2))
        h = handle(m, Coordinate(1), 0.0, n=10 ** 6, seed=139)
        rec = hausdorff_compare(h, ONE)
        assert rec.geometry == "hyperplane"
        assert rec.quad_value == pytest.approx(GAMMA0, rel=1e-10)
        assert rec.rel_error <= max(0.01, 4 * rec.mc_stderr / rec.quad_value)

    def test_hyperplane_d4_general_linear(self):
        m = build_model(("iid_gaussian", 4))
        G = Linear([0.5, 0.5, 0.5, 0.5])
        phi = ExpressionFunctional("exp(-norm2())")
        h = handle(m, G, 0.3, n=4 * 10 ** 5, seed=149)
        rec = hausdorff_compare(h, phi)
        assert rec.rel_error <= max(0.01, 4 * rec.mc_stderr / abs(rec.quad_value))

    def test_tangential_odd_weight_zero_both_routes(self, iid3):
        h = handle(iid3, Coordinate(1), 0.5, n=2 * 10 ** 5, seed=151)
        phi = Coordinate(2)
        rec = hausdorff_compare(h, phi)
        assert abs(rec.quad_value) < 1e-12
        assert abs(rec.mc_value) <= 4 * rec.mc_stderr

    def test_unsupported_geometry_rejected(self, iid3):
        phi = ExpressionFunctional("exp(-norm2())")
        h = handle(iid3, ExpressionFunctional("norm2() + xi(1)^4"), 1.0)
        with pytest.raises(ValueError):
            hausdorff_compare(h, phi)

    def test_dimension_cap_rejected(self):
        m = build_model(("iid_gaussian", 7))
        with pytest.raises(ValueError):
            hausdorff_compare(handle(m, Norm2(), 3.0, n=100), ONE)


class TestSurfaceReport:
    def test_report_assembles_all_parts(self, iid5):
        phi = ExpressionFunctional("exp(-norm2())")
        h = handle(iid5, Norm2(), 3.0, n=10 ** 5)
        report = surface_report(h, [phi], k_list=(1,), with_trace=True,
                                with_hausdorff=True)
        assert report.total_mass > 0
        assert phi.name in report.integrals
        assert len(report.ibp) == 1 and report.ibp[0].k == 1
        assert report.trace is not None and report.trace.converged
        assert report.hausdorff is not None
        assert report.hausdorff.geometry == "sphere"
