import numpy as np
import pytest
from scipy import stats

from glset import (Constant, Coordinate, Norm2, SurfaceMeasureHandle,
                   build_model, conditional_vs_surface, disintegrate,
                   support_check, verify_disintegration)
from glset.expressions import ExpressionFunctional

ONE = Constant(1.0)


class TestDisintegrate:
    def test_equiprobable_bins(self, iid3):
        D = disintegrate(iid3, Coordinate(1), 10 ** 6, seed=7, bins=10)
        se = np.sqrt(0.1 * 0.9 / 10 ** 6)
        assert np.all(np.abs(D.weights - 0.1) < 4 * se)
        assert D.weights.sum() == 1.0

    def test_fixed_bins_match_chi5_probabilities(self, iid5):
        n = 2 * 10 ** 5
        D = disintegrate(iid5, Norm2(), n, seed=11, bins=12, scheme="fixed")
        probs = np.diff(stats.chi2.cdf(D.edges, df=5))
        probs[-1] += 1.0 - stats.chi2.cdf(D.edges[-1], df=5)  # top bin holds the max
        se = np.sqrt(probs * (1 - probs) / n)
        # edges are sample min/max, so boundary mass is only approximate
        assert np.all(np.abs(D.weights - probs) < 5 * se + 2.0 / n)

    def test_every_sample_in_exactly_one_bin(self, iid3):
        D = disintegrate(iid3, Coordinate(1), 5000, seed=13, bins=7)
        assert int(D.counts.sum()) == 5000
        seen = np.concatenate([D.bin_indices(j) for j in range(D.bins)])
        assert np.array_equal(np.sort(seen), np.arange(5000))

    def test_degenerate_two_samples(self, iid3):
        D = disintegrate(iid3, Coordinate(1), 2, seed=17, bins=2)
        assert D.counts.tolist() == [1, 1]
        assert D.weights.tolist() == [0.5, 0.5]

    def test_validation(self, iid3):
        with pytest.raises(ValueError):
            disintegrate(iid3, Coordinate(1), 10, seed=1, bins=1)
        with pytest.raises(ValueError):
            disintegrate(iid3, Coordinate(1), 3, seed=1, bins=5)

    def test_boundary_levels_belong_to_edge_bins(self, iid3):
        D = disintegrate(iid3, Coordinate(1), 1000, seed=3, bins=5)
        assert D.bin_of(float(D.edges[0])) == 0
        assert D.bin_of(float(D.edges[-1])) == D.bins - 1
        with pytest.raises(ValueError):
            D.bin_of(float(D.edges[-1]) + 1.0)


class TestTowerIdentity:
    @pytest.mark.parametrize("phi", [ONE, Coordinate(1),
                                     ExpressionFunctional("exp(-norm2())")],
                             ids=["one", "xi1", "gauss"])
    def test_exact_with_shared_samples(self, iid3, phi):
        D = disintegrate(iid3, Coordinate(1), 2 * 10 ** 5, seed=19, bins=50)
        rec = verify_disintegration(D, phi)
        assert rec.rel_error <= 1e-12

    def test_constant_weight_gives_one(self, iid3):
        D = disintegrate(iid3, Coordinate(1), 10 ** 4, seed=23, bins=20)
        rec = verify_disintegration(D, ONE)
        assert rec.plain_mean == 1.0
        assert rec.weighted_sum == pytest.approx(1.0, abs=1e-14)

    def test_centered_weight_near_zero(self, iid3):
        D = disintegrate(iid3, Coordinate(1), 10 ** 5, seed=29, bins=20)
        rec = verify_disintegration(D, Coordinate(1))
        assert abs(rec.plain_mean) < 4 / np.sqrt(10 ** 5)
        assert rec.rel_error <= 1e-12

    def test_partition_independent(self, iid3):
        phi = ExpressionFunctional("exp(-norm2())")
        coarse = disintegrate(iid3, Coordinate(1), 10 ** 5, seed=31, bins=25)
        fine = disintegrate(iid3, Coordinate(1), 10 ** 5, seed=31, bins=50)
        a = verify_disintegration(coarse, phi)
        b = verify_disintegration(fine, phi)
        assert a.plain_mean == b.plain_mean
        assert a.weighted_sum == pytest.approx(b.weighted_sum, rel=1e-12)


class TestSupport:
    def test_in_bin_range_bounded_by_width(self, iid5):
        D = disintegrate(iid5, Norm2(), 10 ** 5, seed=37, bins=40)
        rec = support_check(D)
        assert rec.contained

    def test_single_wide_binning(self, iid3):
        D = disintegrate(iid3, Coordinate(1), 1000, seed=41, bins=2)
        rec = support_check(D)
        assert rec.contained
        assert rec.in_bin_range.max() <= (D.edges[-1] - D.edges[0])

    def test_refinement_shrinks_occupied_ranges(self, iid3):
        coarse = disintegrate(iid3, Coordinate(1), 10 ** 4, seed=43, bins=10)
        fine = disintegrate(iid3, Coordinate(1), 10 ** 4, seed=43, bins=100)
        assert (support_check(fine).in_bin_range.max()
                <= support_check(coarse).in_bin_range.max())


class TestConditionalVsSurface:
    def test_conditioning_on_coordinate(self, iid3):
        # G = xi_1, phi = xi_1: conditional mean in the bin at r=1 is ~1 and
        # the product q1 * 1 matches the surface moment q_{xi1}(1) = gamma(1)
        n = 10 ** 6
        D = disintegrate(iid3, Coordinate(1), n, seed=47, bins=200)
        h = SurfaceMeasureHandle(model=iid3, G=Coordinate(1), r=1.0, n=n,
                                 seed=47, estimator="divergence")
        rec = conditional_vs_surface(D, h, Coordinate(1))
        assert rec.conditional_mean == pytest.approx(1.0, abs=0.02)
        assert rec.product == pytest.approx(float(stats.norm.pdf(1.0)), rel=0.02)
        assert rec.surface_value == pytest.approx(float(stats.norm.pdf(1.0)),
                                                  rel=0.02)
        assert rec.within_band

    def test_normalization_constant_weight(self, iid5):
        n = 2 * 10 ** 5
        D = disintegrate(iid5, Norm2(), n, seed=53, bins=100)
        h = SurfaceMeasureHandle(model=iid5, G=Norm2(), r=4.0, n=n, seed=53,
                                 estimator="divergence")
        rec = conditional_vs_surface(D, h, ONE)
        assert rec.conditional_mean == 1.0
        assert rec.product == rec.q1
        assert rec.within_band

    def test_odd_weight_both_routes_zero(self, iid5):
        n = 2 * 10 ** 5
        D = disintegrate(iid5, Norm2(), n, seed=59, bins=100)
        h = SurfaceMeasureHandle(model=iid5, G=Norm2(), r=5.0, n=n, seed=59,
                                 estimator="divergence")
        rec = conditional_vs_surface(D, h, Coordinate(2))
        assert abs(rec.product) <= rec.band
        assert abs(rec.surface_value) <= rec.band
        assert rec.within_band

    def test_level_outside_range_rejected(self, iid5):
        D = disintegrate(iid5, Norm2(), 10 ** 4, seed=61, bins=20)
        h = SurfaceMeasureHandle(model=iid5, G=Norm2(), r=-3.0, n=10 ** 4,
                                 seed=61)
        with pytest.raises(ValueError):
            conditional_vs_surface(D, h, ONE)

    def test_empty_bin_reports_unresolved(self, iid5):
        # prepend bins below the data so an interior-by-index bin is empty
        import dataclasses

        D = disintegrate(iid5, Norm2(), 10 ** 4, seed=61, bins=20,
                         scheme="fixed")
        lo = float(D.g_values.min())
        edges = np.concatenate([[lo - 2.0, lo - 1.0], D.edges])
        g_sorted = D.g_values[D.order]
        start = np.empty(len(edges), dtype=D.start.dtype)
        start[0], start[-1] = 0, D.n
        start[1:-1] = np.searchsorted(g_sorted, edges[1:-1], side="left")
        D2 = dataclasses.replace(D, edges=edges, start=start,
                                 counts=np.diff(start))
        assert 0 in D2.empty_bins and 1 in D2.empty_bins
        h = SurfaceMeasureHandle(model=iid5, G=Norm2(), r=lo - 1.5,
                                 n=10 ** 4, seed=61, estimator="mollified",
                                 epsilon=0.2)
        rec = conditional_vs_surface(D2, h, ONE)
        assert rec.unresolved
        assert rec.within_band  # unresolved records never fail the band

    def test_refinement_within_allowance(self, iid3):
        # halving bin widths moves the conditional route by at most the
        # discretization allowance
        phi = ExpressionFunctional("exp(-norm2())")
        n = 2 * 10 ** 5
        h = SurfaceMeasureHandle(model=iid3, G=Coordinate(1), r=0.5, n=n,
                                 seed=67, estimator="divergence")
        recs = []
        for bins in (100, 200):
            D = disintegrate(iid3, Coordinate(1), n, seed=67, bins=bins)
            recs.append(conditional_vs_surface(D, h, phi))
        assert abs(recs[0].product - recs[1].product) <= \
            recs[0].band + recs[1].band
        assert recs[1].bin_width < recs[0].bin_width
