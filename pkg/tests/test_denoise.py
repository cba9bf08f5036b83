import numpy as np
import pytest

from intreg.core import Interval, IntervalDataset, IntervalSample
from intreg.denoise import (
    DenoiseQuery,
    ambiguity_radius,
    bound_gap_arrays,
    bound_gaps,
    buffer_radius,
    buffer_upper_bound,
    gamma_estimate,
    induced_bounds,
    intersect_groups,
    mean_reduced_width,
    reduced_interval,
)
from conftest import lipschitz_interval_dataset, random_interval_dataset


def sample(x, lo, hi, y=None):
    return IntervalSample(np.atleast_1d(np.asarray(x, dtype=float)), Interval(lo, hi), y)


# two-point configuration used throughout: x1 at 0 with [0, 10], x2 at
# distance 1 with [4, 6]; with m = 1 the induced bounds at x1 are
# [0, 10] and [3, 7], intersecting to [3, 7]
def two_sample_ds():
    return IntervalDataset([sample(0.0, 0.0, 10.0), sample(1.0, 4.0, 6.0)])


class TestInducedBounds:
    def test_formula(self):
        iv = induced_bounds(sample(0.0, 1.0, 3.0), 2.0, np.array([1.0]))
        assert (iv.lower, iv.upper) == (-1.0, 5.0)

    def test_zero_distance_is_own_interval(self):
        iv = induced_bounds(sample(0.5, 1.0, 3.0), 2.0, np.array([0.5]))
        assert (iv.lower, iv.upper) == (1.0, 3.0)

    def test_small_m(self):
        iv = induced_bounds(sample(0.0, 1.0, 3.0), 0.1, np.array([1.0]))
        assert iv.lower == pytest.approx(0.9)
        assert iv.upper == pytest.approx(3.1)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            induced_bounds(sample(0.0, 1.0, 3.0), 1.0, np.array([0.0, 0.0]))


class TestReducedInterval:
    def test_single_sample(self):
        ds = IntervalDataset([sample(2.0, -1.0, 4.0)])
        red = reduced_interval(ds, 3.0, np.array([2.0]))
        assert (red.base_lower, red.base_upper) == (-1.0, 4.0)
        assert not red.empty
        assert red.arg_lower == red.arg_upper == 0

    def test_two_sample_enumerated(self):
        red = reduced_interval(two_sample_ds(), 1.0, np.array([0.0]))
        assert (red.base_lower, red.base_upper) == (3.0, 7.0)
        assert red.arg_lower == 1 and red.arg_upper == 1

    def test_disjoint_is_empty(self):
        ds = IntervalDataset([sample(0.0, 0.0, 1.0), sample(1.0, 5.0, 6.0)])
        red = reduced_interval(ds, 1.0, np.array([0.0]))
        assert red.empty

    def test_subset_of_own_interval(self, rng):
        ds = random_interval_dataset(rng, 40, 3)
        for m in (0.5, 2.0, 8.0):
            for i in (0, 7, 39):
                red = reduced_interval(ds, m, ds.features[i])
                assert red.base_lower >= ds.lowers[i] - 1e-12
                assert red.base_upper <= ds.uppers[i] + 1e-12

    def test_monotone_in_m(self, rng):
        ds = random_interval_dataset(rng, 30, 2)
        q = ds.features[3]
        prev = reduced_interval(ds, 0.25, q)
        for m in (0.5, 1.0, 4.0, 64.0):
            cur = reduced_interval(ds, m, q)
            assert cur.base_lower <= prev.base_lower + 1e-12
            assert cur.base_upper >= prev.base_upper - 1e-12
            prev = cur

    def test_large_m_limit_is_own_interval(self, rng):
        # every other point's induced bounds fly off, leaving the query
        # point's own interval
        ds = random_interval_dataset(rng, 30, 2)
        for i in (0, 11, 29):
            red = reduced_interval(ds, 1e9, ds.features[i])
            assert red.base_lower == ds.lowers[i]
            assert red.base_upper == ds.uppers[i]

    def test_brute_force_oracle(self, rng):
        # independent naive double loop over induced_bounds, bit-exact
        for _ in range(50):
            n = int(rng.integers(1, 30))
            d = int(rng.integers(1, 4))
            ds = random_interval_dataset(rng, n, d)
            m = float(rng.uniform(0.1, 5.0))
            q = rng.standard_normal(d)
            lo, hi = -np.inf, np.inf
            for smp in ds.samples:
                iv = induced_bounds(smp, m, q)
                lo = max(lo, iv.lower)
                hi = min(hi, iv.upper)
            red = reduced_interval(ds, m, q)
            assert red.base_lower == lo and red.base_upper == hi

    def test_linf_norm(self):
        ds = IntervalDataset([sample([0.0, 0.0], 1.0, 2.0)])
        red_l2 = reduced_interval(ds, 1.0, np.array([3.0, 4.0]), norm="l2")
        red_li = reduced_interval(ds, 1.0, np.array([3.0, 4.0]), norm="linf")
        assert red_l2.base_lower == pytest.approx(1.0 - 5.0)
        assert red_li.base_lower == pytest.approx(1.0 - 4.0)


class TestBoundGaps:
    def test_enumerated(self):
        ds = two_sample_ds()
        q = np.array([0.0])
        g2 = bound_gaps(ds, 1.0, q, 1)
        assert g2.lower_gap == 0.0  # x2 achieves the best induced lower bound
        g1 = bound_gaps(ds, 1.0, q, 0)
        assert g1.lower_gap == 3.0
        assert g2.upper_gap == 0.0  # x2 also achieves the best upper bound

    def test_nonnegative_with_zero_at_argext(self, rng):
        ds = lipschitz_interval_dataset(rng, 25, 2, lip=1.0)
        red = reduced_interval(ds, 1.5, ds.features[0])
        lg, ug = bound_gap_arrays(ds, 1.5, ds.features[0])
        assert np.all(lg >= 0) and np.all(ug >= 0)
        assert lg[red.arg_lower] == 0.0 and ug[red.arg_upper] == 0.0

    def test_error_on_empty(self):
        ds = IntervalDataset([sample(0.0, 0.0, 1.0), sample(1.0, 5.0, 6.0)])
        with pytest.raises(ValueError):
            bound_gaps(ds, 1.0, np.array([0.0]), 0)


class TestBufferRadius:
    def test_eta_zero_exact(self, rng):
        ds = lipschitz_interval_dataset(rng, 10, 2, lip=0.5)
        r, s = buffer_radius(ds, DenoiseQuery(ds.features[0], m=1.0, eta=0.0))
        assert (r, s) == (0.0, 0.0)

    def test_single_sample_linear(self):
        ds = IntervalDataset([sample(0.0, 2.0, 5.0)])
        r, s = buffer_radius(ds, DenoiseQuery(np.array([0.0]), m=1.0, eta=0.7, exponent=1.0))
        assert r == pytest.approx(0.7, abs=1e-9)
        assert s == pytest.approx(0.7, abs=1e-9)

    def test_piecewise_closed_form(self):
        # gaps {0, 3}: mean (r - g)_+ = r/2 for r <= 3, so eta = 1 gives r = 2
        ds = two_sample_ds()
        r, s = buffer_radius(ds, DenoiseQuery(np.array([0.0]), m=1.0, eta=1.0, exponent=1.0))
        assert r == pytest.approx(2.0, abs=1e-9)
        assert s == pytest.approx(2.0, abs=1e-9)  # upper gaps are also {3, 0}

    def test_residual(self, rng):
        for _ in range(30):
            ds = lipschitz_interval_dataset(rng, int(rng.integers(2, 40)), 2, lip=0.5)
            p = float(rng.choice([1.0, 1.5, 2.0]))
            eta = float(rng.uniform(0.01, 2.0))
            q = DenoiseQuery(ds.features[0], m=float(rng.uniform(0.6, 3.0)), eta=eta, exponent=p)
            lg, ug = bound_gap_arrays(ds, q.m, q.query_x)
            r, s = buffer_radius(ds, q)
            for root, gaps in ((r, lg), (s, ug)):
                resid = abs(float(np.mean(np.maximum(root - gaps, 0.0) ** p)) - eta)
                assert resid <= 1e-9

    def test_negative_eta_rejected(self):
        with pytest.raises(ValueError):
            DenoiseQuery(np.array([0.0]), m=1.0, eta=-0.1)


class TestBufferUpperBound:
    def test_eta_zero(self):
        ds = two_sample_ds()
        rb, sb = buffer_upper_bound(
            ds, DenoiseQuery(np.array([0.0]), m=1.0, eta=0.0), delta_grid=[0.0]
        )
        assert (rb, sb) == (0.0, 0.0)

    def test_single_sample(self):
        ds = IntervalDataset([sample(0.0, 2.0, 5.0)])
        rb, _ = buffer_upper_bound(
            ds, DenoiseQuery(np.array([0.0]), m=1.0, eta=0.7), delta_grid=[0.0]
        )
        assert rb == pytest.approx(0.7)

    def test_two_grid_terms(self):
        # min(0 + 1/0.5, 3 + 1/1) = 2, matching the exact radius here
        ds = two_sample_ds()
        rb, _ = buffer_upper_bound(
            ds, DenoiseQuery(np.array([0.0]), m=1.0, eta=1.0), delta_grid=[0.0, 3.0]
        )
        assert rb == pytest.approx(2.0)

    def test_dominates_exact(self, rng):
        for _ in range(100):
            ds = lipschitz_interval_dataset(rng, int(rng.integers(2, 30)), 2, lip=0.5)
            q = DenoiseQuery(
                ds.features[0],
                m=float(rng.uniform(0.6, 3.0)),
                eta=float(rng.uniform(0.0, 1.5)),
                exponent=float(rng.choice([1.0, 2.0])),
            )
            grid = np.linspace(0.0, 5.0, 11)
            r, s = buffer_radius(ds, q)
            rb, sb = buffer_upper_bound(ds, q, grid)
            assert rb >= r - 1e-9 and sb >= s - 1e-9

    def test_empty_grid_rejected(self):
        ds = two_sample_ds()
        with pytest.raises(ValueError):
            buffer_upper_bound(ds, DenoiseQuery(np.array([0.0]), m=1.0, eta=1.0), [])


class TestGamma:
    def test_large_tau_is_one(self, rng):
        ds = lipschitz_interval_dataset(rng, 20, 2, lip=0.5)
        assert gamma_estimate(ds, 1.0, 1e9, ds.features) == pytest.approx(1.0)

    def test_single_sample(self):
        ds = IntervalDataset([sample(0.0, 1.0, 2.0)])
        assert gamma_estimate(ds, 1.0, 0.0, ds.features) == pytest.approx(1.0)

    def test_two_sample_enumerated(self):
        # at x1 with tau 0 both gap fractions are 1/2: contribution 2
        ds = two_sample_ds()
        assert gamma_estimate(ds, 1.0, 0.0, ds.features[:1]) == pytest.approx(2.0)

    def test_nonincreasing_in_tau(self, rng):
        ds = lipschitz_interval_dataset(rng, 30, 2, lip=0.5)
        taus = [0.0, 0.1, 0.5, 1.0, 5.0, 50.0]
        vals = [gamma_estimate(ds, 1.0, t, ds.features) for t in taus]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


class TestMeanReducedWidth:
    def test_two_sample_value(self):
        # reduced interval at x1 is [3, 7] (width 4); at x2 it is [4, 6]
        ds = two_sample_ds()
        got = mean_reduced_width(ds, 1.0, ds.features)
        assert got == pytest.approx(0.5 * (4.0 + 2.0))

    def test_monotone_in_m(self, rng):
        ds = lipschitz_interval_dataset(rng, 40, 2, lip=0.5)
        widths = [mean_reduced_width(ds, m, ds.features) for m in (0.6, 1.0, 4.0, 32.0)]
        assert all(a <= b + 1e-12 for a, b in zip(widths, widths[1:]))

    def test_never_exceeds_original_mean_width(self, rng):
        ds = lipschitz_interval_dataset(rng, 40, 2, lip=0.5)
        reduced = mean_reduced_width(ds, 1.0, ds.features)
        assert reduced <= float(np.mean(ds.uppers - ds.lowers)) + 1e-12


class TestIntersectGroups:
    def test_values(self):
        x = np.zeros(1)
        got = intersect_groups(
            [
                (x, [Interval(0, 4), Interval(2, 6)]),
                (x, [Interval(0, 1)]),
                (x, [Interval(0, 1), Interval(2, 3)]),
            ]
        )
        assert (got[0][1].lower, got[0][1].upper) == (2, 4)
        assert (got[1][1].lower, got[1][1].upper) == (0, 1)
        assert got[2][1] is None

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            intersect_groups([(np.zeros(1), [])])


class TestAmbiguityRadius:
    def test_singletons_give_zero(self):
        x = np.zeros(1)
        groups = [(x, 3.0, [Interval(0, 3), Interval(3, 8)])]
        assert ambiguity_radius(groups) == 0.0

    def test_epsilon_ball(self):
        x = np.zeros(1)
        eps = 0.25
        groups = [
            (x, y, [Interval(y - eps, y + eps), Interval(y - 2 * eps, y + eps)])
            for y in (0.0, 1.0, -3.5)
        ]
        assert ambiguity_radius(groups) == pytest.approx(eps, abs=1e-15)

    def test_enumerated(self):
        groups = [(np.zeros(1), 3.0, [Interval(0, 4), Interval(2, 6)])]
        assert ambiguity_radius(groups) == pytest.approx(1.0)

    def test_violating_interval_rejected(self):
        with pytest.raises(ValueError):
            ambiguity_radius([(np.zeros(1), 5.0, [Interval(0, 4)])])
