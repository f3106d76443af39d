from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import strike
from rdit.counterfactual import donor_pool, projection_series, run_monte_carlo, vsl_scale
from rdit.errors import ConfigError, DonorPoolError
from rdit.strikes import build_monthly_panel


def corpus(donors, treated, donor_month="2010-03", treated_month="2012-02"):
    """Donor strikes before the cutoff and treated strikes after it, civilian midpoint as given."""
    recs = []
    for i, v in enumerate(donors):
        recs.append(strike(f"{donor_month}-{i % 28 + 1:02d}", civ=(v, v), total=(v, v), sid=f"D{i:04d}"))
    for i, v in enumerate(treated):
        recs.append(strike(f"{treated_month}-{i % 28 + 1:02d}", civ=(v, v), total=(v, v), sid=f"T{i:04d}"))
    return recs


class TestDonorPool:
    def test_window_bounds(self):
        recs = [
            strike("2008-12-31", civ=(9, 9), total=(9, 9)),
            strike("2009-01-01", civ=(1, 1), total=(1, 1)),
            strike("2011-06-30", civ=(3, 3), total=(3, 3)),
            strike("2011-07-01", civ=(7, 7), total=(7, 7)),
        ]
        pool = donor_pool(recs, "2011-07")
        assert pool.values == (1.0, 3.0)
        assert pool.window == ("2009-01", "2011-06")
        assert donor_pool(recs, "2011-07", start=None).values == (9.0, 1.0, 3.0)

    def test_midpoints_used(self):
        pool = donor_pool([strike("2010-01-05", civ=(2, 5), total=(6, 6))], "2011-07")
        assert pool.values == (3.5,)

    def test_empty_pool_raises(self):
        recs = [strike("2012-01-05", civ=(1, 1), total=(1, 1))]
        with pytest.raises(DonorPoolError):
            run_monte_carlo(recs, "2011-07")


class TestMonteCarlo:
    def test_single_donor_exact(self):
        res = run_monte_carlo(corpus([4.0], [0.0, 0.0, 0.0]), iterations=50, seed=1)
        assert res.per_strike_matched_mean == (4.0, 4.0, 4.0)
        assert res.averted_total == 12.0
        assert res.grand_matched_mean == 4.0

    def test_two_point_pool_converges(self):
        res = run_monte_carlo(corpus([0.0, 10.0], [0.0]), iterations=100_000, seed=7)
        assert res.per_strike_matched_mean[0] == pytest.approx(5.0, abs=0.1)

    def test_no_treated_strikes(self):
        res = run_monte_carlo(corpus([1.0, 2.0], []), seed=3)
        assert res.averted_total == 0.0
        assert res.per_strike_matched_mean == ()
        assert res.grand_matched_mean is None
        assert res.mc_standard_error == 0.0

    def test_deterministic(self):
        recs = corpus([0.0, 1.0, 5.0, 12.0], [0.0, 2.0, 1.0])
        a = run_monte_carlo(recs, iterations=500, seed=99)
        b = run_monte_carlo(list(reversed(recs)), iterations=500, seed=99)
        assert a == b
        assert a != run_monte_carlo(recs, iterations=500, seed=100)

    def test_substreams_follow_date_order(self):
        donors = [0.0, 1.0, 5.0, 12.0]
        res = run_monte_carlo(corpus(donors, [0.0, 3.0]), iterations=200, seed=5)
        vals = np.asarray(donors)
        for i, mm in enumerate(res.per_strike_matched_mean):
            g = np.random.default_rng(np.random.SeedSequence(5, spawn_key=(i,)))
            assert mm == vals[g.integers(0, len(vals), size=200)].mean()

    def test_appending_later_strikes_keeps_earlier_draws(self):
        donors = [0.0, 2.0, 9.0]
        base = run_monte_carlo(corpus(donors, [1.0, 1.0]), iterations=300, seed=11)
        extra = corpus(donors, [1.0, 1.0]) + [strike("2013-01-10", civ=(4, 4), total=(4, 4), sid="LATE")]
        more = run_monte_carlo(extra, iterations=300, seed=11)
        assert more.per_strike_matched_mean[:2] == base.per_strike_matched_mean
        assert more.n_treated == 3

    def test_floored_total(self):
        res = run_monte_carlo(corpus([4.0], [0.0, 10.0]), iterations=10, seed=0)
        assert res.averted_total == pytest.approx(4.0 - 6.0)
        assert res.averted_total_floored == pytest.approx(4.0)

    def test_treated_end_inclusive(self):
        recs = corpus([1.0], [0.0]) + [strike("2013-06-01", civ=(0, 0), sid="JUNE")]
        assert run_monte_carlo(recs, treated_end="2013-05").n_treated == 1
        assert run_monte_carlo(recs, treated_end="2013-06").n_treated == 2

    def test_more_iterations_less_spread(self):
        recs = corpus([0.0, 1.0, 3.0, 20.0], [0.0] * 40)
        spread = [np.var(run_monte_carlo(recs, iterations=n, seed=2).per_strike_matched_mean) for n in (1, 5000)]
        assert spread[1] < spread[0]

    def test_bad_iterations(self):
        with pytest.raises(ConfigError):
            run_monte_carlo(corpus([1.0], [0.0]), iterations=0)

    @settings(max_examples=25, deadline=None)
    @given(
        donors=st.lists(st.integers(0, 30), min_size=2, max_size=40),
        n_treated=st.integers(1, 15),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_grand_mean_within_three_mc_se(self, donors, n_treated, seed):
        res = run_monte_carlo(corpus([float(v) for v in donors], [0.0] * n_treated), iterations=2000, seed=seed)
        assert abs(res.grand_matched_mean - np.mean(donors)) <= 3 * res.mc_standard_error + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(
        donors=st.lists(st.integers(0, 30), min_size=1, max_size=20),
        actual=st.lists(st.integers(0, 30), max_size=10),
        seed=st.integers(0, 1000),
    )
    def test_averted_is_matched_minus_actual(self, donors, actual, seed):
        res = run_monte_carlo(corpus([float(v) for v in donors], [float(v) for v in actual]), iterations=50, seed=seed)
        assert res.averted_total == pytest.approx(sum(res.per_strike_matched_mean) - sum(actual), abs=1e-9)
        assert min(donors) - 1e-12 <= min(res.per_strike_matched_mean, default=min(donors))
        assert max(res.per_strike_matched_mean, default=max(donors)) <= max(donors) + 1e-12


class TestVsl:
    @pytest.fixture
    def result_320(self):
        # 80 treated strikes of actual 0 matched to a constant donor of 4
        return run_monte_carlo(corpus([4.0], [0.0] * 80), iterations=5, seed=0)

    def test_headline_scale(self, result_320):
        assert result_320.averted_total == 320.0
        priced = vsl_scale(result_320, 200_000, 800_000)
        assert (priced.vsl_low_total, priced.vsl_high_total) == (64e6, 256e6)

    def test_zero_averted(self):
        priced = vsl_scale(run_monte_carlo(corpus([1.0], []), seed=0))
        assert (priced.vsl_low_total, priced.vsl_high_total) == (0.0, 0.0)

    def test_linear_in_vsl(self, result_320):
        one = vsl_scale(result_320, 1e5, 3e5)
        two = vsl_scale(result_320, 2e5, 6e5)
        assert two.vsl_low_total == 2 * one.vsl_low_total
        assert two.vsl_high_total == 2 * one.vsl_high_total

    @pytest.mark.parametrize("lo,hi", [(0, 1), (-1, 1), (1, 0), (5, 2), (math.nan, 1)])
    def test_invalid_bounds(self, result_320, lo, hi):
        with pytest.raises(ConfigError):
            vsl_scale(result_320, lo, hi)

    def test_serialised_fields(self, result_320):
        d = vsl_scale(result_320).to_dict()
        assert d["vsl_low_total_usd"] == 64e6
        assert d["n_treated"] == 80
        assert len(d["strikes"]) == 80


class TestProjection:
    def test_conservation(self):
        recs = corpus([2.0, 6.0], [1.0, 0.0, 3.0]) + corpus([], [5.0], treated_month="2012-05")
        res = run_monte_carlo(recs, iterations=100, seed=4)
        pts = projection_series(res, build_monthly_panel(recs, "2011-07"))
        assert [p.month for p in pts] == ["2012-02", "2012-05"]
        assert sum(p.projected for p in pts) == pytest.approx(sum(res.per_strike_matched_mean))
        assert sum(p.actual for p in pts) == pytest.approx(9.0)

    def test_empty_treated_month_is_zero(self):
        recs = corpus([2.0], [1.0])
        panel = build_monthly_panel(recs, "2011-07", policy="all_calendar_months_zero_filled")
        pts = projection_series(run_monte_carlo(recs, seed=0), panel)
        assert pts[0].month == "2011-07"
        assert (pts[0].projected, pts[0].actual) == (0.0, 0.0)
        feb = next(p for p in pts if p.month == "2012-02")
        assert (feb.projected, feb.actual) == (2.0, 1.0)

    def test_single_treated_month(self):
        recs = corpus([3.0], [0.0, 0.0])
        pts = projection_series(run_monte_carlo(recs, seed=0), build_monthly_panel(recs, "2011-07"))
        assert len(pts) == 1
        assert (pts[0].projected, pts[0].actual) == (6.0, 0.0)

    def test_strikes_outside_panel(self):
        recs = corpus([3.0], [0.0])
        other = build_monthly_panel(corpus([3.0], [0.0], treated_month="2012-09"), "2011-07")
        with pytest.raises(ConfigError):
            projection_series(run_monte_carlo(recs, seed=0), other)
