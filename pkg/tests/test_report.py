from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import strike
from rdit.breaks import estimate_breaks
from rdit.counterfactual import ProjectionPoint
from rdit.rd import RdConfig, estimate_rd
from rdit.report import (
    FAIL,
    INDETERMINATE,
    NO_OBS,
    PASS,
    EstimateColumn,
    Verdict,
    break_verdict,
    break_window,
    estimate_json,
    estimate_rows,
    fmt_count,
    fmt_num,
    json_safe,
    overall,
    placebo_verdict,
    projection_plot,
    raw_data_plot,
    round_half_up,
    sign_verdict,
    summary_json,
    summary_rows,
    write_csv,
    write_json,
)
from rdit.strikes import build_monthly_panel, summary_table
from rdit.svg import Chart, nice_ticks, padded_range


class TestFormatting:
    @pytest.mark.parametrize(
        "v,places,expected",
        [(2.5, 0, 3.0), (3.5, 0, 4.0), (-2.5, 0, -3.0), (0.0005, 3, 0.001), (1.0045, 3, 1.005), (2.675, 2, 2.68)],
    )
    def test_round_half_up(self, v, places, expected):
        # binary floats like 2.675 round as written, not as stored
        assert round_half_up(v, places) == expected

    def test_fmt_num(self):
        assert fmt_num(-8.0) == "-8.000"
        assert fmt_num(None) == "NA"
        assert fmt_num(math.nan) == "NA"
        assert fmt_num(math.inf) == "inf"
        assert fmt_num(1.23456, 2) == "1.23"

    def test_fmt_count(self):
        assert fmt_count(606.5) == "607"
        assert fmt_count(None) == "NA"

    def test_json_safe(self):
        out = json_safe({"a": math.nan, "b": (np.float64(1.5), -math.inf), 3: np.int64(4), "c": np.bool_(True)})
        assert out == {"a": None, "b": [1.5, "-inf"], "3": 4, "c": True}
        json.dumps(out, allow_nan=False)

    def test_writers(self, tmp_path):
        p = write_csv(tmp_path / "x" / "t.csv", ["a", "b"], [[1, "q,r"]])
        assert p.read_text() == 'a,b\n1,"q,r"\n'
        j = write_json(tmp_path / "t.json", {"v": math.nan})
        assert json.loads(j.read_text()) == {"v": None}


class TestSummaryRows:
    def test_empty_side_marker(self):
        recs = [strike("2010-02-01", civ=(1, 2), total=(3, 3)), strike("2010-05-01", civ=(0, 0), total=(1, 1))]
        panel = build_monthly_panel(recs, "2010-06")
        header, rows = summary_rows([summary_table(panel, recs, "2010-06")])
        assert header == ["section", "stat", "pre 2010-06", "post 2010-06"]
        civ_count = next(r for r in rows if r[:2] == ["Civilian Casualties", "Count"])
        assert civ_count[2:] == ["2", NO_OBS]
        civ_mean = next(r for r in rows if r[:2] == ["Civilian Casualties", "Mean"])
        assert civ_mean[2] == "0.750"
        assert ["Months", "Included months", "2", "0"] in rows

    def test_json_counts_differ_flag(self, step_panel, step_corpus, step_config):
        d = summary_json([summary_table(step_panel, step_corpus, step_config.cutoff)], "strike_months_only")
        assert d["inclusion_policy"] == "strike_months_only"
        months = d["cutoffs"][0]["months"]
        assert months["included"] == [60, 60]
        assert isinstance(months["counts_differ"], bool)


class TestEstimateRows:
    def test_noiseless_step(self, noiseless_panel):
        est = estimate_rd(noiseless_panel, RdConfig())
        cols = [EstimateColumn("civilian_casualties", "mserd", est), EstimateColumn("strike_precision", "mserd", None, "thin window")]
        header, rows = estimate_rows(cols)
        assert header == ["row", "civilian_casualties [mserd]", "strike_precision [mserd]"]
        table = {r[0]: r[1:] for r in rows}
        assert table["Conventional"][0].startswith("-8.000")
        assert table["Robust"][0].startswith("-8.000")
        assert table["Conventional"][1] == "NA"
        assert table["PolyOrder"][0] == "1.000"
        assert table["OrderBias"][0] == "2.000"
        assert table["Kernel"][0] == "Triangular"
        assert table["Error"] == ["", "thin window"]
        assert estimate_json(cols)["columns"][1]["estimate"] is None

    @pytest.mark.parametrize("p,stars", [(0.001, "***"), (0.03, "**"), (0.07, "*"), (0.5, "")])
    def test_significance_stars(self, noiseless_panel, p, stars):
        from dataclasses import replace

        est = replace(estimate_rd(noiseless_panel, RdConfig()), p_conventional=p)
        _, rows = estimate_rows([EstimateColumn("civilian_casualties", "mserd", est)])
        assert rows[0][1] == "-8.000" + stars


class TestVerdicts:
    def test_overall(self):
        v = lambda k: Verdict("c", k, "")
        assert overall([v(PASS), v(PASS)]) == PASS
        assert overall([v(PASS), v(INDETERMINATE)]) == INDETERMINATE
        assert overall([v(INDETERMINATE), v(FAIL)]) == FAIL
        assert overall([]) == INDETERMINATE

    def test_break_verdict(self):
        y = np.where(np.arange(80) < 30, 10.0, 2.0) + np.random.default_rng(7).normal(0, 0.5, 80)
        est = estimate_breaks([(2009 * 12 + i, v) for i, v in enumerate(y)], max_breaks=2)
        assert break_verdict(est, "2011-07").verdict == PASS
        assert break_verdict(est, "2012-07").verdict == FAIL
        lo, hi = break_window(est, "2012-07")
        assert lo <= 2011 * 12 + 6 <= hi
        flat = estimate_breaks([(i, 1.0) for i in range(40)])
        assert break_verdict(flat, "2011-07").verdict == FAIL
        assert break_window(flat, "2011-07") is None

    def test_sign_and_placebo(self, noiseless_panel):
        from dataclasses import replace

        ref = estimate_rd(noiseless_panel, RdConfig())
        flipped = replace(ref, tau_conventional=3.0)
        assert sign_verdict("s", ref, [("a", ref, None), ("b", None, "err")]).verdict == PASS
        assert sign_verdict("s", ref, [("a", flipped, None)]).verdict == FAIL
        assert sign_verdict("s", None, [("a", ref, None)]).verdict == INDETERMINATE
        assert placebo_verdict("x", ref, None).verdict == FAIL
        quiet = replace(ref, p_conventional=0.4, p_bias_corrected=0.5, p_robust=0.6)
        assert placebo_verdict("x", quiet, None).verdict == PASS
        assert placebo_verdict("x", None, "boom").verdict == INDETERMINATE


class TestSvg:
    def test_raw_plot_is_deterministic(self, step_panel, tmp_path):
        a = raw_data_plot(step_panel, "civilian_casualties", donut=(2011 * 12 + 3, 2011 * 12 + 9)).render()
        b = raw_data_plot(step_panel, "civilian_casualties", donut=(2011 * 12 + 3, 2011 * 12 + 9)).render()
        assert a == b
        root = ET.fromstring(a.encode())
        assert root.tag.endswith("svg")
        assert any(el.tag.endswith("rect") for el in root.iter())
        path = raw_data_plot(step_panel, "civ_per_strike").save(tmp_path / "p.svg")
        assert path.read_text() == raw_data_plot(step_panel, "civ_per_strike").render()

    def test_projection_plot_is_deterministic(self):
        pts = [ProjectionPoint("2012-01", 3.0, 1.0), ProjectionPoint("2012-02", 2.0, 0.0)]
        svg = projection_plot(pts).render()
        assert svg == projection_plot(pts).render()
        assert "projected" in svg and "actual" in svg

    def test_degenerate_ranges(self):
        c = Chart("t", "x", "y", (1.0, 1.0), (5.0, 5.0))
        assert c.x_range == (0.0, 2.0)
        assert c.y_range == (4.0, 6.0)
        c.render()

    def test_padded_range_ignores_nonfinite(self):
        lo, hi = padded_range([1.0, math.nan, 3.0, math.inf])
        assert lo < 1.0 and hi > 3.0 and math.isfinite(hi)

    @settings(max_examples=100, deadline=None)
    @given(lo=st.floats(-1e6, 1e6), width=st.floats(1e-3, 1e6))
    def test_nice_ticks_cover_range(self, lo, width):
        hi = lo + width
        ticks = nice_ticks(lo, hi)
        assert ticks == sorted(ticks)
        step = ticks[1] - ticks[0] if len(ticks) > 1 else width
        assert ticks[0] >= lo - 1e-6 * step
        assert ticks[-1] <= hi + 1e-6 * step
        assert ticks[0] - lo <= step * (1 + 1e-6)
