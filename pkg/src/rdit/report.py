"""Tables, plots and verdict records written by the command-line tool.

Every writer is deterministic: fixed column order, fixed number
formatting, sorted JSON keys where order is not meaningful, and no
timestamps.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .breaks import BreakEstimate
from .counterfactual import ProjectionPoint
from .months import format_month, parse_month
from .rd import RdEstimate
from .robustness import RollingResult
from .strikes import MonthlyPanel, SummaryTable
from .svg import Chart, padded_range

# --------------------------------------------------------------------------
# formatting and file helpers
# --------------------------------------------------------------------------


def round_half_up(v: float, places: int = 0) -> float:
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(v)).quantize(q, rounding=ROUND_HALF_UP))


def fmt_num(v: float | None, places: int = 3) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{round_half_up(v, places):.{places}f}"


def fmt_count(v: float | None) -> str:
    if v is None or math.isnan(v):
        return "NA"
    return str(int(round_half_up(v)))


def json_safe(obj: Any) -> Any:
    """Replace non-finite floats (not valid JSON) with ``None`` or a string."""
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: str | Path, payload: Any) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(json_safe(payload), indent=2) + "\n", encoding="utf-8")
    return p


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return p


# --------------------------------------------------------------------------
# summary table
# --------------------------------------------------------------------------

NO_OBS = "no observations"


def summary_rows(tables: Sequence[SummaryTable]) -> tuple[list[str], list[list[str]]]:
    """CSV layout: one row per statistic, a pre and post column per cutoff.

    Counts are shown as whole persons (half-up rounding of summed
    midpoints); means keep three decimals. An empty side shows the
    no-observations marker.
    """
    header = ["section", "stat"]
    for t in tables:
        header += [f"pre {t.cutoff}", f"post {t.cutoff}"]
    rows = []
    for i, base in enumerate(tables[0].rows):
        row = [base.section, base.stat]
        for t in tables:
            r = t.rows[i]
            for v in (r.pre, r.post):
                if v is None:
                    row.append(NO_OBS)
                elif r.stat == "Count":
                    row.append(fmt_count(v))
                else:
                    row.append(fmt_num(v))
        rows.append(row)
    for label, attr in (
        ("Included months", "months"),
        ("Strike months", "strike_months"),
        ("Calendar months", "calendar_months"),
    ):
        row = ["Months", label]
        for t in tables:
            row += [str(getattr(t, f"{attr}_pre")), str(getattr(t, f"{attr}_post"))]
        rows.append(row)
    return header, rows


def summary_json(tables: Sequence[SummaryTable], policy: str) -> dict:
    out: dict[str, Any] = {"inclusion_policy": policy, "cutoffs": []}
    for t in tables:
        out["cutoffs"].append(
            {
                "cutoff": t.cutoff,
                "rows": [
                    {
                        "section": r.section,
                        "stat": r.stat,
                        "pre": r.pre,
                        "post": r.post,
                        "pre_display": NO_OBS if r.pre is None else (fmt_count(r.pre) if r.stat == "Count" else fmt_num(r.pre)),
                        "post_display": NO_OBS
                        if r.post is None
                        else (fmt_count(r.post) if r.stat == "Count" else fmt_num(r.post)),
                    }
                    for r in t.rows
                ],
                "months": {
                    "included": [t.months_pre, t.months_post],
                    "strike_months": [t.strike_months_pre, t.strike_months_post],
                    "calendar_months": [t.calendar_months_pre, t.calendar_months_post],
                    "counts_differ": (t.strike_months_pre, t.strike_months_post)
                    != (t.calendar_months_pre, t.calendar_months_post),
                },
            }
        )
    return out


# --------------------------------------------------------------------------
# estimate table
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateColumn:
    outcome: str
    bandwidth: str
    estimate: RdEstimate | None
    error: str | None = None

    @property
    def label(self) -> str:
        return f"{self.outcome} [{self.bandwidth}]"


def _stars(p: float) -> str:
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""


def estimate_rows(columns: Sequence[EstimateColumn]) -> tuple[list[str], list[list[str]]]:
    """Rows: each estimator with a p-value row beneath, then footer rows.

    The values in the rows labelled ``p-value`` are p-values, not standard
    errors; standard errors are in the JSON output.
    """
    header = ["row"] + [c.label for c in columns]
    rows: list[list[str]] = []
    for label, key in (("Conventional", "conventional"), ("Bias-Corrected", "bias_corrected"), ("Robust", "robust")):
        est_row, p_row = [label], [f"{label} p-value"]
        for c in columns:
            e = c.estimate
            if e is None:
                est_row.append("NA")
                p_row.append("NA")
                continue
            p = getattr(e, f"p_{key}")
            est_row.append(fmt_num(getattr(e, f"tau_{key}")) + _stars(p))
            p_row.append(fmt_num(p))
        rows += [est_row, p_row]

    def footer(name: str, fn) -> list[str]:
        return [name] + [fn(c.estimate) if c.estimate is not None else "NA" for c in columns]

    rows.append(footer("Observations left", lambda e: str(e.n_left)))
    rows.append(footer("Observations right", lambda e: str(e.n_right)))
    rows.append(footer("PolyOrder", lambda e: fmt_num(e.p)))
    rows.append(footer("OrderBias", lambda e: fmt_num(e.q)))
    rows.append(footer("Kernel", lambda e: e.kernel.capitalize()))
    rows.append(footer("Bandwidth", lambda e: f"{fmt_num(e.bandwidth, 2)} months"))
    rows.append(footer("Bias bandwidth", lambda e: f"{fmt_num(e.bias_bandwidth, 2)} months"))
    rows.append(footer("BWType", lambda e: e.bandwidth_type))
    rows.append(["Error"] + [c.error or "" for c in columns])
    return header, rows


def estimate_json(columns: Sequence[EstimateColumn]) -> dict:
    return {
        "note": "values in parentheses in the published layout are p-values",
        "columns": [
            {"outcome": c.outcome, "bandwidth": c.bandwidth, "estimate": c.estimate.to_dict() if c.estimate else None, "error": c.error}
            for c in columns
        ],
    }


# --------------------------------------------------------------------------
# plots
# --------------------------------------------------------------------------

_WHISKERS = {
    "civilian_casualties": ("civ_min_sum", "civ_max_sum", 1),
    "child_casualties": ("child_min_sum", "child_max_sum", 1),
    "civ_per_strike": ("civ_min_sum", "civ_max_sum", "per_strike"),
}

_OUTCOME_TITLES = {
    "civilian_casualties": "Monthly civilian casualties",
    "strike_precision": "Monthly mean strike precision",
    "civ_per_strike": "Civilian casualties per strike",
    "strike_count": "Monthly strike count",
    "combatant_casualties": "Monthly combatant casualties",
    "child_casualties": "Monthly child casualties",
    "total_casualties": "Monthly total casualties",
}


def _month_ticks(lo: int, hi: int, every: int = 12) -> dict[float, str]:
    first = lo + (-lo) % every
    return {float(m): format_month(m) for m in range(first, hi + 1, every)}


def raw_data_plot(panel: MonthlyPanel, outcome: str, donut: tuple[int, int] | None = None) -> Chart:
    """Monthly outcome against calendar month with a line fitted on each side."""
    months = panel.month_indices.astype(float)
    y = panel.outcome(outcome)
    lo_w = hi_w = None
    if outcome in _WHISKERS:
        a, b, mode = _WHISKERS[outcome]
        lo_w = np.array([getattr(o, a) for o in panel.observations], dtype=float)
        hi_w = np.array([getattr(o, b) for o in panel.observations], dtype=float)
        if mode == "per_strike":
            counts = np.array([o.strike_count for o in panel.observations], dtype=float)
            with np.errstate(invalid="ignore", divide="ignore"):
                lo_w, hi_w = lo_w / counts, hi_w / counts
    vals = list(y) + ([] if lo_w is None else list(lo_w) + list(hi_w))
    first, last = int(months.min()), int(months.max())
    chart = Chart(
        title=f"{_OUTCOME_TITLES.get(outcome, outcome)} around {format_month(panel.cutoff_index)}",
        x_label="Month",
        y_label=outcome.replace("_", " "),
        x_range=(first - 1, last + 1),
        y_range=padded_range(vals),
        x_tick_labels=_month_ticks(first, last),
    )
    if donut is not None:
        chart.shade_x(donut[0] - 0.5, donut[1] + 0.5, label="donut")
    if lo_w is not None:
        chart.errorbars(months, lo_w, hi_w)
    chart.points(months, y, label="monthly value")
    c = panel.cutoff_index
    for side in (months < c, months >= c):
        ok = side & np.isfinite(y)
        if ok.sum() >= 2:
            beta = np.polyfit(months[ok], y[ok], 1)
            xs = [months[ok].min(), months[ok].max()]
            chart.line(xs, [beta[0] * x + beta[1] for x in xs], color="#c0392b")
    chart.vline(c - 0.5)
    return chart


def rolling_plot(result: RollingResult, shade: tuple[int, int] | None = None) -> Chart:
    """Estimate per candidate cutoff; filled markers are significant at 5%."""
    pts = [(parse_month(e.cutoff), e.estimate, bool(e.significant_at_05)) for e in result.entries if e.estimate is not None]
    all_m = [parse_month(e.cutoff) for e in result.entries]
    lo, hi = (min(all_m), max(all_m)) if all_m else (0, 1)
    ys = [p[1] for p in pts]
    chart = Chart(
        title=f"Rolling cutoff estimates ({result.outcome}, bandwidth {result.bandwidth})",
        x_label="Candidate cutoff",
        y_label="Conventional estimate",
        x_range=(lo - 1, hi + 1),
        y_range=padded_range(ys + [0.0]),
        x_tick_labels=_month_ticks(lo, hi, 6),
    )
    if shade is not None:
        chart.shade_x(shade[0] - 0.5, shade[1] + 0.5, label="break CI")
    chart.hline(0.0)
    chart.points([p[0] for p in pts], ys, filled=[p[2] for p in pts], label="estimate (filled: p < 0.05)")
    return chart


def projection_plot(points: Sequence[ProjectionPoint]) -> Chart:
    months = [float(parse_month(p.month)) for p in points]
    proj = [p.projected for p in points]
    act = [p.actual for p in points]
    lo, hi = (int(min(months)), int(max(months))) if months else (0, 1)
    chart = Chart(
        title="Projected and actual civilian deaths",
        x_label="Month",
        y_label="Civilian deaths",
        x_range=(lo - 1, hi + 1),
        y_range=padded_range(proj + act + [0.0]),
        x_tick_labels=_month_ticks(lo, hi, 6),
    )
    chart.points(months, proj, shape="circle", color="#1f4e99", label="projected")
    chart.points(months, act, shape="triangle", color="#c0392b", label="actual")
    return chart


# --------------------------------------------------------------------------
# verdicts
# --------------------------------------------------------------------------

PASS, FAIL, INDETERMINATE = "pass", "fail", "indeterminate"


@dataclass
class Verdict:
    check: str
    verdict: str
    detail: str
    statistics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.check, "verdict": self.verdict, "detail": self.detail, "statistics": self.statistics}


def overall(verdicts: Sequence[Verdict]) -> str:
    kinds = {v.verdict for v in verdicts}
    if FAIL in kinds:
        return FAIL
    if kinds == {PASS}:
        return PASS
    return INDETERMINATE


def break_verdict(est: BreakEstimate, cutoff: str) -> Verdict:
    c = parse_month(cutoff)
    for b, (lo, hi) in zip(est.break_indices, est.ci_per_break):
        if lo <= c <= hi:
            return Verdict(
                "structural_break",
                PASS,
                f"break at {format_month(b)} with CI {format_month(lo)}..{format_month(hi)} covers {cutoff}",
                est.to_dict(),
            )
    if not est.break_indices:
        return Verdict("structural_break", FAIL, "no significant break", est.to_dict())
    return Verdict("structural_break", FAIL, f"no break interval covers {cutoff}", est.to_dict())


def break_window(est: BreakEstimate | None, cutoff: str) -> tuple[int, int] | None:
    """CI of the break whose interval covers ``cutoff``, else of the nearest break."""
    if est is None or not est.break_indices:
        return None
    c = parse_month(cutoff)
    for lo, hi in est.ci_per_break:
        if lo <= c <= hi:
            return lo, hi
    i = int(np.argmin([abs(b - c) for b in est.break_indices]))
    return est.ci_per_break[i]


def rolling_verdict(result: RollingResult, window: tuple[int, int] | None) -> Verdict:
    best = result.best()
    stats = result.to_dict()
    if best is None:
        return Verdict("rolling_cutoff", INDETERMINATE, "no cutoff could be estimated", stats)
    if window is None:
        return Verdict("rolling_cutoff", INDETERMINATE, f"max |z| at {best.cutoff}; no reference window", stats)
    ok = window[0] <= parse_month(best.cutoff) <= window[1]
    span = f"{format_month(window[0])}..{format_month(window[1])}"
    return Verdict("rolling_cutoff", PASS if ok else FAIL, f"max |z| at {best.cutoff}, window {span}", stats)


def sign_verdict(check: str, reference: RdEstimate | None, others: Sequence[tuple[str, RdEstimate | None, str | None]]) -> Verdict:
    """All estimates share the reference sign."""
    stats = {
        "reference": reference.to_dict() if reference else None,
        "items": [{"label": lab, "estimate": e.to_dict() if e else None, "error": err} for lab, e, err in others],
    }
    ests = [e for _, e, _ in others if e is not None]
    if reference is None or not ests:
        return Verdict(check, INDETERMINATE, "nothing to compare", stats)
    sign = math.copysign(1, reference.tau_conventional)
    same = all(math.copysign(1, e.tau_conventional) == sign for e in ests)
    missing = sum(e is None for _, e, _ in others)
    detail = f"{len(ests)} estimates {'share' if same else 'do not share'} the reference sign"
    if missing:
        detail += f"; {missing} failed"
    return Verdict(check, PASS if same else FAIL, detail, stats)


def placebo_verdict(label: str, est: RdEstimate | None, error: str | None, alpha: float = 0.05) -> Verdict:
    check = f"placebo_{label}"
    if est is None:
        return Verdict(check, INDETERMINATE, error or "estimation failed", {})
    ps = (est.p_conventional, est.p_bias_corrected, est.p_robust)
    ok = all(p >= alpha for p in ps)
    return Verdict(check, PASS if ok else FAIL, f"min p-value {min(ps):.3f}", est.to_dict())
