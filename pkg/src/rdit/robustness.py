"""Robustness checks around the main RD estimate.

Donut and rolling-cutoff RDs, placebo outcomes, a polynomial-order sweep,
an AR(1) serial-correlation diagnostic and one-way ANOVA across exposure
groups. Checks that loop over cutoffs or orders record per-item failures
instead of aborting the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, GroupingError, RditError, ThinSampleError, ThinWindowError
from .months import format_month, parse_month
from .rd import RdConfig, RdEstimate, estimate_rd
from .strikes import MonthlyPanel, StrikeRecord, build_monthly_panel, midpoints

SIGNIFICANCE = 0.05


# --------------------------------------------------------------------------
# donut
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DonutSpec:
    """Months removed before estimation.

    Either ``half_width`` months each side of ``center`` (zero removes
    nothing), or an explicit inclusive ``[lo, hi]`` range.
    """

    center: str = "2012-04"
    half_width: int = 0
    lo: str | None = None
    hi: str | None = None

    def __post_init__(self) -> None:
        if self.half_width < 0:
            raise ConfigError(f"donut half-width must be nonnegative, got {self.half_width}")
        if (self.lo is None) != (self.hi is None):
            raise ConfigError("an explicit donut range needs both ends")
        if self.lo is not None and parse_month(self.lo) > parse_month(self.hi):
            raise ConfigError(f"donut range {self.lo}..{self.hi} is reversed")
        parse_month(self.center)

    @classmethod
    def spanning(cls, lo: str, hi: str) -> "DonutSpec":
        lo_i, hi_i = parse_month(lo), parse_month(hi)
        return cls(center=format_month((lo_i + hi_i) // 2), lo=format_month(lo_i), hi=format_month(hi_i))

    @property
    def excluded_range(self) -> tuple[int, int] | None:
        """Inclusive month-index range, or None when nothing is removed."""
        if self.lo is not None:
            return parse_month(self.lo), parse_month(self.hi)
        if self.half_width == 0:
            return None
        c = parse_month(self.center)
        return c - self.half_width, c + self.half_width

    @property
    def label(self) -> str:
        r = self.excluded_range
        return "none" if r is None else f"{format_month(r[0])}..{format_month(r[1])}"


def default_donuts(
    center: str = "2012-04", half_widths: Sequence[int] = (3, 6, 9), full: tuple[str, str] = ("2011-07", "2013-05")
) -> list[DonutSpec]:
    """Nested donuts around ``center`` ending with the full ``lo..hi`` window."""
    return [DonutSpec(center=center, half_width=w) for w in half_widths] + [DonutSpec.spanning(*full)]


def donut_rd(panel: MonthlyPanel, config: RdConfig, donut: DonutSpec) -> RdEstimate:
    """RD estimate with the donut months removed from ``panel``.

    Raises
    ------
    ThinWindowError
        The donut leaves one side of the cutoff without enough months.
    """
    rng = donut.excluded_range
    punctured = panel if rng is None else panel.without_months(*rng)
    n_pre, n_post = punctured.side_months()
    if n_pre == 0 or n_post == 0:
        raise ThinWindowError(f"donut {donut.label} removes every month on one side of the cutoff", n_pre, n_post)
    est = estimate_rd(punctured, config)
    return replace(est, donut=donut.label)


# --------------------------------------------------------------------------
# rolling cutoff
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RollingEntry:
    cutoff: str
    estimate: float | None
    p_value: float | None
    z: float | None
    significant_at_05: bool | None
    error: str | None = None


@dataclass(frozen=True)
class RollingResult:
    entries: tuple[RollingEntry, ...]
    bandwidth: float | str
    outcome: str

    def __len__(self) -> int:
        return len(self.entries)

    def best(self) -> RollingEntry | None:
        """Entry with the largest ``|z|``; ties go to the earliest cutoff."""
        ok = [e for e in self.entries if e.z is not None and np.isfinite(e.z)]
        if not ok:
            inf = [e for e in self.entries if e.z is not None]
            return inf[0] if inf else None
        return max(ok, key=lambda e: abs(e.z))

    def to_dict(self) -> dict:
        best = self.best()
        return {
            "outcome": self.outcome,
            "bandwidth": self.bandwidth,
            "max_abs_z_cutoff": best.cutoff if best else None,
            "entries": [e.__dict__ for e in self.entries],
        }


ROLLING_CONFIG = RdConfig(bandwidth=48.0, p=1, q=2, kernel="triangular")


def rolling_rd(
    records: Sequence[StrikeRecord],
    config: RdConfig = ROLLING_CONFIG,
    window: tuple[str, str] = ("2010-10", "2013-05"),
    policy: str = "strike_months_only",
) -> RollingResult:
    """Re-estimate the RD at every month of ``window``.

    The panel is rebuilt for each cutoff so event time is measured from that
    cutoff. A cutoff where estimation fails gets an entry with ``error`` set
    and no estimate.
    """
    lo, hi = parse_month(window[0]), parse_month(window[1])
    if lo > hi:
        raise ConfigError(f"rolling window {window[0]}..{window[1]} is reversed")
    entries = []
    for c in range(lo, hi + 1):
        label = format_month(c)
        try:
            panel = build_monthly_panel(records, label, policy)
            est = estimate_rd(panel, config.with_(cutoff=label))
        except RditError as exc:
            entries.append(RollingEntry(label, None, None, None, None, error=str(exc)))
            continue
        entries.append(
            RollingEntry(
                cutoff=label,
                estimate=est.tau_conventional,
                p_value=est.p_conventional,
                z=est.z_conventional,
                significant_at_05=est.p_conventional < SIGNIFICANCE,
            )
        )
    return RollingResult(tuple(entries), config.bandwidth, config.outcome)


# --------------------------------------------------------------------------
# placebo outcomes and polynomial order
# --------------------------------------------------------------------------

PLACEBO_OUTCOMES = ("strike_count", "combatant_casualties", "custom")


def falsification_rd(
    panel: MonthlyPanel,
    outcome: str,
    config: RdConfig,
    series: Mapping[str, float] | None = None,
) -> RdEstimate:
    """RD estimate on a placebo outcome.

    ``outcome="custom"`` takes ``series`` keyed by ``YYYY-MM``; every panel
    month must be present.
    """
    if outcome not in PLACEBO_OUTCOMES:
        raise ConfigError(f"placebo outcome must be one of {', '.join(PLACEBO_OUTCOMES)}, got {outcome!r}")
    if outcome == "custom" and series is None:
        raise ConfigError("custom placebo outcome needs a series")
    return estimate_rd(panel, config.with_(outcome=outcome, series=series))


@dataclass(frozen=True)
class SweepEntry:
    order: int
    estimate: RdEstimate | None
    error: str | None = None


def polynomial_sweep(panel: MonthlyPanel, config: RdConfig, orders: Iterable[int] = (1, 2, 3)) -> list[SweepEntry]:
    """One estimate per polynomial order ``p`` with ``q = p + 1``."""
    out = []
    for p in orders:
        try:
            est = estimate_rd(panel, config.with_(p=p, q=p + 1))
        except RditError as exc:
            out.append(SweepEntry(p, None, str(exc)))
        else:
            out.append(SweepEntry(p, est))
    return out


# --------------------------------------------------------------------------
# serial correlation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AutocorrResult:
    lag1_coefficient: float
    test_stat: float
    p_value: float
    n: int
    degenerate: bool = False

    def motivates_lag(self, alpha: float = SIGNIFICANCE) -> bool:
        return not self.degenerate and self.p_value < alpha


def autocorrelation_diagnostic(series: Sequence[float] | np.ndarray) -> AutocorrResult:
    """AR(1) slope from OLS of ``y[t]`` on ``(1, y[t-1])`` with its t test.

    A constant series (or constant lag) returns coefficient 0, p-value 1
    and ``degenerate=True``.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n < 10:
        raise ThinSampleError(f"serial-correlation diagnostic needs at least 10 observations, got {n}")
    if not np.all(np.isfinite(y)):
        raise ConfigError("series must be finite")
    lag, cur = y[:-1], y[1:]
    scale = max(1.0, float(np.max(np.abs(y))))
    if np.ptp(lag) <= 1e-12 * scale:
        return AutocorrResult(0.0, 0.0, 1.0, n, degenerate=True)
    X = np.column_stack([np.ones(n - 1), lag])
    beta, *_ = np.linalg.lstsq(X, cur, rcond=None)
    resid = cur - X @ beta
    dof = n - 1 - 2
    s2 = float(resid @ resid) / dof
    xc = lag - lag.mean()
    se = math.sqrt(s2 / float(xc @ xc))
    rho = float(beta[1])
    if se == 0:
        t = 0.0 if rho == 0 else math.copysign(math.inf, rho)
        p = 1.0 if rho == 0 else 0.0
    else:
        t = rho / se
        p = float(2 * stats.t.sf(abs(t), dof))
    return AutocorrResult(rho, float(t), p, n)


def rd_residuals(panel: MonthlyPanel, outcome: str = "civilian_casualties") -> np.ndarray:
    """Residuals from separate OLS lines in event time on each side of the cutoff."""
    x = panel.event_time
    y = panel.outcome(outcome)
    keep = np.isfinite(y)
    x, y = x[keep], y[keep]
    out = np.empty_like(y)
    for side in (x < 0, x >= 0):
        if side.sum() == 0:
            continue
        X = np.column_stack([np.ones(side.sum()), x[side]])
        beta, *_ = np.linalg.lstsq(X, y[side], rcond=None)
        out[side] = y[side] - X @ beta
    return out


# --------------------------------------------------------------------------
# ANOVA
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    group_means: tuple[float, ...]
    group_sizes: tuple[int, ...] = ()
    labels: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "f_stat": self.f_stat,
            "df_between": self.df_between,
            "df_within": self.df_within,
            "p_value": self.p_value,
            "groups": [
                {"label": lab, "mean": m, "n": k} for lab, m, k in zip(self.labels, self.group_means, self.group_sizes)
            ],
        }


def one_way_anova(groups: Sequence[Sequence[float]], labels: Sequence[str] | None = None) -> AnovaResult:
    """Classical one-way F test of equal group means."""
    arrs = [np.asarray(g, dtype=float) for g in groups]
    if len(arrs) < 2:
        raise GroupingError("ANOVA needs at least two groups")
    for i, a in enumerate(arrs):
        if a.size == 0:
            name = labels[i] if labels else str(i)
            raise GroupingError(f"group {name!r} is empty")
    sizes = [a.size for a in arrs]
    n, k = sum(sizes), len(arrs)
    if n - k < 1:
        raise GroupingError("ANOVA needs more observations than groups")
    grand = float(np.concatenate(arrs).mean())
    means = [float(a.mean()) for a in arrs]
    ssb = sum(s * (m - grand) ** 2 for s, m in zip(sizes, means))
    ssw = sum(float(np.sum((a - m) ** 2)) for a, m in zip(arrs, means))
    df_b, df_w = k - 1, n - k
    scale = max(1.0, max(float(np.max(np.abs(a))) for a in arrs))
    tol = n * (1e-12 * scale) ** 2
    if ssw <= tol:
        f, p = (0.0, 1.0) if ssb <= tol else (math.inf, 0.0)
    else:
        f = (ssb / df_b) / (ssw / df_w)
        p = float(stats.f.sf(f, df_b, df_w))
    return AnovaResult(
        f_stat=float(f),
        df_between=df_b,
        df_within=df_w,
        p_value=p,
        group_means=tuple(means),
        group_sizes=tuple(sizes),
        labels=tuple(labels) if labels else tuple(str(i) for i in range(k)),
    )


AnovaOutcome = Literal["civilian", "precision", "civ_per_strike"]


def anova_by_exposure(records: Sequence[StrikeRecord], cutoff: str, outcome: AnovaOutcome = "civilian") -> AnovaResult:
    """Compare pre-cutoff with post-cutoff means.

    ``civilian`` and ``precision`` use one value per strike (strikes with
    undefined precision are dropped). ``civ_per_strike`` uses one value per
    strike month, since at strike level it coincides with ``civilian``.
    """
    c = parse_month(cutoff)
    pre: list[float] = []
    post: list[float] = []
    if outcome in ("civilian", "precision"):
        for r in records:
            m = midpoints(r)
            v = m.civilian if outcome == "civilian" else m.precision
            if v is None:
                continue
            (post if r.month >= c else pre).append(v)
    elif outcome == "civ_per_strike":
        if not records:
            raise GroupingError("no strikes to group")
        lo = min(r.month for r in records)
        hi = max(r.month for r in records)
        panel = build_monthly_panel(records, format_month(min(max(c, lo), hi + 1)), "strike_months_only")
        for o in panel.observations:
            (post if o.month_index >= c else pre).append(o.civ_per_strike)
    else:
        raise ConfigError(f"unknown ANOVA outcome {outcome!r}")
    return one_way_anova([pre, post], labels=("pre", "post"))
