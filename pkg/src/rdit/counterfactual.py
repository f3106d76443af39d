"""Monte Carlo projection of civilian casualties without the policy.

Every treated strike is matched to civilian-casualty values resampled from a
donor pool of earlier strikes; the averted total is the sum of matched means
minus actual casualties. Each treated strike draws from its own substream,
keyed by its position in date order, so results do not depend on how the
strikes are scheduled and appending later strikes leaves earlier draws
unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DonorPoolError
from .months import format_month, parse_month
from .strikes import MonthlyPanel, StrikeRecord, midpoints

ADMIN_START = "2009-01"
DEFAULT_VSL_LOW = 200_000.0
DEFAULT_VSL_HIGH = 800_000.0
# range quoted alongside the headline estimate; echoed, never recomputed
PUBLISHED_VSL_RANGE_USD = (80_000_000.0, 260_000_000.0)


@dataclass(frozen=True)
class DonorPool:
    values: tuple[float, ...]
    window: tuple[str, str]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else math.nan

    @property
    def sd(self) -> float:
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "n": len(self.values),
            "mean": self.mean,
            "sd": self.sd,
            "min": min(self.values) if self.values else None,
            "max": max(self.values) if self.values else None,
        }


@dataclass(frozen=True)
class AvertedResult:
    """Matched means and averted totals.

    ``averted_total`` sums signed per-strike differences;
    ``averted_total_floored`` clips each difference at zero first.
    """

    per_strike_matched_mean: tuple[float, ...]
    actual: tuple[float, ...]
    strike_months: tuple[int, ...]
    strike_ids: tuple[str, ...]
    grand_matched_mean: float | None
    averted_total: float
    averted_total_floored: float
    iterations: int
    seed: int
    donor_pool: DonorPool
    vsl_low: float | None = None
    vsl_high: float | None = None
    vsl_low_total: float | None = None
    vsl_high_total: float | None = None

    @property
    def n_treated(self) -> int:
        return len(self.per_strike_matched_mean)

    @property
    def mc_standard_error(self) -> float:
        """Monte Carlo standard error of ``grand_matched_mean``."""
        if not self.n_treated:
            return 0.0
        return self.donor_pool.sd / math.sqrt(self.iterations * self.n_treated)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "seed": self.seed,
            "n_treated": self.n_treated,
            "grand_matched_mean": self.grand_matched_mean,
            "mc_standard_error": self.mc_standard_error,
            "averted_total": self.averted_total,
            "averted_total_floored": self.averted_total_floored,
            "vsl_low_usd": self.vsl_low,
            "vsl_high_usd": self.vsl_high,
            "vsl_low_total_usd": self.vsl_low_total,
            "vsl_high_total_usd": self.vsl_high_total,
            "published_vsl_range_usd": list(PUBLISHED_VSL_RANGE_USD),
            "donor_pool": self.donor_pool.to_dict(),
            "strikes": [
                {"strike_id": sid, "month": format_month(m), "matched_mean": mm, "actual": a}
                for sid, m, mm, a in zip(self.strike_ids, self.strike_months, self.per_strike_matched_mean, self.actual)
            ],
        }


def donor_pool(
    records: Sequence[StrikeRecord], cutoff: str, *, start: str | None = ADMIN_START
) -> DonorPool:
    """Civilian midpoints of strikes dated in ``[start, cutoff)``.

    ``start=None`` takes every pre-cutoff strike.
    """
    c = parse_month(cutoff)
    lo = parse_month(start) if start is not None else None
    vals = [midpoints(r).civilian for r in _by_date(records) if r.month < c and (lo is None or r.month >= lo)]
    first = format_month(lo) if lo is not None else "start"
    return DonorPool(tuple(vals), (first, format_month(c - 1)))


def _by_date(records: Sequence[StrikeRecord]) -> list[StrikeRecord]:
    return sorted(records, key=lambda r: (r.date, r.strike_id))


def run_monte_carlo(
    records: Sequence[StrikeRecord],
    cutoff: str = "2011-07",
    iterations: int = 5000,
    seed: int = 0,
    *,
    pool_start: str | None = ADMIN_START,
    treated_end: str | None = None,
) -> AvertedResult:
    """Resample donor values for every treated strike.

    Parameters
    ----------
    records : strikes, any order
    cutoff : first treated month
    iterations : draws per treated strike
    seed : root seed; treated strike ``i`` (date order) uses substream ``i``
    pool_start : first donor month, or None for all pre-cutoff strikes
    treated_end : last treated month to include, inclusive

    Raises
    ------
    DonorPoolError
        No strike falls inside the donor window.
    """
    if iterations < 1:
        raise ConfigError(f"iterations must be positive, got {iterations}")
    c = parse_month(cutoff)
    end = parse_month(treated_end) if treated_end is not None else None
    pool = donor_pool(records, cutoff, start=pool_start)
    if not pool.values:
        raise DonorPoolError(f"no strikes in donor window {pool.window[0]}..{pool.window[1]}")
    values = np.asarray(pool.values)

    treated = [r for r in _by_date(records) if r.month >= c and (end is None or r.month <= end)]
    matched, actual = [], []
    for i, r in enumerate(treated):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        draws = values[rng.integers(0, len(values), size=iterations)]
        matched.append(float(draws.mean()))
        actual.append(midpoints(r).civilian)

    diff = np.asarray(matched) - np.asarray(actual)
    return AvertedResult(
        per_strike_matched_mean=tuple(matched),
        actual=tuple(actual),
        strike_months=tuple(r.month for r in treated),
        strike_ids=tuple(r.strike_id for r in treated),
        grand_matched_mean=float(np.mean(matched)) if matched else None,
        averted_total=float(diff.sum()),
        averted_total_floored=float(np.clip(diff, 0.0, None).sum()),
        iterations=iterations,
        seed=seed,
        donor_pool=pool,
    )


def vsl_scale(
    result: AvertedResult, vsl_low: float = DEFAULT_VSL_LOW, vsl_high: float = DEFAULT_VSL_HIGH
) -> AvertedResult:
    """Price the averted total at a low and a high value of a statistical life."""
    if not (vsl_low > 0 and vsl_high > 0):
        raise ConfigError(f"VSL bounds must be positive, got {vsl_low} and {vsl_high}")
    if vsl_low > vsl_high:
        raise ConfigError(f"low VSL {vsl_low} exceeds high VSL {vsl_high}")
    return replace(
        result,
        vsl_low=float(vsl_low),
        vsl_high=float(vsl_high),
        vsl_low_total=result.averted_total * vsl_low,
        vsl_high_total=result.averted_total * vsl_high,
    )


@dataclass(frozen=True)
class ProjectionPoint:
    month: str
    projected: float
    actual: float


def projection_series(result: AvertedResult, panel: MonthlyPanel) -> list[ProjectionPoint]:
    """Monthly sums of matched means and actual casualties over treated panel months."""
    projected: dict[int, float] = {}
    actual: dict[int, float] = {}
    for m, mm, a in zip(result.strike_months, result.per_strike_matched_mean, result.actual):
        projected[m] = projected.get(m, 0.0) + mm
        actual[m] = actual.get(m, 0.0) + a
    months = [int(m) for m in panel.month_indices if m >= panel.cutoff_index]
    stray = sorted(set(projected) - set(months))
    if stray:
        raise ConfigError(
            "simulated strikes fall outside the panel's treated months: " + ", ".join(format_month(m) for m in stray)
        )
    return [ProjectionPoint(format_month(m), projected.get(m, 0.0), actual.get(m, 0.0)) for m in months]
