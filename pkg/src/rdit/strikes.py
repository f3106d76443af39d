"""Strike-level records, casualty midpoints and monthly panels.

Casualty sources report a minimum and a maximum for each category. The
analysis works with the midpoint, kept fractional so that monthly sums
add back up to the strike-level totals exactly.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .errors import ConfigError, RowError, SchemaError
from .months import date_month, format_month, index_to_ym, parse_month

log = logging.getLogger(__name__)

InclusionPolicy = Literal["strike_months_only", "all_calendar_months_zero_filled"]
INCLUSION_POLICIES = ("strike_months_only", "all_calendar_months_zero_filled")

CASUALTY_FIELDS = ("civ_min", "civ_max", "child_min", "child_max", "total_min", "total_max")
REQUIRED_COLUMNS = ("date",) + CASUALTY_FIELDS
OPTIONAL_COLUMNS = ("strike_id", "location", "sources")

DEFAULT_SCHEMA: dict[str, str] = {name: name for name in REQUIRED_COLUMNS + OPTIONAL_COLUMNS}
DEFAULT_DATE_RANGE = (dt.date(2002, 1, 1), dt.date(2019, 12, 31))

# midpoint ordering is checked with a little slack for float input
_ORDER_TOL = 1e-9


@dataclass(frozen=True)
class StrikeRecord:
    strike_id: str
    date: dt.date
    civ_min: float
    civ_max: float
    child_min: float
    child_max: float
    total_min: float
    total_max: float
    location: str = ""
    sources: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in CASUALTY_FIELDS:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a nonnegative number, got {v!r}")
        for lo, hi in (("civ_min", "civ_max"), ("child_min", "child_max"), ("total_min", "total_max")):
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"{lo} ({getattr(self, lo)}) exceeds {hi} ({getattr(self, hi)})")
        child = (self.child_min + self.child_max) / 2
        civ = (self.civ_min + self.civ_max) / 2
        total = (self.total_min + self.total_max) / 2
        if child > civ + _ORDER_TOL:
            raise ValueError(f"child midpoint {child} exceeds civilian midpoint {civ}")
        if civ > total + _ORDER_TOL:
            raise ValueError(f"civilian midpoint {civ} exceeds total midpoint {total}")

    @property
    def month(self) -> int:
        return date_month(self.date)


@dataclass(frozen=True)
class CasualtyMidpoints:
    civilian: float
    child: float
    total: float
    precision: float | None

    @property
    def combatant(self) -> float:
        return self.total - self.civilian


def midpoints(record: StrikeRecord) -> CasualtyMidpoints:
    """Midpoint casualty estimates and the combatant share of deaths.

    Precision is ``(total - civilian) / total`` and is left undefined for a
    strike with no deaths at all.
    """
    civ = (record.civ_min + record.civ_max) / 2
    child = (record.child_min + record.child_max) / 2
    total = (record.total_min + record.total_max) / 2
    precision = None
    if total > 0:
        # clamp absorbs float noise from the ordering tolerance
        precision = min(1.0, max(0.0, (total - civ) / total))
    return CasualtyMidpoints(civilian=civ, child=child, total=total, precision=precision)


# --------------------------------------------------------------------------
# CSV ingest
# --------------------------------------------------------------------------


def _parse_date(text: str, date_format: str | None) -> dt.date:
    text = text.strip()
    if date_format:
        return dt.datetime.strptime(text, date_format).date()
    # ISO date, optionally with a time component
    return dt.date.fromisoformat(text[:10])


def _parse_count(text: str, column: str, line: int) -> float:
    try:
        v = float(text.strip())
    except (ValueError, AttributeError):
        raise RowError(line, f"non-numeric value {text!r} in column {column!r}") from None
    if not math.isfinite(v):
        raise RowError(line, f"non-finite value {text!r} in column {column!r}")
    return v


def parse_strike_csv(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    *,
    date_format: str | None = None,
    date_range: tuple[dt.date, dt.date] | None = DEFAULT_DATE_RANGE,
) -> list[StrikeRecord]:
    """Read and validate a strike CSV.

    Parameters
    ----------
    path
        UTF-8 CSV with a header row.
    schema
        Map from logical column name (``date``, ``civ_min``, ...) to the
        header name used in the file. Missing keys fall back to the logical
        name.
    date_format
        ``strptime`` format for the date column; ISO-8601 when omitted.
    date_range
        Inclusive bounds on strike dates, or ``None`` to accept any date.

    Returns
    -------
    list of StrikeRecord
        In file order.

    Raises
    ------
    SchemaError
        A required column is absent from the header.
    RowError
        A row has a non-numeric count, min above max, an out-of-order
        child/civilian/total midpoint, or an unparseable or out-of-range date.
    """
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)

    records: list[StrikeRecord] = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = list(reader.fieldnames or [])
        for logical in REQUIRED_COLUMNS:
            if cols[logical] not in header:
                raise SchemaError(cols[logical], header)

        for row in reader:
            line = reader.line_num
            try:
                date = _parse_date(row[cols["date"]], date_format)
            except (ValueError, TypeError):
                raise RowError(line, f"unparseable date {row[cols['date']]!r}") from None
            if date_range is not None and not (date_range[0] <= date <= date_range[1]):
                raise RowError(line, f"date {date} outside {date_range[0]}..{date_range[1]}")
            counts = {f: _parse_count(row[cols[f]], cols[f], line) for f in CASUALTY_FIELDS}
            sid = row.get(cols["strike_id"]) or f"row{len(records) + 1}"
            sources_raw = row.get(cols["sources"]) or ""
            sources = tuple(s.strip() for s in sources_raw.replace("|", ";").split(";") if s.strip())
            try:
                rec = StrikeRecord(
                    strike_id=sid.strip(),
                    date=date,
                    location=(row.get(cols["location"]) or "").strip(),
                    sources=sources,
                    **counts,
                )
            except ValueError as exc:
                raise RowError(line, str(exc)) from None
            records.append(rec)

    log.info("read %d strike records from %s", len(records), path)
    return records


def write_strike_csv(records: Iterable[StrikeRecord], path: str | Path) -> None:
    """Write records in the default schema (round-trips through parse_strike_csv)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strike_id", "date", "location", *CASUALTY_FIELDS, "sources"])
        for r in records:
            w.writerow(
                [r.strike_id, r.date.isoformat(), r.location]
                + [repr(getattr(r, f)) for f in CASUALTY_FIELDS]
                + [";".join(r.sources)]
            )


# --------------------------------------------------------------------------
# Monthly panel
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MonthlyObservation:
    month_index: int
    event_time: int
    civilian_sum: float
    child_sum: float
    total_sum: float
    strike_count: int
    precision_mean: float | None
    civ_per_strike: float | None
    treated: bool
    civ_min_sum: float = 0.0
    civ_max_sum: float = 0.0
    child_min_sum: float = 0.0
    child_max_sum: float = 0.0

    @property
    def combatant_sum(self) -> float:
        return self.total_sum - self.civilian_sum

    @property
    def month(self) -> str:
        return format_month(self.month_index)


OUTCOMES = (
    "civilian_casualties",
    "strike_precision",
    "civ_per_strike",
    "strike_count",
    "combatant_casualties",
    "child_casualties",
    "total_casualties",
)

_OUTCOME_ATTR = {
    "civilian_casualties": "civilian_sum",
    "strike_precision": "precision_mean",
    "civ_per_strike": "civ_per_strike",
    "strike_count": "strike_count",
    "combatant_casualties": "combatant_sum",
    "child_casualties": "child_sum",
    "total_casualties": "total_sum",
}


@dataclass(frozen=True)
class MonthlyPanel:
    observations: tuple[MonthlyObservation, ...]
    cutoff_index: int
    inclusion_policy: InclusionPolicy = "strike_months_only"

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def month_indices(self) -> np.ndarray:
        return np.array([o.month_index for o in self.observations], dtype=int)

    @property
    def event_time(self) -> np.ndarray:
        return np.array([o.event_time for o in self.observations], dtype=float)

    def outcome(self, name: str) -> np.ndarray:
        """Outcome column as floats; undefined entries are NaN."""
        try:
            attr = _OUTCOME_ATTR[name]
        except KeyError:
            raise ConfigError(f"unknown outcome {name!r}; choose from {', '.join(OUTCOMES)}") from None
        vals = [getattr(o, attr) for o in self.observations]
        return np.array([np.nan if v is None else float(v) for v in vals], dtype=float)

    def side_months(self) -> tuple[int, int]:
        """Number of included months before and from the cutoff."""
        n_post = sum(o.treated for o in self.observations)
        return len(self.observations) - n_post, n_post

    def without_months(self, lo: int, hi: int) -> "MonthlyPanel":
        """Copy with months in ``[lo, hi]`` (inclusive month indices) removed."""
        kept = tuple(o for o in self.observations if not lo <= o.month_index <= hi)
        return MonthlyPanel(kept, self.cutoff_index, self.inclusion_policy)


def _aggregate(month: int, cutoff: int, strikes: Sequence[StrikeRecord]) -> MonthlyObservation:
    mids = [midpoints(r) for r in strikes]
    n = len(strikes)
    civ = sum(m.civilian for m in mids)
    precisions = [m.precision for m in mids if m.precision is not None]
    return MonthlyObservation(
        month_index=month,
        event_time=month - cutoff,
        civilian_sum=civ,
        child_sum=sum(m.child for m in mids),
        total_sum=sum(m.total for m in mids),
        strike_count=n,
        precision_mean=sum(precisions) / len(precisions) if precisions else None,
        civ_per_strike=civ / n if n else None,
        treated=month >= cutoff,
        civ_min_sum=sum(r.civ_min for r in strikes),
        civ_max_sum=sum(r.civ_max for r in strikes),
        child_min_sum=sum(r.child_min for r in strikes),
        child_max_sum=sum(r.child_max for r in strikes),
    )


def build_monthly_panel(
    records: Sequence[StrikeRecord],
    cutoff: str | int,
    policy: InclusionPolicy = "strike_months_only",
    *,
    month_range: tuple[str | int, str | int] | None = None,
) -> MonthlyPanel:
    """Aggregate strikes to one observation per month.

    Under ``strike_months_only`` a month appears only if at least one
    strike happened in it. The zero-filled policy emits every calendar
    month between the first and last strike month (or ``month_range``).

    The cutoff may sit one month past the last strike month, which leaves
    the treated side empty.
    """
    if policy not in INCLUSION_POLICIES:
        raise ConfigError(f"unknown inclusion policy {policy!r}")
    if not records:
        raise ConfigError("cannot build a panel from zero strike records")
    cutoff_idx = parse_month(cutoff)

    by_month: dict[int, list[StrikeRecord]] = {}
    for r in sorted(records, key=lambda r: (r.date, r.strike_id)):
        by_month.setdefault(r.month, []).append(r)

    if month_range is not None:
        first, last = parse_month(month_range[0]), parse_month(month_range[1])
    else:
        first, last = min(by_month), max(by_month)
    if not first <= cutoff_idx <= last + 1:
        raise ConfigError(
            f"cutoff {format_month(cutoff_idx)} outside corpus range "
            f"{format_month(first)}..{format_month(last)}"
        )

    if policy == "strike_months_only":
        months = sorted(m for m in by_month if first <= m <= last)
    else:
        months = list(range(first, last + 1))
    obs = tuple(_aggregate(m, cutoff_idx, by_month.get(m, [])) for m in months)
    return MonthlyPanel(obs, cutoff_idx, policy)


# --------------------------------------------------------------------------
# Table-1 style summary
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    section: str
    stat: str
    pre: float | None
    post: float | None


@dataclass(frozen=True)
class SummaryTable:
    cutoff: str
    rows: tuple[SummaryRow, ...]
    months_pre: int
    months_post: int
    strike_months_pre: int
    strike_months_post: int
    calendar_months_pre: int
    calendar_months_post: int

    def get(self, section: str, stat: str) -> SummaryRow:
        for row in self.rows:
            if row.section == section and row.stat == stat:
                return row
        raise KeyError((section, stat))


SUMMARY_LAYOUT = (
    ("Civilian Casualties", "Count"),
    ("Civilian Casualties", "Mean"),
    ("Civilian Casualties", "Mean MinEst"),
    ("Civilian Casualties", "Mean MaxEst"),
    ("Child Casualties", "Count"),
    ("Child Casualties", "Mean"),
    ("Child Casualties", "Mean MinEst"),
    ("Child Casualties", "Mean MaxEst"),
    ("Total Casualties", "Count"),
    ("Total Casualties", "Mean"),
    ("Strike Precision", "Mean"),
    ("Strike Frequency", "Count"),
    ("Strike Frequency", "Mean"),
)


def _side_stats(obs: Sequence[MonthlyObservation]) -> dict[tuple[str, str], float] | None:
    if not obs:
        return None
    n = len(obs)

    def tot(attr: str) -> float:
        return float(sum(getattr(o, attr) for o in obs))

    prec = [o.precision_mean for o in obs if o.precision_mean is not None]
    return {
        ("Civilian Casualties", "Count"): tot("civilian_sum"),
        ("Civilian Casualties", "Mean"): tot("civilian_sum") / n,
        ("Civilian Casualties", "Mean MinEst"): tot("civ_min_sum") / n,
        ("Civilian Casualties", "Mean MaxEst"): tot("civ_max_sum") / n,
        ("Child Casualties", "Count"): tot("child_sum"),
        ("Child Casualties", "Mean"): tot("child_sum") / n,
        ("Child Casualties", "Mean MinEst"): tot("child_min_sum") / n,
        ("Child Casualties", "Mean MaxEst"): tot("child_max_sum") / n,
        ("Total Casualties", "Count"): tot("total_sum"),
        ("Total Casualties", "Mean"): tot("total_sum") / n,
        ("Strike Precision", "Mean"): sum(prec) / len(prec) if prec else math.nan,
        ("Strike Frequency", "Count"): tot("strike_count"),
        ("Strike Frequency", "Mean"): tot("strike_count") / n,
    }


def summary_table(
    panel: MonthlyPanel, records: Sequence[StrikeRecord], cutoff: str | int
) -> SummaryTable:
    """Pre/post summary statistics around ``cutoff``.

    Monthly means divide by the number of months the panel includes on
    each side, so the result depends on the panel's inclusion policy. A
    side with no months gets ``None`` in every row.

    Both month counts (strike months and calendar months) are reported so
    that the two readings of the corpus period can be compared.
    """
    cutoff_idx = parse_month(cutoff)
    if cutoff_idx != panel.cutoff_index:
        raise ConfigError(
            f"panel was built for cutoff {format_month(panel.cutoff_index)}, "
            f"not {format_month(cutoff_idx)}"
        )
    pre_obs = [o for o in panel.observations if not o.treated]
    post_obs = [o for o in panel.observations if o.treated]
    pre, post = _side_stats(pre_obs), _side_stats(post_obs)
    rows = tuple(
        SummaryRow(sec, stat, None if pre is None else pre[(sec, stat)], None if post is None else post[(sec, stat)])
        for sec, stat in SUMMARY_LAYOUT
    )

    strike_months = sorted({r.month for r in records})
    sm_pre = sum(m < cutoff_idx for m in strike_months)
    if strike_months:
        first, last = strike_months[0], strike_months[-1]
        cal_pre = max(0, min(cutoff_idx, last + 1) - first)
        cal_post = max(0, last + 1 - max(cutoff_idx, first))
    else:
        cal_pre = cal_post = 0
    return SummaryTable(
        cutoff=format_month(cutoff_idx),
        rows=rows,
        months_pre=len(pre_obs),
        months_post=len(post_obs),
        strike_months_pre=sm_pre,
        strike_months_post=len(strike_months) - sm_pre,
        calendar_months_pre=cal_pre,
        calendar_months_post=cal_post,
    )


# --------------------------------------------------------------------------
# Synthetic corpus
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters for a reproducible fake strike corpus.

    ``pre_mean`` and ``post_mean`` are monthly civilian totals; each month
    draws ``1..max_strikes_per_month`` strikes and splits the month's total
    among them. ``pre_slope``/``post_slope`` add a linear trend in event
    time on each side.
    """

    n_months: int
    cutoff_offset: int
    pre_mean: float
    post_mean: float
    noise_sd: float = 0.0
    seed: int = 0
    start: str = "2005-01"
    max_strikes_per_month: int = 3
    combatant_mean: float = 4.0
    pre_slope: float = 0.0
    post_slope: float = 0.0

    @property
    def cutoff(self) -> str:
        return format_month(parse_month(self.start) + self.cutoff_offset)


def generate_synthetic_corpus(config: SyntheticConfig) -> list[StrikeRecord]:
    """Deterministic strike corpus with a known monthly civilian step."""
    c = config
    if c.n_months < 4:
        raise ConfigError("n_months must be at least 4")
    if not 0 < c.cutoff_offset < c.n_months:
        raise ConfigError("cutoff_offset must fall strictly inside the month span")
    if c.pre_mean < 0 or c.post_mean < 0 or c.noise_sd < 0 or c.combatant_mean < 0:
        raise ConfigError("means and noise_sd must be nonnegative")
    if c.max_strikes_per_month < 1:
        raise ConfigError("max_strikes_per_month must be at least 1")

    rng = np.random.default_rng(c.seed)
    start = parse_month(c.start)
    records: list[StrikeRecord] = []
    for k in range(c.n_months):
        et = k - c.cutoff_offset
        base = (c.pre_mean + c.pre_slope * et) if et < 0 else (c.post_mean + c.post_slope * et)
        target = base + (rng.normal(0.0, c.noise_sd) if c.noise_sd > 0 else 0.0)
        target = max(0.0, target)
        n_strikes = int(rng.integers(1, c.max_strikes_per_month + 1))
        weights = rng.dirichlet(np.ones(n_strikes))
        # integer shares for all but the last strike keep noiseless sums exact
        shares = [float(math.floor(target * w)) for w in weights[:-1]]
        shares.append(target - sum(shares))
        days = sorted(int(d) for d in rng.integers(1, 29, size=n_strikes))
        year, month = index_to_ym(start + k)
        for j, (civ, day) in enumerate(zip(shares, days)):
            comb = float(rng.poisson(c.combatant_mean))
            extra = float(rng.integers(0, 3))
            child = float(math.floor(civ / 4))
            records.append(
                StrikeRecord(
                    strike_id=f"SYN-{k:04d}-{j}",
                    date=dt.date(year, month, day),
                    civ_min=civ,
                    civ_max=civ,
                    child_min=child,
                    child_max=child,
                    total_min=civ + comb,
                    total_max=civ + comb + extra,
                    location="synthetic",
                )
            )
    return records
