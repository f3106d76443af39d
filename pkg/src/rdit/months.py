"""Calendar-month arithmetic.

Months are carried internally as ``year * 12 + (month - 1)`` so that event
time is plain integer subtraction. Files only ever see ``YYYY-MM`` strings.
"""

from __future__ import annotations

import datetime as _dt
import re

from .errors import ConfigError

_YM = re.compile(r"^\s*(\d{4})-(\d{1,2})(?:-(\d{1,2}))?\s*$")


def month_index(year: int, month: int) -> int:
    if not 1 <= month <= 12:
        raise ConfigError(f"month out of range: {month}")
    return year * 12 + (month - 1)


def index_to_ym(index: int) -> tuple[int, int]:
    return index // 12, index % 12 + 1


def format_month(index: int) -> str:
    y, m = index_to_ym(index)
    return f"{y:04d}-{m:02d}"


def parse_month(value: str | int | _dt.date) -> int:
    """Parse ``YYYY-MM`` or ``YYYY-MM-DD`` into a month index.

    A day component is accepted and dropped: a cutoff dated mid-month is
    mapped to its calendar month, and that month counts as treated.
    Integers are taken to be month indices already.
    """
    if isinstance(value, int):
        return value
    if isinstance(value, _dt.date):
        return month_index(value.year, value.month)
    m = _YM.match(str(value))
    if not m:
        raise ConfigError(f"not a year-month: {value!r}")
    return month_index(int(m.group(1)), int(m.group(2)))


def date_month(d: _dt.date) -> int:
    return month_index(d.year, d.month)
