"""Calendar-month and trading-day helpers.

All delivery periods in this package are whole calendar months, so the only
date arithmetic needed is month shifting, month spans and day counts.
Trading-day counting treats Monday to Friday as trading days; holiday
calendars are out of scope.
"""

from __future__ import annotations

import calendar
from datetime import date, timedelta

import numpy as np


def month_start(d: date) -> date:
    return d.replace(day=1)


def month_end(d: date) -> date:
    return d.replace(day=calendar.monthrange(d.year, d.month)[1])


def is_month_start(d: date) -> bool:
    return d.day == 1


def is_month_end(d: date) -> bool:
    return d.day == calendar.monthrange(d.year, d.month)[1]


def add_months(d: date, n: int) -> date:
    """Shift a month-start date by n whole months."""
    total = d.year * 12 + (d.month - 1) + n
    return date(total // 12, total % 12 + 1, 1)


def months_between(start: date, end: date) -> int:
    """Whole months from the month of start to the month of end."""
    return (end.year - start.year) * 12 + (end.month - start.month)


def days_in_month(d: date) -> int:
    return calendar.monthrange(d.year, d.month)[1]


def month_span(start: date, end: date) -> int:
    """Number of calendar months in the inclusive window [start, end]."""
    return months_between(start, end) + 1


def quarter_start(d: date) -> date:
    return date(d.year, 3 * ((d.month - 1) // 3) + 1, 1)


def year_start(d: date) -> date:
    return date(d.year, 1, 1)


def add_quarters(d: date, n: int) -> date:
    return add_months(quarter_start(d), 3 * n)


def trading_days_between(start: date, end: date) -> int:
    """Weekday count in [start, end), Monday through Friday."""
    return int(np.busday_count(start.isoformat(), end.isoformat()))


def year_fraction(start: date, end: date, dt: float) -> float:
    """Trading-day-counted year fraction between two dates."""
    return trading_days_between(start, end) * dt


def weekdays(start: date, end: date) -> list[date]:
    """All weekdays in the inclusive range [start, end]."""
    out = []
    d = start
    while d <= end:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out
