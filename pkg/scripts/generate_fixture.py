"""Regenerate the bundled synthetic quote fixture.

Two markets (DE power, TTF gas) share two stochastic factors. A monthly
curve spanning Jan-2021..Dec-2022 evolves daily: each month bucket moves
with the volatility row of its current time-to-delivery bucket (Samuelson
decay across 24 buckets), months in delivery are frozen. Every trading
day quotes M0..M3, the next two quarters and the next calendar year as
day-count-weighted averages of that one underlying curve, so the quote
hierarchy is consistent by construction and the bootstrap reproduces it
exactly.

Usage: python3 scripts/generate_fixture.py [out_csv]
"""

import csv
import math
import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np

SEED = 42
DT = 1.0 / 252.0
FIRST_MONTH = date(2021, 1, 1)
N_MONTHS = 24
START = date(2021, 1, 4)
END = date(2021, 6, 30)

MARKETS = ("DE", "TTF")
BASE_LEVEL = {"DE": 50.0, "TTF": 20.0}
SEASON_AMP = {"DE": 8.0, "TTF": 5.0}


def add_months(d: date, n: int) -> date:
    k = (d.year * 12 + d.month - 1) + n
    return date(k // 12, k % 12 + 1, 1)


def month_end(m: date) -> date:
    return add_months(m, 1) - timedelta(days=1)


def days_in(m: date) -> int:
    return (add_months(m, 1) - m).days


def vol_row(market: str, bucket: int) -> np.ndarray:
    """Two-factor loading with exponential maturity decay, market-specific mix."""
    tau = (bucket - 0.5) / 12.0
    if market == "DE":
        return np.array([0.55 * math.exp(-1.4 * tau) + 0.10, 0.18 * math.exp(-0.5 * tau)])
    return np.array([0.38 * math.exp(-1.1 * tau) + 0.08, -0.22 * math.exp(-0.7 * tau)])


def initial_curve(market: str) -> np.ndarray:
    months = [add_months(FIRST_MONTH, i) for i in range(N_MONTHS)]
    return np.array(
        [
            BASE_LEVEL[market]
            + SEASON_AMP[market] * math.cos(2 * math.pi * (m.month - 1) / 12.0)
            for m in months
        ]
    )


def weekdays(start: date, end: date):
    d = start
    while d <= end:
        if d.weekday() < 5:
            yield d
        d += timedelta(days=1)


def quote_windows(d: date):
    """Product windows quoted on trading date d: M0..M3, Q1..Q2, Y1."""
    cur = date(d.year, d.month, 1)
    wins = [(add_months(cur, h), add_months(cur, h)) for h in range(4)]
    q0 = date(d.year, 3 * ((d.month - 1) // 3) + 1, 1)
    for h in (1, 2):
        qs = add_months(q0, 3 * h)
        wins.append((qs, add_months(qs, 2)))
    ys = date(d.year + 1, 1, 1)
    wins.append((ys, add_months(ys, 11)))
    return wins


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("fixtures/quotes_synthetic.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    months = [add_months(FIRST_MONTH, i) for i in range(N_MONTHS)]
    curve = {mk: initial_curve(mk) for mk in MARKETS}
    sqrt_dt = math.sqrt(DT)

    rows = []
    prev = None
    for d in weekdays(START, END):
        if prev is not None:
            z = rng.standard_normal(2)
            for mk in MARKETS:
                for i, m in enumerate(months):
                    ahead = (m.year * 12 + m.month) - (d.year * 12 + d.month)
                    if ahead < 1:
                        continue  # in or past delivery: frozen
                    row = vol_row(mk, min(ahead, N_MONTHS))
                    shock = float(row @ z) * sqrt_dt
                    curve[mk][i] *= math.exp(-0.5 * float(row @ row) * DT + shock)
        prev = d
        month_index = {m: i for i, m in enumerate(months)}
        for mk in MARKETS:
            for ws, we in quote_windows(d):
                span = []
                m = ws
                while m <= we:
                    span.append(m)
                    m = add_months(m, 1)
                if any(m not in month_index for m in span):
                    continue
                w = np.array([days_in(m) for m in span], dtype=float)
                v = np.array([curve[mk][month_index[m]] for m in span])
                price = float(np.dot(w, v) / w.sum())
                rows.append(
                    [
                        d.isoformat(),
                        mk,
                        ws.isoformat(),
                        month_end(we).isoformat(),
                        format(price, ".12g"),
                    ]
                )

    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trading_date", "market", "delivery_start", "delivery_end", "price"])
        writer.writerows(rows)
    print(f"wrote {out} ({len(rows)} quotes)")


if __name__ == "__main__":
    main()
