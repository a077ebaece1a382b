"""Shared test data: the published 4-bucket toy calibration, the example
quote board, deterministic path builders and a generator of random but
internally consistent quote systems.
"""

import io
from datetime import date, timedelta

import numpy as np
import pytest

from hjmkit.dates import add_months
from hjmkit.marketdata import QuotedSwap, parse_quotes
from hjmkit.simulation import ContractDescriptor, PathSet, SimConfig

# ---------------------------------------------------------------------------
# Published toy calibration: 4 relative monthly buckets, daily returns.
# TOY_SIGMA rows are buckets, columns factors; TOY_COV is the daily return
# covariance it reproduces, TOY_COV_2F its rank-2 truncation, TOY_RHO /
# TOY_RHO_STAR the corresponding correlation matrices.
# ---------------------------------------------------------------------------

TOY_DT = 1.0 / 260.0

TOY_SIGMA = np.array(
    [
        [0.150, 0.019, -0.130, 0.018],
        [0.250, 0.014, -0.190, 0.015],
        [0.185, 0.012, -0.130, 0.018],
        [0.125, 0.044, -0.131, 0.043],
    ]
)

TOY_LAMBDA = np.array([0.8325, 0.0107, 0.0005, 0.0000]) * 1e-3

TOY_RHO = np.array(
    [
        [1.00, 0.99, 0.99, 0.98],
        [0.99, 1.00, 0.99, 0.95],
        [0.99, 0.99, 1.00, 0.95],
        [0.98, 0.95, 0.95, 1.00],
    ]
)

TOY_RHO_STAR = np.array(
    [
        [1.00, 0.99, 0.99, 0.97],
        [0.99, 1.00, 0.99, 0.95],
        [0.99, 0.99, 1.00, 0.95],
        [0.97, 0.95, 0.95, 1.00],
    ]
)

TOY_COV = np.array(
    [
        [1.4859, 2.3309, 1.6781, 1.3756],
        [2.3309, 3.6897, 2.6580, 2.1138],
        [1.6781, 2.6580, 1.9197, 1.5256],
        [1.3756, 2.1138, 1.5256, 1.3405],
    ]
) * 1e-4

TOY_COV_2F = np.array(
    [
        [1.4846, 2.3302, 1.6800, 1.3760],
        [2.3302, 3.6892, 2.6592, 2.1140],
        [1.6800, 2.6592, 1.9169, 1.5250],
        [1.3760, 2.1140, 1.5250, 1.3404],
    ]
) * 1e-4


# ---------------------------------------------------------------------------
# Example quote board: one trading date, eight nested DE power quotes
# (front months, the remaining quarters, two calendar years).
# ---------------------------------------------------------------------------

QUOTE_BOARD_CSV = """trading_date,market,delivery_start,delivery_end,price
2020-01-02,DE,2020-01-01,2020-01-31,36.05
2020-01-02,DE,2020-02-01,2020-02-29,39.76
2020-01-02,DE,2020-03-01,2020-03-31,37.15
2020-01-02,DE,2020-04-01,2020-06-30,35.50
2020-01-02,DE,2020-07-01,2020-09-30,39.05
2020-01-02,DE,2020-10-01,2020-12-31,45.30
2020-01-02,DE,2021-01-01,2021-12-31,43.85
2020-01-02,DE,2022-01-01,2022-12-31,46.55
"""

QUOTE_BOARD_PRICES = {
    "M0": 36.05,
    "M1": 39.76,
    "M2": 37.15,
    "Q2": 35.50,
    "Q3": 39.05,
    "Q4": 45.30,
    "Y1": 43.85,
    "Y2": 46.55,
}


@pytest.fixture(scope="session")
def quote_board():
    quotes, issues = parse_quotes(io.StringIO(QUOTE_BOARD_CSV))
    assert not issues
    return quotes


# ---------------------------------------------------------------------------
# Deterministic path sets for the dynamic-programming pricers. The price
# tree branches so that every step shows distinct prices per information
# class, which lets a polynomial regression hit the class means exactly.
# ---------------------------------------------------------------------------

PRICE_TREE = np.array(
    [
        [100.0, 120.0, 140.0],
        [100.0, 120.0, 110.0],
        [100.0, 80.0, 90.0],
        [100.0, 80.0, 60.0],
    ]
)

STORAGE_TERMINAL_COL = np.array([145.0, 105.0, 95.0, 55.0])


def storage_tree():
    return np.column_stack([PRICE_TREE, STORAGE_TERMINAL_COL])


def make_paths(values, step=1.0, seed=123, antithetic=False, market="X"):
    """Wrap a (paths, times) or (paths, times, products) array as a PathSet."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    n_paths, n_times, n_prod = arr.shape
    cfg = SimConfig(
        seed=seed,
        n_paths=n_paths,
        step=step,
        horizon=step * (n_times - 1),
        antithetic=antithetic,
    )
    keys = [
        ContractDescriptor("spot", market if n_prod == 1 else f"{market}{i}")
        for i in range(n_prod)
    ]
    return PathSet(arr, cfg.time_grid, keys, cfg)


# ---------------------------------------------------------------------------
# Random nested quote systems. All quotes are day-weighted averages of one
# latent monthly curve, so the hierarchy is consistent by construction and
# an exact bootstrap must reproduce every quote. One quarter is always
# quoted together with all three of its months so that every instance
# exercises granularity dominance.
# ---------------------------------------------------------------------------


def random_quote_system(rng):
    first = date(2019 + int(rng.integers(0, 4)), int(rng.integers(1, 13)), 1)
    trading = date(first.year, first.month, int(rng.integers(1, 28)))
    n_months = int(rng.integers(15, 37))
    months = [add_months(first, i) for i in range(n_months)]
    latent = 40.0 * np.exp(rng.normal(0.0, 0.3, n_months))
    weights = np.array([(add_months(m, 1) - m).days for m in months], dtype=float)
    index = {m: i for i, m in enumerate(months)}

    def quote(window):
        idx = [index[m] for m in window]
        w = weights[idx]
        price = float(np.dot(w, latent[idx]) / w.sum())
        return QuotedSwap(
            market="DE",
            trading_date=trading,
            delivery_start=window[0],
            delivery_end=add_months(window[-1], 1) - timedelta(days=1),
            price=price,
        )

    quarters = []
    m = months[0]
    while m <= months[-1]:
        if (m.month - 1) % 3 == 0:
            window = [add_months(m, i) for i in range(3)]
            if all(x in index for x in window):
                quarters.append(window)
        m = add_months(m, 1)
    years = []
    for y in range(first.year, months[-1].year + 1):
        window = [date(y, mm, 1) for mm in range(1, 13)]
        if all(x in index for x in window):
            years.append(window)

    quotes = []
    n_front = int(rng.integers(1, 5))
    month_quoted = set(months[:n_front])
    dominated = quarters[int(rng.integers(0, len(quarters)))]
    month_quoted.update(dominated)
    for m in months:
        if rng.random() < 0.15:
            month_quoted.add(m)
    for m in sorted(month_quoted):
        quotes.append(quote([m]))
    for window in quarters:
        if window == dominated or rng.random() < 0.6:
            quotes.append(quote(window))
    for window in years:
        if rng.random() < 0.8:
            quotes.append(quote(window))
    return quotes, dict(zip(months, latent))


# ---------------------------------------------------------------------------
# Acceptance reporting: tests append one PASS/FAIL line per criterion and
# the summary hook prints them after the run.
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
