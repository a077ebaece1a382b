"""Exact Monte Carlo of forwards, swaps, curve shocks and spot.

All dynamics are driftless lognormals under the pricing measure: each
product's log price over a step is Gaussian with variance given by the
volatility term structure integrated over the step, and mean minus half
that variance. Paths therefore have no time-discretization error; the step
size only matters through how bucket boundaries are rounded inside a step
(a step straddling a boundary splits its variance proportionally to the
time spent in each bucket).

Four generators cover the product families:

* simulate_fixed_delivery: products with a frozen volatility row for their
  whole life, stopping at their own delivery.
* simulate_short_horizon: every bucket of one market's curve shocked with
  its own frozen row over a horizon inside the front bucket.
* simulate_swap: one traded swap whose active row is the bucket containing
  its current time to delivery; also accepts a parametric term-structure
  volatility with closed-form step integrals.
* simulate_spot: the delivery-time limit of the surface, where each past
  shock is re-weighted by the bucket its age has grown into.

Determinism: the seed fully determines every path. Draws come from one
seeded generator consumed path-major, then step, then factor; the
antithetic flag pairs each even path with an odd path using negated draws.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .calibration import FactorModel
from .errors import SimulationError, ValidationError
from .marketdata import LogReturnMatrix

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class SimConfig:
    """Reproducibility contract of one simulation run.

    ``step`` and ``horizon`` are year fractions; the time grid is
    step * (0..n_steps) with n_steps = ceil(horizon / step).
    """

    seed: int
    n_paths: int
    step: float
    horizon: float
    antithetic: bool = False

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer")
        if not 0 <= self.seed <= _U64_MAX:
            raise ValidationError("seed must fit in 64 bits")
        if self.n_paths < 1:
            raise ValidationError("n_paths must be positive")
        if self.antithetic and self.n_paths % 2:
            raise ValidationError("antithetic pairing needs an even path count")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValidationError("step must be positive")
        if self.horizon < self.step:
            raise ValidationError("horizon must cover at least one step")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon / self.step - 1e-9))

    @property
    def time_grid(self) -> np.ndarray:
        return self.step * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class ContractDescriptor:
    """What a simulated column is: fixed-delivery bucket, swap or spot."""

    kind: str
    market: str
    bucket: int | None = None
    tau_start: float | None = None
    tau_end: float | None = None

    def __post_init__(self):
        if self.kind not in ("fixed_delivery", "swap", "spot"):
            raise ValidationError(f"unknown contract kind {self.kind!r}")
        if self.kind == "fixed_delivery" and (self.bucket is None or self.bucket < 1):
            raise ValidationError("fixed_delivery needs a bucket >= 1")
        if self.kind == "swap":
            if self.tau_start is None or self.tau_start <= 0:
                raise ValidationError("swap needs tau_start > 0")
            if self.tau_end is not None and self.tau_end < self.tau_start:
                raise ValidationError("swap tau_end precedes tau_start")

    @property
    def label(self) -> str:
        if self.kind == "fixed_delivery":
            return f"{self.market}:M{self.bucket}"
        if self.kind == "swap":
            end = "" if self.tau_end is None else f":{self.tau_end:.6g}"
            return f"{self.market}:swap:{self.tau_start:.6g}{end}"
        return f"{self.market}:spot"


@dataclass
class PathSet:
    """Simulated values, path x time x product, plus full provenance."""

    values: np.ndarray
    time_grid: np.ndarray
    product_keys: list[ContractDescriptor]
    config: SimConfig

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        expect = (self.config.n_paths, self.time_grid.size, len(self.product_keys))
        if self.values.shape != expect:
            raise ValidationError(f"path array {self.values.shape} != {expect}")
        if self.time_grid[0] != 0.0 or np.any(np.diff(self.time_grid) <= 0):
            raise ValidationError("time grid must start at 0 and increase")
        if not np.isfinite(self.values).all() or np.any(self.values <= 0):
            raise ValidationError("path values must be positive and finite")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def product(self, label: str) -> np.ndarray:
        for i, key in enumerate(self.product_keys):
            if key.label == label:
                return self.values[:, :, i]
        raise ValidationError(f"no product labelled {label!r}")


def normals(cfg: SimConfig, n_steps: int, n_factors: int) -> np.ndarray:
    """Standard normal draws (n_paths, n_steps, n_factors).

    One generator seeded by cfg.seed, consumed in C order, so the draw for
    (path, step, factor) never depends on how many products are simulated.
    With antithetic pairing, path 2i+1 uses the negated draws of path 2i.
    """
    rng = np.random.default_rng(cfg.seed)
    if cfg.antithetic:
        half = rng.standard_normal((cfg.n_paths // 2, n_steps, n_factors))
        z = np.empty((cfg.n_paths, n_steps, n_factors))
        z[0::2] = half
        z[1::2] = -half
        return z
    return rng.standard_normal((cfg.n_paths, n_steps, n_factors))


def bucket_occupancy(u_lo: float, u_hi: float, n_buckets: int, width: float) -> np.ndarray:
    """Time the interval (u_lo, u_hi] of maturities spends in each bucket.

    Buckets are ((i-1)w, iw] for i = 1..n; the last bucket extends to
    infinity (flat extrapolation past the calibrated grid) and maturities
    at or below zero carry no volatility.
    """
    occ = np.zeros(n_buckets)
    lo, hi = max(u_lo, 0.0), max(u_hi, 0.0)
    if hi <= lo:
        return occ
    for i in range(n_buckets):
        a = i * width
        b = (i + 1) * width if i < n_buckets - 1 else math.inf
        occ[i] = max(0.0, min(hi, b) - max(lo, a))
    return occ


class ExponentialVol:
    """Two-factor parametric term volatility: gamma * e^(-2k u) plus a constant.

    ``u`` is time to delivery. Step variances integrate in closed form,
    which keeps simulations exact at any step size:

        Var[ln F(t)] = gamma^2/(4k) * (e^(-4k(tau-t)) - e^(-4k(tau-t0)))
                       + c^2 (t - t0).
    """

    def __init__(self, gamma: float, k: float, constant: float = 0.0):
        if gamma < 0 or constant < 0 or k < 0:
            raise ValidationError("volatility parameters must be non-negative")
        if gamma == 0 and constant == 0:
            raise ValidationError("volatility is identically zero")
        self.gamma = float(gamma)
        self.k = float(k)
        self.constant = float(constant)

    def variance_between(self, tau: float, s0: float, s1: float) -> float:
        """Integrated squared volatility of a swap maturing at tau over [s0, s1]."""
        s1 = min(s1, tau)
        s0 = min(s0, tau)
        if s1 <= s0:
            return 0.0
        base = self.constant**2 * (s1 - s0)
        if self.gamma == 0:
            return base
        if self.k == 0:
            return base + self.gamma**2 * (s1 - s0)
        g, k = self.gamma, self.k
        return base + g * g / (4 * k) * (
            math.exp(-4 * k * (tau - s1)) - math.exp(-4 * k * (tau - s0))
        )


def _rows_for(model: FactorModel, products: Sequence[tuple[str, int]]) -> np.ndarray:
    return np.vstack([model.row(mk, b) for mk, b in products])


def _check_initial(initial, n: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(initial, dtype=float))
    if arr.size != n:
        raise ValidationError(f"initial prices: expected {n} values, got {arr.size}")
    if not np.isfinite(arr).all() or np.any(arr <= 0):
        raise ValidationError("initial prices must be positive and finite")
    return arr


def _constant_row_paths(
    rows: np.ndarray,
    initial: np.ndarray,
    cfg: SimConfig,
    stops: np.ndarray | None,
    keys: list[ContractDescriptor],
) -> PathSet:
    """Shared engine for products whose volatility row never changes."""
    grid = cfg.time_grid
    n_steps, n_prod = cfg.n_steps, rows.shape[0]
    # live[k, n]: time product n actually diffuses during step k
    if stops is None:
        live = np.tile(np.diff(grid)[:, None], (1, n_prod))
    else:
        lo = np.minimum(grid[:-1, None], stops[None, :])
        hi = np.minimum(grid[1:, None], stops[None, :])
        live = np.maximum(hi - lo, 0.0)
    z = normals(cfg, n_steps, rows.shape[1])
    shocks = np.einsum("pkj,nj->pkn", z, rows) * np.sqrt(live)[None, :, :]
    drift = -0.5 * (rows**2).sum(axis=1)[None, :] * live
    log_paths = np.cumsum(drift[None, :, :] + shocks, axis=1)
    values = np.empty((cfg.n_paths, n_steps + 1, n_prod))
    values[:, 0, :] = initial[None, :]
    values[:, 1:, :] = initial[None, None, :] * np.exp(log_paths)
    return PathSet(values, grid, keys, cfg)


def simulate_fixed_delivery(
    model: FactorModel,
    initial,
    cfg: SimConfig,
    products: Sequence[tuple[str, int]] | None = None,
) -> PathSet:
    """Paths of fixed-delivery products, one martingale per model row.

    ``products`` lists (market, bucket) pairs, defaulting to every row of
    the model; ``initial`` aligns with it. Each product diffuses with its
    own frozen row until its delivery at bucket * bucket_width and is flat
    afterwards.
    """
    if products is None:
        products = [
            (mk, b)
            for mk in model.markets
            for b in range(1, model.buckets_per_market + 1)
        ]
    products = list(products)
    rows = _rows_for(model, products)
    initial = _check_initial(initial, len(products))
    stops = np.array([b * model.bucket_width for _, b in products])
    keys = [ContractDescriptor("fixed_delivery", mk, bucket=b) for mk, b in products]
    return _constant_row_paths(rows, initial, cfg, stops, keys)


def simulate_short_horizon(
    model: FactorModel, market: str, initial, cfg: SimConfig
) -> PathSet:
    """Whole-curve shock: all buckets of one market over a short horizon.

    Every bucket evolves with its own frozen row. The horizon must stay
    inside the front bucket so no product reaches its own delivery.
    """
    if cfg.horizon > model.bucket_width + 1e-12:
        raise ValidationError(
            "short-horizon simulation requires horizon <= one bucket width; "
            "use simulate_fixed_delivery for longer runs"
        )
    products = [(market, b) for b in range(1, model.buckets_per_market + 1)]
    rows = _rows_for(model, products)
    initial = _check_initial(initial, len(products))
    keys = [ContractDescriptor("fixed_delivery", market, bucket=b) for _, b in products]
    return _constant_row_paths(rows, initial, cfg, None, keys)


def _swap_step_variances(model, contract: ContractDescriptor, grid: np.ndarray) -> np.ndarray:
    tau = contract.tau_start
    out = np.empty(grid.size - 1)
    if isinstance(model, FactorModel):
        block = model.market_block(contract.market)
        norms2 = (block**2).sum(axis=1)
        for k in range(out.size):
            occ = bucket_occupancy(
                tau - grid[k + 1], tau - grid[k], model.buckets_per_market, model.bucket_width
            )
            out[k] = float(norms2 @ occ)
    else:
        for k in range(out.size):
            out[k] = model.variance_between(tau, grid[k], grid[k + 1])
    return out


def simulate_swap(
    model: FactorModel | ExponentialVol,
    contract: ContractDescriptor,
    initial: float,
    cfg: SimConfig,
) -> PathSet:
    """Paths of one traded swap up to its delivery start.

    With a FactorModel the active volatility row is the bucket containing
    the current time to delivery; a step straddling a bucket boundary
    splits its variance proportionally. With a parametric volatility the
    step variance is its exact integral. The path freezes at tau_start.
    """
    if contract.kind != "swap":
        raise ValidationError("simulate_swap expects a swap descriptor")
    initial = _check_initial(initial, 1)
    grid = cfg.time_grid
    v = _swap_step_variances(model, contract, grid)
    z = normals(cfg, cfg.n_steps, 1)[:, :, 0]
    increments = -0.5 * v[None, :] + np.sqrt(v)[None, :] * z
    values = np.empty((cfg.n_paths, grid.size, 1))
    values[:, 0, 0] = initial[0]
    values[:, 1:, 0] = initial[0] * np.exp(np.cumsum(increments, axis=1))
    return PathSet(values, grid, [contract], cfg)


def _spot_lag_vols(model: FactorModel, market: str, n_steps: int, step: float) -> np.ndarray:
    """c[j, q]: factor-j volatility applied to a shock of age in (q, q+1] steps."""
    block = model.market_block(market)  # (M, Nf)
    m = model.buckets_per_market
    c2 = np.empty((block.shape[1], n_steps))
    for q in range(n_steps):
        frac = bucket_occupancy(q * step, (q + 1) * step, m, model.bucket_width) / step
        c2[:, q] = (block**2).T @ frac
    return np.sqrt(c2)


def simulate_spot(
    model: FactorModel,
    curves: Mapping[str, Sequence[float] | Callable[[float], float]],
    cfg: SimConfig,
    markets: Sequence[str] | None = None,
) -> PathSet:
    """Joint spot paths for several markets driven by the shared factors.

    ``curves[market]`` supplies the initial expectation F(0, t) on the time
    grid, either as an array over the grid or a callable of the year
    fraction. Each Brownian shock enters with the front-bucket volatility
    and is re-weighted through longer buckets as it ages, so the spot keeps
    the whole term structure's covariance with the forwards. The marginal
    law at every grid point is exact; E[S(t)] = F(0, t).
    """
    markets = list(markets) if markets is not None else list(model.markets)
    grid = cfg.time_grid
    n = cfg.n_steps
    fwd = {}
    for mk in markets:
        src = curves.get(mk)
        if src is None:
            raise ValidationError(f"no initial curve for market {mk!r}")
        arr = (
            np.array([float(src(t)) for t in grid])
            if callable(src)
            else np.asarray(src, dtype=float)
        )
        if arr.size != grid.size:
            raise ValidationError(
                f"curve for {mk!r} must cover all {grid.size} grid dates"
            )
        if not np.isfinite(arr).all() or np.any(arr <= 0):
            raise ValidationError(f"curve for {mk!r} has gaps or non-positive values")
        fwd[mk] = arr

    z = normals(cfg, n, model.n_factors)
    sqrt_dt = math.sqrt(cfg.step)
    values = np.empty((cfg.n_paths, n + 1, len(markets)))
    keys = []
    for ki, mk in enumerate(markets):
        c = _spot_lag_vols(model, mk, n, cfg.step)  # (Nf, n)
        var = np.concatenate(([0.0], np.cumsum((c**2).sum(axis=0) * cfg.step)))
        changes = [
            (q, (c[:, q] - c[:, q - 1]) * sqrt_dt)
            for q in range(1, n)
            if not np.allclose(c[:, q], c[:, q - 1], rtol=0.0, atol=1e-15)
        ]
        front = c[:, 0] * sqrt_dt
        x = np.zeros(cfg.n_paths)
        values[:, 0, ki] = fwd[mk][0]
        for m in range(n):
            x = x + z[:, m, :] @ front
            for q, dc in changes:
                if q <= m:
                    x = x + z[:, m - q, :] @ dc
            values[:, m + 1, ki] = fwd[mk][m + 1] * np.exp(-0.5 * var[m + 1] + x)
        keys.append(ContractDescriptor("spot", mk))
    return PathSet(values, grid, keys, cfg)


def theoretical_log_variance(
    model: FactorModel | ExponentialVol,
    contract: ContractDescriptor,
    t: float,
    t0: float = 0.0,
) -> float:
    """Exact Var[ln F(t)] implied by the volatility structure.

    Fixed-delivery products integrate a frozen row; swaps and spot sum
    squared row norms against the time each bucket was occupied. The same
    occupancy convention as the simulators is used, so simulated and
    theoretical variances agree to Monte Carlo error at any step size.
    """
    if t < t0:
        raise ValidationError("t must not precede t0")
    if not isinstance(model, FactorModel):
        if contract.kind != "swap":
            raise ValidationError("parametric volatility prices swaps only")
        return model.variance_between(contract.tau_start, t0, t)
    if contract.kind == "fixed_delivery":
        row = model.row(contract.market, contract.bucket)
        t_eff = min(t, contract.bucket * model.bucket_width)
        return float((row**2).sum() * max(t_eff - t0, 0.0))
    if contract.kind == "swap":
        tau = contract.tau_start
        t_eff = min(t, tau)
        occ = bucket_occupancy(
            tau - t_eff, tau - t0, model.buckets_per_market, model.bucket_width
        )
    else:  # spot
        occ = bucket_occupancy(0.0, t - t0, model.buckets_per_market, model.bucket_width)
    block = model.market_block(contract.market)
    return float((block**2).sum(axis=1) @ occ)


def path_log_returns(paths: PathSet) -> LogReturnMatrix:
    """Stack per-step log returns of all paths into one return matrix.

    Rows are path-major (all steps of path 0, then path 1, ...);
    columns follow the product order. Useful for re-estimating the
    covariance a path set was generated from.
    """
    vals = paths.values
    rets = np.log(vals[:, 1:, :] / vals[:, :-1, :])
    stacked = rets.reshape(-1, vals.shape[2])
    keys = []
    for d in paths.product_keys:
        tenor = f"M{d.bucket}" if d.kind == "fixed_delivery" else d.label
        keys.append((d.market, tenor))
    return LogReturnMatrix(stacked, keys, paths.config.step)


# ---------------------------------------------------------------------------
# Sanity checking
# ---------------------------------------------------------------------------


@dataclass
class SanityReport:
    """Empirical-versus-theoretical comparison of a path set."""

    times: np.ndarray
    empirical_variance: np.ndarray  # (n_times, n_products)
    theoretical_variance: np.ndarray
    empirical_mean: np.ndarray
    initial: np.ndarray
    mean_se: np.ndarray
    empirical_correlation: np.ndarray | None
    model_correlation: np.ndarray | None
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def sanity_check(
    paths: PathSet,
    model: FactorModel | ExponentialVol,
    z_tol: float = 4.0,
    expected_mean: np.ndarray | None = None,
) -> SanityReport:
    """Check martingale means, log variances and return correlations.

    Variance and mean comparisons run per product and grid time with a
    z_tol-standard-error tolerance. The correlation check compares pooled
    step log returns against the model-implied correlation and runs only
    when every product carries a constant row (fixed-delivery sets).

    Forwards and swaps are martingales, so means default to the initial
    value. Spot paths are not: their mean follows the initial curve, which
    the caller must supply as ``expected_mean`` over the full time grid,
    shaped (grid size, n_products).
    """
    vals = paths.values
    n_paths = paths.n_paths
    times = paths.time_grid[1:]
    logs = np.log(vals[:, 1:, :] / vals[:, :1, :])
    emp_var = logs.var(axis=0, ddof=1)
    emp_mean = vals[:, 1:, :].mean(axis=0)
    mean_se = vals[:, 1:, :].std(axis=0, ddof=1) / math.sqrt(n_paths)
    initial = vals[0, 0, :].copy()
    theo = np.empty_like(emp_var)
    for j, d in enumerate(paths.product_keys):
        for i, t in enumerate(times):
            theo[i, j] = theoretical_log_variance(model, d, float(t))

    failures: list[str] = []
    var_se = theo * math.sqrt(2.0 / max(n_paths - 1, 1))
    bad = np.abs(emp_var - theo) > z_tol * var_se + 1e-14
    for i, j in zip(*np.nonzero(bad)):
        failures.append(
            f"variance breach {paths.product_keys[j].label} at t={times[i]:.6g}: "
            f"empirical {emp_var[i, j]:.6g} vs theoretical {theo[i, j]:.6g}"
        )
    if expected_mean is None:
        target = np.broadcast_to(initial[None, :], emp_mean.shape)
        kind = "martingale breach"
    else:
        target = np.asarray(expected_mean, dtype=float)
        if target.shape != vals.shape[1:]:
            raise ValidationError(
                f"expected_mean shape {target.shape} != {vals.shape[1:]}"
            )
        target = target[1:]
        kind = "mean breach"
    bad = np.abs(emp_mean - target) > z_tol * mean_se + 1e-12
    for i, j in zip(*np.nonzero(bad)):
        failures.append(
            f"{kind} {paths.product_keys[j].label} at t={times[i]:.6g}: "
            f"mean {emp_mean[i, j]:.6g} vs expected {target[i, j]:.6g}"
        )

    emp_corr = model_corr = None
    if (
        isinstance(model, FactorModel)
        and len(paths.product_keys) > 1
        and all(d.kind == "fixed_delivery" for d in paths.product_keys)
    ):
        stops = np.array([d.bucket * model.bucket_width for d in paths.product_keys])
        live = paths.time_grid[1:] <= stops.min() + 1e-12
        if live.sum() >= 1:
            rets = np.log(vals[:, 1:, :][:, live, :] / vals[:, :-1, :][:, live, :])
            flat = rets.reshape(-1, rets.shape[2])
            emp_corr = np.corrcoef(flat.T)
            rows = np.vstack([model.row(d.market, d.bucket) for d in paths.product_keys])
            cov = rows @ rows.T
            dd = np.sqrt(np.diag(cov))
            model_corr = cov / np.outer(dd, dd)
            n_samp = flat.shape[0]
            tol = np.maximum(z_tol * (1 - model_corr**2) / math.sqrt(n_samp), 1e-3)
            bad = np.abs(emp_corr - model_corr) > tol
            for a, b in zip(*np.nonzero(np.triu(bad, 1))):
                failures.append(
                    f"correlation breach {paths.product_keys[a].label} vs "
                    f"{paths.product_keys[b].label}: empirical {emp_corr[a, b]:.4f} "
                    f"vs model {model_corr[a, b]:.4f}"
                )

    return SanityReport(
        times,
        emp_var,
        theo,
        emp_mean,
        initial,
        mean_se,
        emp_corr,
        model_corr,
        failures,
    )


def require_sane(report: SanityReport) -> None:
    if not report.passed:
        raise SimulationError(
            "simulation sanity check failed:\n  " + "\n  ".join(report.failures)
        )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def write_paths_csv(paths: PathSet, path, max_paths: int | None = None) -> None:
    """Long format, one row per (path, time, product)."""
    limit = paths.n_paths if max_paths is None else min(max_paths, paths.n_paths)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path_id", "time", "product_key", "value"])
        for p in range(limit):
            for i, t in enumerate(paths.time_grid):
                for j, key in enumerate(paths.product_keys):
                    writer.writerow(
                        [p, format(t, ".10g"), key.label, format(paths.values[p, i, j], ".10g")]
                    )


def write_summary_csv(paths: PathSet, path) -> None:
    """Mean and 5/95 percent quantiles per product and grid time."""
    mean = paths.values.mean(axis=0)
    q05 = np.quantile(paths.values, 0.05, axis=0)
    q95 = np.quantile(paths.values, 0.95, axis=0)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "product_key", "mean", "q05", "q95"])
        for i, t in enumerate(paths.time_grid):
            for j, key in enumerate(paths.product_keys):
                writer.writerow(
                    [
                        format(t, ".10g"),
                        key.label,
                        format(mean[i, j], ".10g"),
                        format(q05[i, j], ".10g"),
                        format(q95[i, j], ".10g"),
                    ]
                )
