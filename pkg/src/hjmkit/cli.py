"""Command-line pipeline: ingest -> curve -> calibrate -> simulate -> price.

Each command reads exactly what the previous one wrote, so a full
`hjmkit pipeline --config run.conf` works from a quotes CSV to valuation
reports without manual edits. Outputs are plain CSV and key=value text
with fixed float formatting; everything a run writes is a deterministic
function of (config, seed). Wall-clock timings go to stdout only so
artifact files stay byte-identical across reruns.

Exit codes: 0 success, 1 input/validation problem, 2 numerical failure
(infeasible quote system, sanity breach, bound violation).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
import time
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .calibration import (
    estimate_covariance,
    pca,
    select_factors,
    build_sigma_star,
    correlation_surface,
    FactorModel,
)
from .curve import StepwiseCurve, bootstrap_monthly_curve, verify_no_arbitrage, write_curve_csv, read_curve_csv
from .dates import add_months, month_start
from .errors import HjmkitError, ValidationError
from .marketdata import (
    LogReturnMatrix,
    acf,
    build_relative_panel,
    combine_log_returns,
    default_tenor_labels,
    filter_outliers,
    log_returns,
    normality_diagnostics,
    parse_quotes,
    parse_tenor,
    read_panel_csv,
    write_panel_csv,
)
from .pricing import (
    LsmcSettings,
    StorageContract,
    SwingContract,
    VppContract,
    price_storage,
    price_swing,
    price_vpp,
)
from .simulation import (
    ContractDescriptor,
    SimConfig,
    sanity_check,
    simulate_fixed_delivery,
    simulate_short_horizon,
    simulate_spot,
    simulate_swap,
    write_paths_csv,
    write_summary_csv,
)
from .errors import SimulationError

_COMMANDS = ("ingest", "curve", "calibrate", "simulate", "price", "pipeline")
_SIM_MODES = ("fixed_delivery", "short_horizon", "swap", "spot")

_DAYS_PER_YEAR = 365.0
_HOURS_PER_YEAR = 365.0 * 24.0


def _fmt(x) -> str:
    return format(float(x), ".10g")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """All tunables of a pipeline run; flat key=value config file."""

    quotes: str = ""
    out: str = "out"
    markets: list[str] = field(default_factory=list)
    n_month_tenors: int = 24
    n_quarter_tenors: int = 7
    n_year_tenors: int = 2
    dt: float = 1.0 / 252.0
    outlier_k: float = 3.0
    threshold: float = 0.99
    factors: int | None = None
    seed: int | None = None
    n_paths: int = 2000
    step: float | None = None
    horizon: float = 1.0
    horizon_days: int | None = None
    antithetic: bool = False
    rate: float = 0.0
    sim_mode: str = "fixed_delivery"
    sim_market: str = ""
    swap_tau: float = 0.25
    export_paths: int = 25
    acf_max_lag: int = 20
    acf_tenor: str = "M1"
    model_file: str = ""
    curve_file: str = ""
    vpp: str = ""
    swing: str = ""
    storage: str = ""

    def validate(self) -> None:
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.outlier_k <= 0:
            raise ValidationError("outlier_k must be positive")
        if not 0 < self.threshold <= 1:
            raise ValidationError("threshold must lie in (0, 1]")
        if self.factors is not None and self.factors < 1:
            raise ValidationError("factors must be at least 1")
        if self.n_paths < 1:
            raise ValidationError("n_paths must be positive")
        if self.step is not None and self.step <= 0:
            raise ValidationError("step must be positive")
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if self.horizon_days is not None and self.horizon_days < 1:
            raise ValidationError("horizon_days must be at least 1")
        if self.rate < 0 or not math.isfinite(self.rate):
            raise ValidationError("rate must be a finite non-negative number")
        if self.sim_mode not in _SIM_MODES:
            raise ValidationError(f"sim_mode must be one of {_SIM_MODES}")
        if self.export_paths < 0:
            raise ValidationError("export_paths must be non-negative")
        if self.acf_max_lag < 1:
            raise ValidationError("acf_max_lag must be at least 1")
        for n in (self.n_month_tenors, self.n_quarter_tenors, self.n_year_tenors):
            if n < 0:
                raise ValidationError("tenor counts must be non-negative")

    # derived paths -------------------------------------------------------
    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def path_model(self) -> Path:
        return Path(self.model_file) if self.model_file else self.out_dir / "model.json"

    def path_curves(self) -> Path:
        return Path(self.curve_file) if self.curve_file else self.out_dir / "curves.csv"

    def path_panel(self, market: str) -> Path:
        return self.out_dir / f"panel_{market}.csv"

    def sim_step(self) -> float:
        return self.step if self.step is not None else self.dt

    def sim_horizon(self) -> float:
        if self.horizon_days is not None:
            return self.horizon_days / _DAYS_PER_YEAR
        return self.horizon

    def need_seed(self) -> int:
        if self.seed is None:
            raise ValidationError("seed is required (no wall-clock default)")
        return self.seed


_BOOLS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_value(key: str, raw: str, kind: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            return _BOOLS[raw.lower()]
        if kind == "list":
            return [p.strip() for p in raw.split(",") if p.strip()]
        return raw
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from exc


_CONFIG_KINDS = {
    "quotes": "str",
    "out": "str",
    "markets": "list",
    "n_month_tenors": "int",
    "n_quarter_tenors": "int",
    "n_year_tenors": "int",
    "dt": "float",
    "outlier_k": "float",
    "threshold": "float",
    "factors": "int",
    "seed": "int",
    "n_paths": "int",
    "step": "float",
    "horizon": "float",
    "horizon_days": "int",
    "antithetic": "bool",
    "rate": "float",
    "sim_mode": "str",
    "sim_market": "str",
    "swap_tau": "float",
    "export_paths": "int",
    "acf_max_lag": "int",
    "acf_tenor": "str",
    "model_file": "str",
    "curve_file": "str",
    "vpp": "str",
    "swing": "str",
    "storage": "str",
}


def _read_flat_config(path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + Path(path).read_text())
    except (configparser.Error, OSError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return dict(parser["run"])


def load_run_config(path=None, **overrides) -> RunConfig:
    data = _read_flat_config(path) if path else {}
    cfg = RunConfig()
    for key, raw in data.items():
        if key not in _CONFIG_KINDS:
            raise ValidationError(f"unknown config key {key!r}")
        setattr(cfg, key, _parse_value(key, raw, _CONFIG_KINDS[key]))
    for key, value in overrides.items():
        if value is not None:
            cfg = replace(cfg, **{key: value})
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _load_quotes(cfg: RunConfig):
    if not cfg.quotes:
        raise ValidationError("config key 'quotes' (input CSV) is required")
    quotes, issues = parse_quotes(cfg.quotes)
    if cfg.markets:
        wanted = set(cfg.markets)
        quotes = [q for q in quotes if q.market in wanted]
        if not quotes:
            raise ValidationError(f"no quotes for requested markets {sorted(wanted)}")
    return quotes, issues


def _bootstrap_all(quotes):
    """(market, date) -> (curve, report), bootstrapped independently."""
    grouped: dict[tuple[str, date], list] = {}
    for q in quotes:
        grouped.setdefault((q.market, q.trading_date), []).append(q)
    out = {}
    for key in sorted(grouped):
        out[key] = bootstrap_monthly_curve(grouped[key])
    return out


def _latest_curves(curves: dict[tuple[str, date], StepwiseCurve]) -> dict[str, StepwiseCurve]:
    latest: dict[str, StepwiseCurve] = {}
    for (market, as_of), curve in curves.items():
        if market not in latest or as_of > latest[market].as_of:
            latest[market] = curve
    return latest


def _curve_month_price(curve: StepwiseCurve, months_ahead: int) -> float:
    month = add_months(month_start(curve.as_of), months_ahead)
    if month not in curve.index:
        raise ValidationError(
            f"curve for {curve.market} as of {curve.as_of} does not cover {month} "
            f"({months_ahead} months ahead); extend the quote horizon"
        )
    return curve.value_at(month)


def _curve_on_grid(curve: StepwiseCurve, grid: np.ndarray) -> np.ndarray:
    """Initial expectation F(0, t) sampled from the monthly curve."""
    out = np.empty(grid.size)
    for i, t in enumerate(grid):
        d = curve.as_of + timedelta(days=int(round(t * _DAYS_PER_YEAR)))
        m = month_start(d)
        if m not in curve.index:
            raise ValidationError(
                f"curve for {curve.market} does not cover {m} needed at t={t:.4g}"
            )
        out[i] = curve.value_at(m)
    return out


def _write_report(path: Path, pairs) -> None:
    with open(path, "w") as fh:
        for key, value in pairs:
            fh.write(f"{key} = {value}\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: RunConfig) -> None:
    quotes, issues = _load_quotes(cfg)
    markets = cfg.markets or sorted({q.market for q in quotes})
    labels = default_tenor_labels(cfg.n_month_tenors, cfg.n_quarter_tenors, cfg.n_year_tenors)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    notes: list[str] = []

    fitted = _bootstrap_all(quotes)
    panels = {}
    for market in markets:
        curves = {d: cv for (mk, d), (cv, _) in fitted.items() if mk == market}
        if not curves:
            raise ValidationError(f"no usable quotes for market {market!r}")
        panel = build_relative_panel(market, curves, labels)
        panels[market] = panel
        write_panel_csv(panel, cfg.path_panel(market))
        print(f"wrote {cfg.path_panel(market)} ({len(panel.dates)} dates)")

    # return-based diagnostics are best-effort: a one-date panel has none
    rets = {}
    for market in markets:
        if len(panels[market].dates) >= 3:
            rets[market] = log_returns(panels[market], cfg.dt)
        else:
            notes.append(f"{market}: too few dates for return diagnostics")

    acf_rows = []
    for market, ret in sorted(rets.items()):
        try:
            series = ret.column(market, cfg.acf_tenor)
        except ValueError:
            notes.append(f"{market}: tenor {cfg.acf_tenor} absent from returns")
            continue
        series = series[np.isfinite(series)]
        max_lag = min(cfg.acf_max_lag, series.size - 2)
        if max_lag < 1:
            notes.append(f"{market}: series too short for autocorrelation")
            continue
        values = acf(series, max_lag)
        acf_rows += [[market, cfg.acf_tenor, lag, _fmt(v)] for lag, v in enumerate(values)]
    _write_csv(cfg.out_dir / "acf.csv", ["market", "tenor", "lag", "acf"], acf_rows)

    moment_rows = []
    for market, ret in sorted(rets.items()):
        for mk, tenor in ret.column_keys:
            col = ret.column(mk, tenor)
            col = col[np.isfinite(col)]
            if col.size < 2 or np.all(col == col[0]):
                continue
            m = normality_diagnostics(col)
            moment_rows.append(
                [mk, tenor, _fmt(m.mean), _fmt(m.std), _fmt(m.skewness), _fmt(m.excess_kurtosis), m.n_obs]
            )
    _write_csv(
        cfg.out_dir / "moments.csv",
        ["market", "tenor", "mean", "std", "skewness", "excess_kurtosis", "n_obs"],
        moment_rows,
    )

    removed_total: dict[tuple[str, str], int] = {}
    if rets:
        combined = combine_log_returns([rets[m] for m in sorted(rets)]) if len(rets) > 1 else rets[sorted(rets)[0]]
        filtered, removed_total = filter_outliers(combined, cfg.outlier_k)
        # frozen products (e.g. an in-delivery M0) have zero return variance
        # and carry no correlation information
        live = []
        for j, key in enumerate(filtered.column_keys):
            col = filtered.values[:, j]
            col = col[np.isfinite(col)]
            if col.size >= 2 and col.var() > 0:
                live.append(j)
            else:
                notes.append(f"{key[0]}:{key[1]}: constant returns, excluded from correlations")
        filtered = LogReturnMatrix(
            filtered.values[:, live],
            [filtered.column_keys[j] for j in live],
            filtered.dt,
            filtered.dates,
        )
        try:
            cov = estimate_covariance(filtered)
            for a in sorted(rets):
                for b in sorted(rets):
                    if a > b:
                        continue
                    rows_a, cols_b, block = correlation_surface(cov, a, b)
                    out = cfg.out_dir / f"corr_{a}_{b}.csv"
                    _write_csv(
                        out,
                        ["tenor"] + cols_b,
                        [[rows_a[i]] + [_fmt(v) for v in block[i]] for i in range(len(rows_a))],
                    )
                    print(f"wrote {out}")
        except HjmkitError as exc:
            notes.append(f"correlation surfaces skipped: {exc}")

    report = [("quotes_file", cfg.quotes), ("markets", ",".join(markets))]
    report += [("n_quotes", len(quotes)), ("n_skipped_rows", len(issues))]
    for issue in issues:
        report.append(("skipped_row", str(issue)))
    for (market, tenor), count in sorted(removed_total.items()):
        if count:
            report.append(("outliers_removed", f"{market}:{tenor}={count}"))
    for note in notes:
        report.append(("note", note))
    _write_report(cfg.out_dir / "ingest_report.txt", report)
    print(f"wrote {cfg.out_dir / 'ingest_report.txt'}")


def cmd_curve(cfg: RunConfig) -> None:
    quotes, _ = _load_quotes(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    fitted = _bootstrap_all(quotes)
    by_key = {}
    for q in quotes:
        by_key.setdefault((q.market, q.trading_date), []).append(q)
    curves = [cv for cv, _ in fitted.values()]
    write_curve_csv(curves, cfg.path_curves())
    rows = []
    worst = 0.0
    for key in sorted(fitted):
        curve, report = fitted[key]
        residual = verify_no_arbitrage(curve, by_key[key])
        worst = max(worst, residual)
        rows.append(
            [
                key[1].isoformat(),
                key[0],
                len(curve.months),
                len(report.removed),
                len(report.fill_groups),
                _fmt(residual),
            ]
        )
    _write_csv(
        cfg.out_dir / "curve_report.csv",
        ["as_of", "market", "n_buckets", "n_redundant", "n_fill_groups", "max_residual"],
        rows,
    )
    print(f"wrote {cfg.path_curves()} ({len(curves)} curves, worst residual {worst:.3g})")


def cmd_calibrate(cfg: RunConfig) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    markets = cfg.markets
    if not markets:
        markets = sorted(
            p.stem.removeprefix("panel_") for p in cfg.out_dir.glob("panel_*.csv")
        )
    if not markets:
        raise ValidationError("no panels found; run ingest first or set markets")
    panels = [read_panel_csv(cfg.path_panel(m), m) for m in markets]
    rets = [log_returns(p, cfg.dt) for p in panels]
    combined = combine_log_returns(rets) if len(rets) > 1 else rets[0]
    filtered, removed = filter_outliers(combined, cfg.outlier_k)

    # the factor grid uses monthly tenors M1..M contiguous and common to all
    # markets; M0 rolls mid-delivery and quarters/years are curve averages
    per_market: dict[str, set[int]] = {m: set() for m in markets}
    for mk, tenor in filtered.column_keys:
        kind, off = parse_tenor(tenor)
        if kind == "M" and off >= 1:
            per_market[mk].add(off)
    depth = 0
    while all(depth + 1 in per_market[m] for m in markets):
        depth += 1
    if depth == 0:
        raise ValidationError("no common M1.. monthly tenor columns across markets")
    ordered_keys = [(m, f"M{i}") for m in markets for i in range(1, depth + 1)]
    sel = [filtered.column_keys.index(k) for k in ordered_keys]
    matrix = LogReturnMatrix(
        filtered.values[:, sel], ordered_keys, filtered.dt, filtered.dates
    )
    cov = estimate_covariance(matrix)
    result = pca(cov)
    n_factors = cfg.factors if cfg.factors is not None else select_factors(
        result.eigenvalues, cfg.threshold
    )
    model = build_sigma_star(result, n_factors, cfg.dt, column_keys=ordered_keys)
    model.save(cfg.path_model())

    explained = result.explained
    _write_csv(
        cfg.out_dir / "scree.csv",
        ["factor", "eigenvalue", "cumulative_share"],
        [
            [i + 1, _fmt(result.eigenvalues[i]), _fmt(explained[i])]
            for i in range(result.eigenvalues.size)
        ],
    )
    dropped = [k for k in filtered.column_keys if k not in set(ordered_keys)]
    report = [
        ("markets", ",".join(markets)),
        ("bucket_depth_months", depth),
        ("n_observations", cov.n_obs),
        ("n_factors", n_factors),
        ("explained_share", _fmt(explained[n_factors - 1])),
        ("outliers_removed", sum(removed.values())),
    ]
    for k in dropped:
        report.append(("column_excluded_from_grid", f"{k[0]}:{k[1]}"))
    _write_report(cfg.out_dir / "calibration_report.txt", report)
    print(
        f"wrote {cfg.path_model()} "
        f"(N={n_factors}, explains {100 * explained[n_factors - 1]:.2f}% of variance)"
    )


def cmd_simulate(cfg: RunConfig) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    model = FactorModel.load(cfg.path_model())
    curves = _latest_curves(
        {k: v for k, v in read_curve_csv(cfg.path_curves()).items()}
    )
    sim_cfg = SimConfig(
        cfg.need_seed(), cfg.n_paths, cfg.sim_step(), cfg.sim_horizon(), cfg.antithetic
    )

    def curve_for(market: str) -> StepwiseCurve:
        if market not in curves:
            raise ValidationError(f"no curve for market {market!r} in {cfg.path_curves()}")
        return curves[market]

    mode = cfg.sim_mode
    expected = None  # spot means track the curve, not the t=0 value
    if mode == "fixed_delivery":
        products = [
            (mk, b) for mk in model.markets for b in range(1, model.buckets_per_market + 1)
        ]
        initial = [_curve_month_price(curve_for(mk), b) for mk, b in products]
        paths = simulate_fixed_delivery(model, initial, sim_cfg, products)
    elif mode == "short_horizon":
        market = cfg.sim_market or model.markets[0]
        initial = [
            _curve_month_price(curve_for(market), b)
            for b in range(1, model.buckets_per_market + 1)
        ]
        paths = simulate_short_horizon(model, market, initial, sim_cfg)
    elif mode == "swap":
        market = cfg.sim_market or model.markets[0]
        contract = ContractDescriptor("swap", market, tau_start=cfg.swap_tau)
        initial = _curve_month_price(curve_for(market), max(1, round(cfg.swap_tau * 12)))
        paths = simulate_swap(model, contract, initial, sim_cfg)
    else:  # spot
        fns = {mk: _curve_on_grid(curve_for(mk), sim_cfg.time_grid) for mk in model.markets}
        paths = simulate_spot(model, fns, sim_cfg)
        expected = np.column_stack([fns[mk] for mk in model.markets])

    write_paths_csv(paths, cfg.out_dir / "paths.csv", cfg.export_paths or None)
    write_summary_csv(paths, cfg.out_dir / "summary.csv")
    report = sanity_check(paths, model, expected_mean=expected)
    lines = [("mode", mode), ("seed", sim_cfg.seed), ("n_paths", sim_cfg.n_paths)]
    lines.append(("status", "passed" if report.passed else "failed"))
    for f in report.failures:
        lines.append(("failure", f))
    worst = np.max(
        np.abs(report.empirical_variance - report.theoretical_variance)
        / np.maximum(report.theoretical_variance, 1e-300)
    )
    lines.append(("worst_variance_rel_error", _fmt(worst)))
    _write_report(cfg.out_dir / "sanity.txt", lines)
    print(f"wrote {cfg.out_dir / 'paths.csv'}, summary.csv, sanity.txt")
    if not report.passed:
        raise SimulationError(
            "sanity check failed: " + "; ".join(report.failures[:3])
        )


def _read_contract_file(path, kinds: dict[str, str]) -> dict:
    data = _read_flat_config(path)
    out = {}
    for key, raw in data.items():
        if key not in kinds:
            raise ValidationError(f"{path}: unknown contract key {key!r}")
        out[key] = _parse_value(key, raw, kinds[key])
    return out


def _spot_paths(model, curves, markets, sim_cfg):
    fns = {}
    for mk in markets:
        if mk not in curves:
            raise ValidationError(f"no curve for market {mk!r}")
        fns[mk] = _curve_on_grid(curves[mk], sim_cfg.time_grid)
    return simulate_spot(model, fns, sim_cfg, markets)


def _price_swing(cfg: RunConfig, model, curves) -> None:
    spec = _read_contract_file(
        cfg.swing,
        {
            "market": "str",
            "n_days": "int",
            "u_max": "int",
            "d_max": "int",
            "K": "float",
            "Q": "float",
            "sweep_rights": "list",
        },
    )
    market = spec.get("market") or model.markets[0]
    n_days = spec.get("n_days", 30)
    if n_days < 2:
        raise ValidationError("swing window needs at least 2 days")
    contract = SwingContract(
        n_days, spec.get("u_max", 1), spec.get("d_max", 1), spec["K"], spec.get("Q", 1.0)
    )
    sim_cfg = SimConfig(
        cfg.need_seed(),
        cfg.n_paths,
        1.0 / _DAYS_PER_YEAR,
        (n_days - 1) / _DAYS_PER_YEAR,
        cfg.antithetic,
    )
    paths = _spot_paths(model, curves, [market], sim_cfg)
    res = price_swing(contract, paths, cfg.rate)
    pairs = [
        ("contract", "swing"),
        ("market", market),
        ("n_days", n_days),
        ("u_max", contract.u_max),
        ("d_max", contract.d_max),
        ("K", _fmt(contract.strike)),
        ("Q", _fmt(contract.quantity)),
        ("seed", sim_cfg.seed),
        ("n_paths", sim_cfg.n_paths),
        ("rate", _fmt(cfg.rate)),
        ("value", _fmt(res.lsmc.value)),
        ("std_error", _fmt(res.lsmc.std_error)),
        ("lower_bound", _fmt(res.lower_bound)),
        ("lower_bound_std_error", _fmt(res.lower_bound_std_error)),
        ("upper_bound", _fmt(res.upper_bound)),
        ("upper_bound_std_error", _fmt(res.upper_bound_std_error)),
    ]
    _write_report(cfg.out_dir / "price_swing.txt", pairs)
    sweep = [int(v) for v in spec.get("sweep_rights", [])]
    if sweep:
        rows = []
        for rights in sweep:
            c = SwingContract(n_days, rights, rights, contract.strike, contract.quantity)
            r = price_swing(c, paths, cfg.rate)
            rows.append(
                [
                    rights,
                    _fmt(r.lsmc.value),
                    _fmt(r.lsmc.std_error),
                    _fmt(r.lower_bound),
                    _fmt(r.upper_bound),
                ]
            )
        _write_csv(
            cfg.out_dir / "price_swing_sweep.csv",
            ["rights", "value", "std_error", "lower_bound", "upper_bound"],
            rows,
        )
    print(f"swing value {res.lsmc.value:.6g} (se {res.lsmc.std_error:.3g})")


def _price_vpp(cfg: RunConfig, model, curves) -> None:
    spec = _read_contract_file(
        cfg.vpp,
        {
            "power_market": "str",
            "fuel_market": "str",
            "n_hours": "int",
            "t_on": "int",
            "t_off": "int",
            "q_min": "float",
            "q_max": "float",
            "S_u": "float",
            "S_d": "float",
            "H": "float",
            "sweep_lock_hours": "list",
        },
    )
    power = spec.get("power_market") or model.markets[0]
    fuel = spec.get("fuel_market") or model.markets[-1]
    n_hours = spec.get("n_hours", 168)
    if n_hours < 2:
        raise ValidationError("VPP window needs at least 2 hours")
    contract = VppContract(
        n_hours,
        spec.get("t_on", 1),
        spec.get("t_off", 1),
        spec.get("q_min", 0.0),
        spec["q_max"],
        spec.get("S_u", 0.0),
        spec.get("S_d", 0.0),
        spec.get("H", 1.0),
    )
    sim_cfg = SimConfig(
        cfg.need_seed(),
        cfg.n_paths,
        1.0 / _HOURS_PER_YEAR,
        (n_hours - 1) / _HOURS_PER_YEAR,
        cfg.antithetic,
    )
    markets = [power] if power == fuel else [power, fuel]
    paths = _spot_paths(model, curves, markets, sim_cfg)
    p_idx, f_idx = 0, 0 if power == fuel else 1
    res = price_vpp(contract, paths, paths, cfg.rate, power_product=p_idx, fuel_product=f_idx)
    pairs = [
        ("contract", "vpp"),
        ("power_market", power),
        ("fuel_market", fuel),
        ("n_hours", n_hours),
        ("t_on", contract.t_on),
        ("t_off", contract.t_off),
        ("q_min", _fmt(contract.q_min)),
        ("q_max", _fmt(contract.q_max)),
        ("S_u", _fmt(contract.start_cost)),
        ("S_d", _fmt(contract.stop_cost)),
        ("H", _fmt(contract.heat_rate)),
        ("seed", sim_cfg.seed),
        ("n_paths", sim_cfg.n_paths),
        ("rate", _fmt(cfg.rate)),
        ("value", _fmt(res.lsmc.value)),
        ("std_error", _fmt(res.lsmc.std_error)),
        ("naive", _fmt(res.naive)),
        ("naive_std_error", _fmt(res.naive_std_error)),
        ("upper_bound", _fmt(res.upper_bound)),
        ("upper_bound_std_error", _fmt(res.upper_bound_std_error)),
    ]
    _write_report(cfg.out_dir / "price_vpp.txt", pairs)
    sweep = [int(v) for v in spec.get("sweep_lock_hours", [])]
    if sweep:
        rows = []
        for lock in sweep:
            c = VppContract(
                n_hours,
                lock,
                lock,
                contract.q_min,
                contract.q_max,
                contract.start_cost,
                contract.stop_cost,
                contract.heat_rate,
            )
            r = price_vpp(c, paths, paths, cfg.rate, power_product=p_idx, fuel_product=f_idx)
            rows.append(
                [lock, lock, _fmt(r.lsmc.value), _fmt(r.lsmc.std_error), _fmt(r.naive), _fmt(r.upper_bound)]
            )
        _write_csv(
            cfg.out_dir / "price_vpp_sweep.csv",
            ["t_on", "t_off", "value", "std_error", "naive", "upper_bound"],
            rows,
        )
    print(f"vpp value {res.lsmc.value:.6g} (se {res.lsmc.std_error:.3g})")


def _price_storage(cfg: RunConfig, model, curves) -> None:
    spec = _read_contract_file(
        cfg.storage,
        {
            "market": "str",
            "n_days": "int",
            "v_min": "float",
            "v_max": "float",
            "v_0": "float",
            "v_target": "float",
            "i_min": "float",
            "i_max": "float",
            "penalty_scale": "float",
        },
    )
    market = spec.get("market") or model.markets[0]
    n_days = spec.get("n_days", 30)
    contract = StorageContract(
        n_days,
        spec["v_min"],
        spec["v_max"],
        spec["v_0"],
        spec.get("v_target", spec["v_0"]),
        spec["i_min"],
        spec["i_max"],
        spec.get("penalty_scale", 2.0),
    )
    seed = cfg.need_seed()
    sim_cfg = SimConfig(
        seed, cfg.n_paths, 1.0 / _DAYS_PER_YEAR, n_days / _DAYS_PER_YEAR, cfg.antithetic
    )
    paths = _spot_paths(model, curves, [market], sim_cfg)
    fresh_cfg = replace(sim_cfg, seed=(seed + 1) % 2**64)
    fresh = _spot_paths(model, curves, [market], fresh_cfg)
    res = price_storage(contract, paths, fresh, cfg.rate)
    pairs = [
        ("contract", "storage"),
        ("market", market),
        ("n_days", n_days),
        ("v_min", _fmt(contract.v_min)),
        ("v_max", _fmt(contract.v_max)),
        ("v_0", _fmt(contract.v_start)),
        ("v_target", _fmt(contract.v_target)),
        ("i_min", _fmt(contract.withdraw_rate)),
        ("i_max", _fmt(contract.inject_rate)),
        ("penalty_scale", _fmt(contract.penalty_scale)),
        ("seed", seed),
        ("n_paths", sim_cfg.n_paths),
        ("rate", _fmt(cfg.rate)),
        ("deterministic", _fmt(res.deterministic)),
        ("deterministic_std_error", _fmt(res.deterministic_std_error)),
        ("sdp_value", _fmt(res.sdp.value)),
        ("sdp_std_error", _fmt(res.sdp.std_error)),
        ("out_of_sample", _fmt(res.out_of_sample.value)),
        ("out_of_sample_std_error", _fmt(res.out_of_sample.std_error)),
        ("volume_grid_min", _fmt(res.volume_grid[0])),
        ("volume_grid_max", _fmt(res.volume_grid[-1])),
        ("volume_grid_points", res.volume_grid.size),
        ("grid_truncated_low", str(res.truncated_low).lower()),
        ("grid_truncated_high", str(res.truncated_high).lower()),
    ]
    _write_report(cfg.out_dir / "price_storage.txt", pairs)
    print(
        f"storage sdp {res.sdp.value:.6g}, deterministic {res.deterministic:.6g}, "
        f"out-of-sample {res.out_of_sample.value:.6g}"
    )


def cmd_price(cfg: RunConfig) -> None:
    if not (cfg.vpp or cfg.swing or cfg.storage):
        raise ValidationError("no contract files configured (vpp/swing/storage)")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    model = FactorModel.load(cfg.path_model())
    curves = _latest_curves(read_curve_csv(cfg.path_curves()))
    if cfg.swing:
        _price_swing(cfg, model, curves)
    if cfg.vpp:
        _price_vpp(cfg, model, curves)
    if cfg.storage:
        _price_storage(cfg, model, curves)


def cmd_pipeline(cfg: RunConfig) -> None:
    cmd_ingest(cfg)
    cmd_curve(cfg)
    cmd_calibrate(cfg)
    cmd_simulate(cfg)
    if cfg.vpp or cfg.swing or cfg.storage:
        cmd_price(cfg)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # bad flags are validation failures, exit 1
        raise ValidationError(message)


def main(argv=None) -> int:
    parser = _Parser(
        prog="hjmkit",
        description="Forward curve bootstrap, factor calibration, Monte Carlo and pricing",
    )
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("--config", help="flat key=value run configuration file")
    parser.add_argument("--seed", type=int, help="random seed (required to simulate/price)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--paths", type=int, dest="n_paths", help="Monte Carlo path count")
    parser.add_argument("--threshold", type=float, help="explained-variance threshold")
    parser.add_argument("--factors", type=int, help="override retained factor count")
    try:
        args = parser.parse_args(argv)
        cfg = load_run_config(
            args.config,
            seed=args.seed,
            out=args.out,
            n_paths=args.n_paths,
            threshold=args.threshold,
            factors=args.factors,
        )
        started = time.perf_counter()
        {
            "ingest": cmd_ingest,
            "curve": cmd_curve,
            "calibrate": cmd_calibrate,
            "simulate": cmd_simulate,
            "price": cmd_price,
            "pipeline": cmd_pipeline,
        }[args.command](cfg)
        print(f"[{args.command}] completed in {time.perf_counter() - started:.2f}s")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HjmkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
