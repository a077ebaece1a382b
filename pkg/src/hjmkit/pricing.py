"""Contract pricing: Black formula, European MC, and LSMC dynamic programs.

The exotic pricers (virtual power plant, swing, gas storage) share one
backward-induction pattern over (time, resource state):

* the continuation value of every resource state is regressed on a
  polynomial basis of the observed price in a single batched least-squares
  solve per step;
* decisions compare immediate payoff plus fitted continuation, but the
  value carried backward is the realized future cash flow of the chosen
  action, which keeps the estimate a true lower bound for the optimal
  adapted policy and makes the perfect-foresight variant dominate it
  path by path;
* the perfect-foresight benchmark runs the same recursion with realized
  values in place of fitted ones.

All cash flows are discounted to time zero with e^(-r t) off the path
time grid, so the pricers are agnostic to the grid's calendar meaning
(hours, days).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import PricingError, ValidationError
from .simulation import PathSet

_TIE_TOL = 1e-9


# ---------------------------------------------------------------------------
# European pricing
# ---------------------------------------------------------------------------


def black_price(
    forward: float,
    strike: float,
    total_variance: float,
    maturity: float = 0.0,
    rate: float = 0.0,
    kind: str = "call",
) -> float:
    """Price of a European option on a driftless lognormal forward.

    ``total_variance`` is the full integrated log variance Var[ln F(T0)],
    not an annualized volatility; the formula never needs the split into
    vol and time. Zero variance degenerates to discounted intrinsic value,
    puts come from parity.
    """
    if kind not in ("call", "put"):
        raise ValidationError(f"kind must be 'call' or 'put', got {kind!r}")
    if not (forward > 0 and strike > 0):
        raise ValidationError("forward and strike must be positive")
    if total_variance < 0 or not math.isfinite(total_variance):
        raise ValidationError("total_variance must be finite and non-negative")
    if maturity < 0:
        raise ValidationError("maturity must be non-negative")
    disc = math.exp(-rate * maturity)
    if total_variance == 0.0:
        call = disc * max(forward - strike, 0.0)
    else:
        sd = math.sqrt(total_variance)
        d1 = (math.log(forward / strike) + 0.5 * total_variance) / sd
        d2 = d1 - sd
        call = disc * (forward * norm.cdf(d1) - strike * norm.cdf(d2))
    if kind == "call":
        return call
    return call - disc * (forward - strike)


def call_payoff(strike: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda terminal: np.maximum(terminal - strike, 0.0)


def put_payoff(strike: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda terminal: np.maximum(strike - terminal, 0.0)


def _pair_stats(samples: np.ndarray, antithetic: bool) -> tuple[float, float]:
    """Mean and standard error; antithetic pairs are averaged first."""
    x = samples.reshape(-1, 2).mean(axis=1) if antithetic else samples
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def mc_european(
    paths: PathSet,
    maturity: float,
    payoff: Callable[[np.ndarray], np.ndarray],
    rate: float = 0.0,
    product: int = 0,
) -> tuple[float, float]:
    """Discounted sample mean and standard error of payoff(F(T0)).

    ``maturity`` must land on the path grid; ``payoff`` maps the vector of
    terminal prices to per-path payoffs.
    """
    grid = paths.time_grid
    idx = int(np.argmin(np.abs(grid - maturity)))
    if abs(grid[idx] - maturity) > 1e-9 * max(1.0, abs(maturity)):
        raise PricingError(f"maturity {maturity} is not on the simulation grid")
    if paths.n_paths < 2:
        raise PricingError("mc_european needs at least two paths")
    vals = np.asarray(payoff(paths.values[:, idx, product]), dtype=float)
    if vals.shape != (paths.n_paths,):
        raise PricingError("payoff must return one value per path")
    disc = math.exp(-rate * grid[idx])
    mean, se = _pair_stats(vals, paths.config.antithetic)
    return disc * mean, disc * se


# ---------------------------------------------------------------------------
# Regression machinery
# ---------------------------------------------------------------------------


@dataclass
class ContinuationFit:
    """Fitted continuation values as polynomials in a standardized state.

    ``coefficients`` has one column per resource state, so evaluating on a
    vector of prices yields the whole continuation surface in one product.
    """

    center: float
    scale: float
    dim: int
    coefficients: np.ndarray
    ridge_used: bool = False

    def design(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return np.ones((x.size, 1))
        z = (x - self.center) / self.scale
        return np.vander(z, self.dim, increasing=True)

    def evaluate(self, x) -> np.ndarray:
        return self.design(x) @ self.coefficients


def lsmc_continuation(
    states,
    values,
    degree: int = 3,
    min_samples_per_dim: int = 10,
    ridge: float = 1e-8,
) -> ContinuationFit:
    """Least-squares fit of realized future values on polynomials of the state.

    ``values`` may be a matrix with one column per resource state; all
    columns share the design matrix and are solved together. The basis
    order is capped at the number of distinct state samples minus one,
    which keeps the design from being singular by construction; a residual
    rank deficiency falls back to ridge regression with a warning.
    """
    x = np.asarray(states, dtype=float)
    y = np.asarray(values, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    if x.ndim != 1 or y.shape[0] != x.size:
        raise ValidationError("states and values must align on the sample axis")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValidationError("regression inputs must be finite")
    if degree < 0:
        raise ValidationError("degree must be non-negative")
    distinct = np.unique(x).size
    dim = max(1, min(degree + 1, distinct))
    if x.size < min_samples_per_dim * dim:
        raise PricingError(
            f"continuation regression needs at least {min_samples_per_dim * dim} "
            f"samples for {dim} basis functions, got {x.size}"
        )
    center = float(x.mean())
    scale = float(x.std())
    if scale == 0.0:
        dim, scale = 1, 1.0
    fit = ContinuationFit(center, scale, dim, np.zeros((dim, y.shape[1])))
    design = fit.design(x)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < dim:
        warnings.warn(
            "rank-deficient continuation design; using ridge fallback",
            RuntimeWarning,
            stacklevel=2,
        )
        gram = design.T @ design + ridge * np.eye(dim)
        coef = np.linalg.solve(gram, design.T @ y)
        fit.ridge_used = True
    fit.coefficients = coef
    return fit


@dataclass(frozen=True)
class LsmcSettings:
    """Regression knobs shared by all LSMC pricers."""

    degree: int = 3
    min_samples_per_dim: int = 10
    ridge: float = 1e-8

    def fit(self, states, values) -> ContinuationFit:
        return lsmc_continuation(
            states, values, self.degree, self.min_samples_per_dim, self.ridge
        )


@dataclass
class PolicyValuation:
    """Value estimate plus the policy (per-step regressions) that produced it."""

    value: float
    std_error: float
    policy: object = None
    in_sample: bool = True

    def __post_init__(self):
        if self.std_error < 0:
            raise ValidationError("std_error must be non-negative")


# ---------------------------------------------------------------------------
# American options
# ---------------------------------------------------------------------------


def american_option(
    paths: PathSet,
    strike: float,
    rate: float = 0.0,
    kind: str = "put",
    settings: LsmcSettings | None = None,
    product: int = 0,
    last_exercise: int | None = None,
) -> PolicyValuation:
    """Longstaff-Schwarz value with exercise on every grid date.

    Regressions run on in-the-money paths only; a date whose in-the-money
    set is too small for even a constant fit is treated as no-exercise.
    ``last_exercise`` restricts the window to grid indices 0..last.
    """
    settings = settings or LsmcSettings()
    if kind not in ("call", "put"):
        raise ValidationError(f"kind must be 'call' or 'put', got {kind!r}")
    if strike <= 0:
        raise ValidationError("strike must be positive")
    s = paths.values[:, :, product]
    grid = paths.time_grid
    last = grid.size - 1 if last_exercise is None else int(last_exercise)
    if not 0 <= last < grid.size:
        raise ValidationError("last_exercise outside the path grid")
    intrinsic = np.maximum(s - strike, 0.0) if kind == "call" else np.maximum(strike - s, 0.0)
    disc = np.exp(-rate * grid)
    fits: list[ContinuationFit | None] = []
    cf = disc[last] * intrinsic[:, last]
    for k in range(last - 1, 0, -1):
        itm = intrinsic[:, k] > 0
        n_itm = int(itm.sum())
        dim = max(1, min(settings.degree + 1, np.unique(s[itm, k]).size)) if n_itm else 1
        if n_itm < settings.min_samples_per_dim * dim or n_itm == 0:
            fits.append(None)
            continue
        fit = settings.fit(s[itm, k], cf[itm])
        cont = fit.evaluate(s[itm, k])[:, 0]
        exercise_now = disc[k] * intrinsic[itm, k] >= cont - _TIE_TOL
        cf[np.flatnonzero(itm)[exercise_now]] = disc[k] * intrinsic[itm, k][exercise_now]
        fits.append(fit)
    cont0, se = _pair_stats(cf, paths.config.antithetic)
    if intrinsic[0, 0] > cont0:
        return PolicyValuation(float(intrinsic[0, 0]), 0.0, list(reversed(fits)))
    return PolicyValuation(cont0, se, list(reversed(fits)))


# ---------------------------------------------------------------------------
# Contract definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VppContract:
    """Power plant dispatch rights over an hourly window.

    While committed the unit must run with output in [q_min, q_max]; since
    the payoff is linear in output, dispatch is bang-bang: q_max when the
    spark spread is positive, q_min otherwise (the forced loss at q_min is
    what makes the minimum-on time bite). Switching on costs start_cost
    and locks the unit on for t_on hours; switching off costs stop_cost
    and locks it off for t_off hours.
    """

    n_hours: int
    t_on: int
    t_off: int
    q_min: float
    q_max: float
    start_cost: float
    stop_cost: float
    heat_rate: float

    def __post_init__(self):
        if self.n_hours < 1:
            raise ValidationError("n_hours must be at least 1")
        if self.t_on < 1 or self.t_off < 1:
            raise ValidationError("t_on and t_off must be at least 1")
        # q_min = 0 is allowed: it is the unconstrained no-must-run limit
        if not 0 <= self.q_min <= self.q_max or self.q_max <= 0:
            raise ValidationError("need 0 <= q_min <= q_max with q_max > 0")
        if self.start_cost < 0 or self.stop_cost < 0:
            raise ValidationError("start and stop costs must be non-negative")
        if self.heat_rate < 0:
            raise ValidationError("heat_rate must be non-negative")


@dataclass(frozen=True)
class SwingContract:
    """Daily swing rights: at most one up- or downswing per day.

    An upswing pays quantity * (S - K)+, a downswing quantity * (K - S)+.
    Rights are held optionally, so u_max + d_max may exceed the window;
    excess rights are simply never used and the value saturates at the
    strip of daily straddles.
    """

    n_days: int
    u_max: int
    d_max: int
    strike: float
    quantity: float = 1.0

    def __post_init__(self):
        if self.n_days < 1:
            raise ValidationError("n_days must be at least 1")
        if not 0 <= self.u_max <= self.n_days or not 0 <= self.d_max <= self.n_days:
            raise ValidationError("u_max and d_max must lie in [0, n_days]")
        if self.strike <= 0:
            raise ValidationError("strike must be positive")
        if self.quantity <= 0:
            raise ValidationError("quantity must be positive")


@dataclass(frozen=True)
class StorageContract:
    """Gas storage: daily inject / hold / withdraw on a volume grid.

    withdraw_rate is negative (maximum daily draw), inject_rate positive.
    Ending below v_target costs penalty_scale times the terminal spot per
    missing unit, i.e. the shortfall is bought back at a marked-up price.
    """

    n_days: int
    v_min: float
    v_max: float
    v_start: float
    v_target: float
    withdraw_rate: float
    inject_rate: float
    penalty_scale: float = 2.0

    def __post_init__(self):
        if self.n_days < 1:
            raise ValidationError("n_days must be at least 1")
        if not self.v_min <= self.v_start <= self.v_max:
            raise ValidationError("need v_min <= v_start <= v_max")
        if not self.v_min <= self.v_target <= self.v_max:
            raise ValidationError("need v_min <= v_target <= v_max")
        if not (self.withdraw_rate < 0 < self.inject_rate):
            raise ValidationError("need withdraw_rate < 0 < inject_rate")
        if self.penalty_scale < 0:
            raise ValidationError("penalty_scale must be non-negative")


# ---------------------------------------------------------------------------
# Shared backward induction
# ---------------------------------------------------------------------------


def _backward_induction(
    price_state: np.ndarray,
    terminal: np.ndarray,
    step_actions,
    settings: LsmcSettings,
    foresight: bool,
) -> tuple[np.ndarray, list[ContinuationFit] | None]:
    """Generic realized-cash-flow recursion over (step, resource state).

    price_state[:, k] is the regression state at step k; terminal seeds the
    value-to-go matrix (n_paths, n_states). step_actions(k) yields tuples
    (immediate, valid, target): per-path immediate cash, a per-state
    validity mask and per-state successor indices. With foresight=True the
    decision uses realized values directly (per-path optimum); otherwise
    fitted continuations decide and realized values are carried.
    """
    cf = terminal.copy()
    fits: list[ContinuationFit] = []
    n_steps = price_state.shape[1]
    for k in range(n_steps - 1, -1, -1):
        if foresight:
            cont = cf
        else:
            fit = settings.fit(price_state[:, k], cf)
            fits.append(fit)
            cont = fit.evaluate(price_state[:, k])
        best_score = None
        new_cf = None
        for immediate, valid, target in step_actions(k):
            score = immediate[:, None] + cont[:, target]
            realized = immediate[:, None] + cf[:, target]
            if best_score is None:
                best_score = np.where(valid[None, :], score, -np.inf)
                new_cf = np.where(valid[None, :], realized, -np.inf)
            else:
                score = np.where(valid[None, :], score, -np.inf)
                better = score > best_score + _TIE_TOL
                new_cf = np.where(better, realized, new_cf)
                best_score = np.where(better, score, best_score)
        cf = new_cf
    return cf, (None if foresight else list(reversed(fits)))


# ---------------------------------------------------------------------------
# Virtual power plant
# ---------------------------------------------------------------------------


@dataclass
class VppValuation:
    lsmc: PolicyValuation
    naive: float
    naive_std_error: float
    upper_bound: float
    upper_bound_std_error: float


def _vpp_tables(contract: VppContract):
    """Commitment state machine: index = lock hours left, on block then off block.

    A state (mode, lock) entering an hour runs in that mode for the hour;
    lock > 0 forces the mode to persist. Switching on at hour k makes
    hours k..k+t_on-1 mandatory, so the successor entering hour k+1
    carries t_on-1 locked hours (symmetrically for switching off).
    """
    n_on, n_off = contract.t_on, contract.t_off
    n_states = n_on + n_off
    on_locks = np.arange(n_on)
    off_locks = np.arange(n_off)
    stay_target = np.empty(n_states, dtype=int)
    stay_target[:n_on] = np.maximum(on_locks - 1, 0)
    stay_target[n_on:] = n_on + np.maximum(off_locks - 1, 0)
    is_on = np.zeros(n_states, dtype=bool)
    is_on[:n_on] = True
    to_off = np.zeros(n_states, dtype=bool)
    to_off[0] = True  # only (on, lock 0) may shut down
    to_on = np.zeros(n_states, dtype=bool)
    to_on[n_on] = True  # only (off, lock 0) may start
    switch_target = np.zeros(n_states, dtype=int)
    switch_target[0] = n_on + (n_off - 1)
    switch_target[n_on] = n_on - 1
    start_state = n_on  # the window opens with the unit off and free
    return n_states, start_state, stay_target, is_on, to_on, to_off, switch_target


def price_vpp(
    contract: VppContract,
    power_paths: PathSet,
    fuel_paths: PathSet,
    rate: float = 0.0,
    settings: LsmcSettings | None = None,
    power_product: int = 0,
    fuel_product: int = 0,
) -> VppValuation:
    """LSMC value of the plant plus perfect-foresight and strip benchmarks.

    Power and fuel paths must come from one joint simulation (same seed,
    paths and grid). The regression state is the spark spread. The strip
    bound values every hour as an unconstrained spark-spread call at
    q_max; perfect foresight optimizes each path in hindsight. Both
    dominate the LSMC value path by path, which is asserted.
    """
    settings = settings or LsmcSettings()
    if power_paths.config != fuel_paths.config or power_paths.time_grid.size != fuel_paths.time_grid.size:
        raise ValidationError("power and fuel paths must share seed, path count and grid")
    n = contract.n_hours
    if power_paths.time_grid.size < n:
        raise ValidationError(f"paths cover {power_paths.time_grid.size} hours, contract needs {n}")
    s_power = power_paths.values[:, :n, power_product]
    s_fuel = fuel_paths.values[:, :n, fuel_product]
    spread = s_power - contract.heat_rate * s_fuel
    disc = np.exp(-rate * power_paths.time_grid[:n])
    dispatch = (
        contract.q_max * np.maximum(spread, 0.0) + contract.q_min * np.minimum(spread, 0.0)
    ) * disc[None, :]

    n_states, start_state, stay_target, is_on, to_on, to_off, switch_target = _vpp_tables(
        contract
    )
    zero = np.zeros(power_paths.n_paths)

    # immediate cash depends on the state only through on/off, so the four
    # (action, mode) combinations become four masked action rows
    def actions(k):
        d_k = dispatch[:, k]
        yield d_k, is_on, stay_target
        yield zero, ~is_on, stay_target
        yield -contract.start_cost * disc[k] + d_k, to_on, switch_target
        yield np.full_like(d_k, -contract.stop_cost * disc[k]), to_off, switch_target

    terminal = np.zeros((power_paths.n_paths, n_states))
    cf, fits = _backward_induction(spread, terminal, actions, settings, foresight=False)
    value_sample = cf[:, start_state]
    value, se = _pair_stats(value_sample, power_paths.config.antithetic)

    cf_f, _ = _backward_induction(spread, terminal, actions, settings, foresight=True)
    naive_sample = cf_f[:, start_state]
    naive, naive_se = _pair_stats(naive_sample, power_paths.config.antithetic)

    strip_sample = (contract.q_max * np.maximum(spread, 0.0) * disc[None, :]).sum(axis=1)
    strip, strip_se = _pair_stats(strip_sample, power_paths.config.antithetic)

    if np.any(naive_sample < value_sample - 1e-7):
        raise PricingError("internal check failed: foresight value below policy value")
    if np.any(strip_sample < naive_sample - 1e-7):
        raise PricingError("internal check failed: strip bound below foresight value")
    policy = {"fits": fits, "t_on": contract.t_on, "t_off": contract.t_off}
    return VppValuation(PolicyValuation(value, se, policy), naive, naive_se, strip, strip_se)


# ---------------------------------------------------------------------------
# Swing contracts
# ---------------------------------------------------------------------------


@dataclass
class SwingValuation:
    lsmc: PolicyValuation
    lower_bound: float
    lower_bound_std_error: float
    upper_bound: float
    upper_bound_std_error: float


def price_swing(
    contract: SwingContract,
    spot_paths: PathSet,
    rate: float = 0.0,
    settings: LsmcSettings | None = None,
    product: int = 0,
) -> SwingValuation:
    """LSMC swing value with its American lower and European upper bounds.

    The state is (remaining upswings, remaining downswings); one exercise
    per day at most. The lower bound is an American call plus an American
    put priced on the same paths; the upper bound is the strip of daily
    European calls and puts, which dominates path by path. A bound breach
    beyond three combined standard errors raises.
    """
    settings = settings or LsmcSettings()
    n = contract.n_days
    if spot_paths.time_grid.size < n:
        raise ValidationError(f"paths cover {spot_paths.time_grid.size} days, contract needs {n}")
    s = spot_paths.values[:, :n, product]
    disc = np.exp(-rate * spot_paths.time_grid[:n])
    q = contract.quantity
    up_cash = q * np.maximum(s - contract.strike, 0.0) * disc[None, :]
    down_cash = q * np.maximum(contract.strike - s, 0.0) * disc[None, :]

    nu, nd = contract.u_max + 1, contract.d_max + 1
    idx = lambda u, d: u * nd + d  # noqa: E731
    n_states = nu * nd
    hold_target = np.arange(n_states)
    up_valid = np.zeros(n_states, dtype=bool)
    up_target = np.zeros(n_states, dtype=int)
    down_valid = np.zeros(n_states, dtype=bool)
    down_target = np.zeros(n_states, dtype=int)
    for u in range(nu):
        for d in range(nd):
            if u > 0:
                up_valid[idx(u, d)] = True
                up_target[idx(u, d)] = idx(u - 1, d)
            if d > 0:
                down_valid[idx(u, d)] = True
                down_target[idx(u, d)] = idx(u, d - 1)

    zero = np.zeros(spot_paths.n_paths)
    all_valid = np.ones(n_states, dtype=bool)

    def actions(k):
        yield zero, all_valid, hold_target
        yield up_cash[:, k], up_valid, up_target
        yield down_cash[:, k], down_valid, down_target

    terminal = np.zeros((spot_paths.n_paths, n_states))
    cf, fits = _backward_induction(s, terminal, actions, settings, foresight=False)
    sample = cf[:, idx(contract.u_max, contract.d_max)]
    value, se = _pair_stats(sample, spot_paths.config.antithetic)

    ub_sample = (up_cash + down_cash).sum(axis=1)
    ub, ub_se = _pair_stats(ub_sample, spot_paths.config.antithetic)

    lb = lb_se = 0.0
    if contract.u_max > 0 or contract.d_max > 0:
        parts = []
        if contract.u_max > 0:
            parts.append(
                american_option(
                    spot_paths, contract.strike, rate, "call", settings, product, n - 1
                )
            )
        if contract.d_max > 0:
            parts.append(
                american_option(
                    spot_paths, contract.strike, rate, "put", settings, product, n - 1
                )
            )
        lb = q * sum(p.value for p in parts)
        lb_se = q * math.sqrt(sum(p.std_error**2 for p in parts))

    if np.any(ub_sample < sample - 1e-7):
        raise PricingError("internal check failed: straddle strip below swing value")
    slack = 3.0 * math.sqrt(se**2 + lb_se**2)
    if value < lb - slack:
        raise PricingError(
            f"swing value {value:.6g} breaches its American lower bound {lb:.6g}"
        )
    policy = {"fits": fits, "u_max": contract.u_max, "d_max": contract.d_max}
    return SwingValuation(PolicyValuation(value, se, policy), lb, lb_se, ub, ub_se)


# ---------------------------------------------------------------------------
# Gas storage
# ---------------------------------------------------------------------------


@dataclass
class StorageValuation:
    sdp: PolicyValuation
    deterministic: float
    deterministic_std_error: float
    out_of_sample: PolicyValuation | None
    volume_grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    truncated_low: bool = False
    truncated_high: bool = False


def _storage_grid(contract: StorageContract) -> tuple[np.ndarray, int, int, int, bool, bool]:
    step = min(contract.inject_rate, -contract.withdraw_rate)
    i_units = contract.inject_rate / step
    w_units = -contract.withdraw_rate / step
    if abs(i_units - round(i_units)) > 1e-9 or abs(w_units - round(w_units)) > 1e-9:
        raise ValidationError(
            "inject and withdraw rates must be integer multiples of the smaller "
            "rate so every move stays on the volume grid"
        )
    i_units, w_units = int(round(i_units)), int(round(w_units))
    tol = 1e-9 * max(1.0, abs(contract.v_max))
    j_lo = math.ceil((contract.v_min - contract.v_start) / step - 1e-12)
    j_hi = math.floor((contract.v_max - contract.v_start) / step + 1e-12)
    grid = contract.v_start + step * np.arange(j_lo, j_hi + 1)
    truncated_low = grid[0] > contract.v_min + tol
    truncated_high = grid[-1] < contract.v_max - tol
    v0_idx = -j_lo
    # target must sit on the grid and be reachable inside the window
    t_units = (contract.v_target - contract.v_start) / step
    if abs(t_units - round(t_units)) > 1e-9:
        raise ValidationError("v_target is not on the volume grid spanned by the rates")
    t_units = int(round(t_units))
    reachable = any(
        a * i_units - t_units >= 0
        and (a * i_units - t_units) % w_units == 0
        and a + (a * i_units - t_units) // w_units <= contract.n_days
        for a in range(contract.n_days + 1)
    ) or any(
        b * w_units + t_units >= 0
        and (b * w_units + t_units) % i_units == 0
        and b + (b * w_units + t_units) // i_units <= contract.n_days
        for b in range(contract.n_days + 1)
    )
    if not reachable:
        raise ValidationError("v_target is unreachable from v_start within the window")
    return grid, v0_idx, i_units, w_units, truncated_low, truncated_high


def price_storage(
    contract: StorageContract,
    spot_paths: PathSet,
    fresh_paths: PathSet | None = None,
    rate: float = 0.0,
    settings: LsmcSettings | None = None,
    product: int = 0,
) -> StorageValuation:
    """Storage value by LSMC dynamic programming on a volume grid.

    The grid anchors at the starting volume with spacing equal to the
    smaller of the two rates; if the capacity bounds are not multiples of
    the spacing the grid is truncated inward and the result flags it.
    Decisions are bang-bang (payoff linear in the move): inject, hold or
    withdraw. ``fresh_paths`` (a different seed) replays the fitted policy
    out of sample to expose look-ahead bias.
    """
    settings = settings or LsmcSettings()
    n = contract.n_days
    if spot_paths.time_grid.size < n + 1:
        raise ValidationError(
            f"paths cover {spot_paths.time_grid.size} points, contract needs {n + 1}"
        )
    if fresh_paths is not None and fresh_paths.config.seed == spot_paths.config.seed:
        raise ValidationError("fresh_paths must use a different seed for the out-of-sample test")
    grid, v0_idx, i_units, w_units, trunc_lo, trunc_hi = _storage_grid(contract)
    n_v = grid.size
    s = spot_paths.values[:, : n + 1, product]
    disc = np.exp(-rate * spot_paths.time_grid[: n + 1])

    state_idx = np.arange(n_v)
    hold_target = state_idx
    inj_valid = state_idx + i_units <= n_v - 1
    inj_target = np.minimum(state_idx + i_units, n_v - 1)
    wdr_valid = state_idx - w_units >= 0
    wdr_target = np.maximum(state_idx - w_units, 0)
    zero = np.zeros(spot_paths.n_paths)
    all_valid = np.ones(n_v, dtype=bool)

    def terminal_values(spot_col: np.ndarray, disc_term: float) -> np.ndarray:
        short = np.maximum(contract.v_target - grid, 0.0)
        return -contract.penalty_scale * disc_term * spot_col[:, None] * short[None, :]

    def actions_for(spot: np.ndarray, dd: np.ndarray):
        def actions(k):
            yield zero, all_valid, hold_target
            yield -spot[:, k] * contract.inject_rate * dd[k], inj_valid, inj_target
            yield -spot[:, k] * contract.withdraw_rate * dd[k], wdr_valid, wdr_target

        return actions

    terminal = terminal_values(s[:, n], disc[n])
    cf, fits = _backward_induction(s[:, :n], terminal, actions_for(s, disc), settings, False)
    sample = cf[:, v0_idx]
    value, se = _pair_stats(sample, spot_paths.config.antithetic)

    cf_f, _ = _backward_induction(s[:, :n], terminal, actions_for(s, disc), settings, True)
    det_sample = cf_f[:, v0_idx]
    det, det_se = _pair_stats(det_sample, spot_paths.config.antithetic)
    if np.any(det_sample < sample - 1e-7):
        raise PricingError("internal check failed: foresight value below policy value")

    out = None
    if fresh_paths is not None:
        if fresh_paths.time_grid.size < n + 1:
            raise ValidationError("fresh_paths do not cover the contract window")
        sf = fresh_paths.values[:, : n + 1, product]
        pf = fresh_paths.n_paths
        cur = np.full(pf, v0_idx)
        total = np.zeros(pf)
        rows = np.arange(pf)
        for k in range(n):
            cont = fits[k].evaluate(sf[:, k])
            imm_inj = -sf[:, k] * contract.inject_rate * disc[k]
            imm_wdr = -sf[:, k] * contract.withdraw_rate * disc[k]
            score_hold = cont[rows, cur]
            inj_ok = cur + i_units <= n_v - 1
            score_inj = np.where(
                inj_ok, imm_inj + cont[rows, np.minimum(cur + i_units, n_v - 1)], -np.inf
            )
            wdr_ok = cur - w_units >= 0
            score_wdr = np.where(
                wdr_ok, imm_wdr + cont[rows, np.maximum(cur - w_units, 0)], -np.inf
            )
            take_inj = score_inj > score_hold + _TIE_TOL
            take_wdr = score_wdr > np.maximum(score_hold, score_inj) + _TIE_TOL
            total += np.where(take_wdr, imm_wdr, np.where(take_inj, imm_inj, 0.0))
            cur = np.where(
                take_wdr, cur - w_units, np.where(take_inj, cur + i_units, cur)
            )
        total += -contract.penalty_scale * disc[n] * sf[:, n] * np.maximum(
            contract.v_target - grid[cur], 0.0
        )
        o_val, o_se = _pair_stats(total, fresh_paths.config.antithetic)
        out = PolicyValuation(o_val, o_se, None, in_sample=False)

    policy = {"fits": fits, "grid": grid, "v0_idx": v0_idx}
    return StorageValuation(
        PolicyValuation(value, se, policy),
        det,
        det_se,
        out,
        grid,
        trunc_lo,
        trunc_hi,
    )
