"""Independent reference computations for the test suite.

Everything here is deliberately written the slow, obvious way: double
loops, quadrature, exhaustive search over information sets. The point is
that a bug in the package and a bug in one of these references should
never coincide, so agreement pins the fast implementations down.

The dynamic-programming references treat a finite path set as the whole
probability space. `adapted_value` computes the exact optimum over all
policies that are measurable with respect to the observed price history
(the true contract value on that space), `foresight_value` the per-path
optimum (the perfect-hindsight upper bound). Both work on the same
adapter protocol:

    actions(k, state, price) -> iterable of (cash, next_state)
    terminal(state, price)   -> cash          (optional)

with undiscounted cash; discount factors are applied by the engine.
"""

from __future__ import annotations

import math
from itertools import product as iter_product

import numpy as np
from scipy.integrate import quad


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def acf_reference(series, max_lag):
    """Literal double-loop autocorrelation with population variance."""
    x = [float(v) for v in series]
    n = len(x)
    m = sum(x) / n
    v = sum((xi - m) ** 2 for xi in x) / n
    out = []
    for k in range(max_lag + 1):
        s = 0.0
        for i in range(n - k):
            s += (x[i] - m) * (x[i + k] - m)
        out.append(s / ((n - k) * v))
    return out


def moments_reference(values):
    """(mean, sample std, skewness, excess kurtosis) by plain loops."""
    x = [float(v) for v in values]
    n = len(x)
    m = sum(x) / n
    c2 = sum((xi - m) ** 2 for xi in x) / n
    c3 = sum((xi - m) ** 3 for xi in x) / n
    c4 = sum((xi - m) ** 4 for xi in x) / n
    std = math.sqrt(sum((xi - m) ** 2 for xi in x) / (n - 1))
    return m, std, c3 / c2**1.5, c4 / c2**2 - 3.0


# ---------------------------------------------------------------------------
# Black pricing
# ---------------------------------------------------------------------------


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def black_call_reference(forward, strike, total_variance):
    """Undiscounted Black call via math.erf (no scipy)."""
    if total_variance == 0.0:
        return max(forward - strike, 0.0)
    sd = math.sqrt(total_variance)
    d1 = (math.log(forward / strike) + 0.5 * total_variance) / sd
    return forward * normal_cdf(d1) - strike * normal_cdf(d1 - sd)


def black_call_quadrature(forward, strike, total_variance):
    """Undiscounted Black call by integrating the lognormal density."""
    if total_variance == 0.0:
        return max(forward - strike, 0.0)
    sd = math.sqrt(total_variance)
    mu = math.log(forward) - 0.5 * total_variance

    def integrand(z):
        s = math.exp(mu + sd * z)
        return max(s - strike, 0.0) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    # start at the payoff kink; the integrand vanishes below it and the
    # discontinuous derivative defeats adaptive quadrature otherwise
    kink = max((math.log(strike) - mu) / sd, -12.0)
    val, _ = quad(integrand, kink, max(kink + 1.0, 12.0), limit=200)
    return val


# ---------------------------------------------------------------------------
# Volatility term structures
# ---------------------------------------------------------------------------


def integrated_square_vol(vol, t0, t1, points=None):
    """Integral of vol(s)^2 over [t0, t1] by adaptive quadrature."""
    val, _ = quad(lambda s: vol(s) ** 2, t0, t1, points=points, limit=400)
    return val


def occupancy_riemann(u_lo, u_hi, n_buckets, width, n_points=400_000):
    """Time the maturity range (u_lo, u_hi] spends in each bucket, by midpoint sum."""
    occ = [0.0] * n_buckets
    lo, hi = max(u_lo, 0.0), max(u_hi, 0.0)
    if hi <= lo:
        return occ
    du = (hi - lo) / n_points
    for i in range(n_points):
        u = lo + (i + 0.5) * du
        j = min(int(u / width), n_buckets - 1)
        occ[j] += du
    return occ


# ---------------------------------------------------------------------------
# Exact dynamic programming over a finite path space
# ---------------------------------------------------------------------------


def _as_obs(obs):
    # (paths, times) for scalar observations, (paths, times, observables)
    # for vector ones; o[p, k] then matches what the adapter expects
    arr = np.asarray(obs, dtype=float)
    if arr.ndim not in (2, 3):
        raise ValueError("observations must be 2- or 3-dimensional")
    return arr


def adapted_value(obs, n_decisions, start_state, actions, terminal, disc):
    """Exact optimum over all history-adapted policies.

    ``obs`` is (paths, times[, observables]); paths are equally likely.
    Decisions happen at steps 0..n_decisions-1; a step-k decision may only
    depend on observations up to k. Information sets are the equivalence
    classes of observation prefixes, so the optimum is a backward
    recursion over (step, class, resource state).
    """
    o = _as_obs(obs)
    n_paths = o.shape[0]
    memo = {}

    def value(k, paths, state):
        if k == n_decisions:
            if terminal is None:
                return 0.0
            return disc[k] * sum(terminal(state, o[p, k]) for p in paths) / len(paths)
        key = (k, paths, state)
        if key in memo:
            return memo[key]
        price = o[paths[0], k]
        groups = {}
        for p in paths:
            groups.setdefault(tuple(o[p, : k + 2].ravel()), []).append(p)
        parts = [(tuple(g), len(g) / len(paths)) for g in groups.values()]
        best = -math.inf
        for cash, nxt in actions(k, state, price):
            cont = sum(w * value(k + 1, g, nxt) for g, w in parts)
            best = max(best, disc[k] * cash + cont)
        memo[key] = best
        return best

    root = tuple(range(n_paths))
    if len({tuple(o[p, :1].ravel()) for p in root}) != 1:
        raise ValueError("paths must share the step-0 observation")
    return value(0, root, start_state)


def foresight_value(obs, n_decisions, start_state, actions, terminal, disc):
    """Per-path optimum with the whole path known, averaged over paths."""
    o = _as_obs(obs)
    total = 0.0
    for p in range(o.shape[0]):
        memo = {}

        def value(k, state, p=p, memo=memo):
            if k == n_decisions:
                if terminal is None:
                    return 0.0
                return disc[k] * terminal(state, o[p, k])
            key = (k, state)
            if key in memo:
                return memo[key]
            best = -math.inf
            for cash, nxt in actions(k, state, o[p, k]):
                best = max(best, disc[k] * cash + value(k + 1, nxt))
            memo[key] = best
            return best

        total += value(0, start_state)
    return total / o.shape[0]


def policy_enumeration_value(obs, n_decisions, start_state, actions, terminal, disc):
    """Adapted optimum by literally enumerating every policy map.

    A policy assigns one action index to every (step, information class,
    resource state) triple; the state spaces are closed over all actions
    first, unreachable slots just never fire. The policy count is
    exponential in classes x states x steps, so this is only usable to
    validate `adapted_value` on instances with ~two decision steps.
    """
    o = _as_obs(obs)
    n_paths = o.shape[0]

    def class_of(p, k):
        return tuple(o[p, : k + 1].ravel())

    classes = [sorted({class_of(p, k) for p in range(n_paths)}) for k in range(n_decisions)]
    states = [{start_state}]
    for k in range(n_decisions):
        nxt = set()
        for s in states[k]:
            for cls in classes[k]:
                price = next(o[p, k] for p in range(n_paths) if class_of(p, k) == cls)
                nxt.update(s2 for _, s2 in actions(k, s, price))
        states.append(nxt)

    index = {}
    choice_space = []
    for k in range(n_decisions):
        for cls in classes[k]:
            price = next(o[p, k] for p in range(n_paths) if class_of(p, k) == cls)
            for s in sorted(states[k]):
                index[(k, cls, s)] = len(choice_space)
                choice_space.append(len(list(actions(k, s, price))))

    best = -math.inf
    for assignment in iter_product(*(range(c) for c in choice_space)):
        total = 0.0
        for p in range(n_paths):
            state = start_state
            cash_p = 0.0
            for k in range(n_decisions):
                choice = assignment[index[(k, class_of(p, k), state)]]
                cash, state = list(actions(k, state, o[p, k]))[choice]
                cash_p += disc[k] * cash
            if terminal is not None:
                cash_p += disc[n_decisions] * terminal(state, o[p, n_decisions])
            total += cash_p
        best = max(best, total / n_paths)
    return best


# ---------------------------------------------------------------------------
# Contract adapters
# ---------------------------------------------------------------------------


def american_actions(strike, kind, quantity=1.0):
    """States: 0 = alive, 1 = exercised."""

    def actions(k, state, price):
        if state == 1:
            return [(0.0, 1)]
        intrinsic = max(price - strike, 0.0) if kind == "call" else max(strike - price, 0.0)
        return [(quantity * intrinsic, 1), (0.0, 0)]

    return actions


def swing_actions(strike, quantity=1.0):
    """States: (upswings left, downswings left)."""

    def actions(k, state, price):
        u, d = state
        out = [(0.0, (u, d))]
        if u > 0:
            out.append((quantity * max(price - strike, 0.0), (u - 1, d)))
        if d > 0:
            out.append((quantity * max(strike - price, 0.0), (u, d - 1)))
        return out

    return actions


def vpp_actions(t_on, t_off, q_min, q_max, start_cost, stop_cost, heat_rate):
    """States: ('on'|'off', lock hours left after this one). Observation: (power, fuel)."""

    def dispatch(price):
        spread = price[0] - heat_rate * price[1]
        return q_max * max(spread, 0.0) + q_min * min(spread, 0.0)

    def actions(k, state, price):
        mode, lock = state
        if mode == "on":
            out = [(dispatch(price), ("on", max(lock - 1, 0)))]
            if lock == 0:
                out.append((-stop_cost, ("off", t_off - 1)))
            return out
        out = [(0.0, ("off", max(lock - 1, 0)))]
        if lock == 0:
            out.append((-start_cost + dispatch(price), ("on", t_on - 1)))
        return out

    return actions


VPP_START_STATE = ("off", 0)


def storage_actions(v_min, v_max, inject_rate, withdraw_rate):
    """States: volume level; moves at full rate or not at all."""

    def actions(k, v, price):
        out = [(0.0, v)]
        if v + inject_rate <= v_max + 1e-9:
            out.append((-price * inject_rate, v + inject_rate))
        if v + withdraw_rate >= v_min - 1e-9:
            out.append((-price * withdraw_rate, v + withdraw_rate))
        return out

    return actions


def storage_terminal(v_target, penalty_scale):
    def terminal(v, price):
        return -penalty_scale * price * max(v_target - v, 0.0)

    return terminal
