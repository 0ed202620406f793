"""Empirical convergence diagnostics: a tightness-criterion estimator over a
documented probe family of stopping rules, a filtration-convergence probe
comparing conditional-probability martingales along coupled paths, and
distances between empirical stopping-time distributions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .paths import CadlagPath, skorokhod_j1_distance, uniform_grid
from .trees import BinomialModel, Payoff, optimal_rule, snell_envelope
from .stopping import StoppingRule, _LevelDecisions

QUANTILE_GRID = 1000
LIMIT_GRID_POINTS = 513
THRESHOLD_QUANTILES = np.linspace(0.1, 0.9, 9)
GH_NODES = 96


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Uniformly weighted scalar samples."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("samples must be a non-empty 1-d collection")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", s)


def _grid_quantiles(samples: np.ndarray) -> np.ndarray:
    s = np.sort(samples)
    m = len(s)
    u = (np.arange(QUANTILE_GRID) + 0.5) / QUANTILE_GRID
    idx = np.minimum((u * m).astype(np.int64), m - 1)
    return s[idx]


def wasserstein1(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    """W1 between empirical laws, via inverse CDFs on a common quantile grid
    of size 1000 (exact when both sample sizes divide the grid size)."""
    qa = _grid_quantiles(a.samples)
    qb = _grid_quantiles(b.samples)
    return float(np.mean(np.abs(qa - qb)))


def convergence_in_probability_estimate(pairs, epsilon: float) -> float:
    """Fraction of coupled pairs differing by more than epsilon."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError("pairs must be a non-empty sequence of (a, b)")
    return float(np.mean(np.abs(arr[:, 0] - arr[:, 1]) > epsilon))


@njit(cache=True)
def _stop_steps_markov(flat, signs, n):
    # flat: level-major stop flags (uint8), node (k, j) at index k*(k+1)/2 + j.
    n_paths = signs.shape[0]
    out = np.empty(n_paths, np.int64)
    for i in range(n_paths):
        j = 0
        step = n
        for k in range(n):
            if flat[((k * (k + 1)) >> 1) + j]:
                step = k
                break
            if signs[i, k] > 0:
                j += 1
        out[i] = step
    return out


def _rule_flat(rule: StoppingRule) -> np.ndarray:
    dec = rule.decisions
    flat = np.empty(rule.n * (rule.n + 1) // 2, dtype=np.uint8)
    if isinstance(dec, _LevelDecisions):
        pos = 0
        for k in range(rule.n):
            lv = dec.level(k)
            flat[pos : pos + k + 1] = lv
            pos += k + 1
    else:
        pos = 0
        for k in range(rule.n):
            for j in range(k + 1):
                flat[pos] = 1 if dec[(k, j)] else 0
                pos += 1
    return flat


def _threshold_rules(model: BinomialModel):
    """Deterministic probe rules: first passage of the price at or below / at or
    above each terminal-lattice quantile level."""
    n = model.n
    terminal = model.price_level(n)
    idx = np.round(THRESHOLD_QUANTILES * n).astype(np.int64)
    levels = terminal[idx]
    rules = []
    for lev in levels:
        down = [model.price_level(k) <= lev for k in range(n)]
        up = [model.price_level(k) >= lev for k in range(n)]
        for flags in (down, up):
            rules.append(
                StoppingRule(
                    n=n,
                    horizon=model.T,
                    space="markov",
                    decisions=_LevelDecisions(flags),
                )
            )
    return rules


def aldous_criterion_estimate(
    model: BinomialModel,
    payoff_family,
    delta: float,
    epsilon: float,
    n_paths: int,
    seed: int,
) -> float:
    """Estimated sup over probed stopping-time pairs (sigma, nu), nu in
    (sigma, sigma+delta], of P[|X_sigma - X_nu| >= epsilon].

    The probe family is the Snell-optimal rule of every payoff in the family
    plus two-sided threshold-passage rules at terminal-lattice quantiles; nu
    sweeps every tree step within delta of sigma (capped at the horizon), so
    the estimate is non-decreasing in delta by construction.  It is a lower
    bound of the true supremum, intended for trend comparisons.
    """
    if delta < 0.0:
        raise ValueError("delta must be non-negative")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    payoffs = list(payoff_family)
    if not payoffs:
        raise ValueError("empty probe family: need at least one payoff")

    n = model.n
    rules = [optimal_rule(snell_envelope(model, pf)) for pf in payoffs]
    rules.extend(_threshold_rules(model))

    rng = np.random.default_rng(seed)
    signs = np.where(rng.random((n_paths, n)) < model.p_star, 1, -1).astype(np.int8)
    ups = np.zeros((n_paths, n + 1), dtype=np.int64)
    np.cumsum(signs > 0, axis=1, out=ups[:, 1:])

    k_max = int(math.floor(delta * n / model.T + 1e-9))
    if k_max == 0:
        return 0.0

    def price_at(k_arr, j_arr):
        return (
            model.S0
            * np.power(model.u, j_arr.astype(np.float64))
            * np.power(model.d, (k_arr - j_arr).astype(np.float64))
        )

    rows = np.arange(n_paths)
    estimate = 0.0
    for rule in rules:
        flat = _rule_flat(rule)
        sigma = _stop_steps_markov(flat, signs, n)
        x_sigma = price_at(sigma, ups[rows, sigma])
        for kappa in range(1, k_max + 1):
            nu = np.minimum(sigma + kappa, n)
            x_nu = price_at(nu, ups[rows, nu])
            frac = float(np.mean(np.abs(x_nu - x_sigma) >= epsilon))
            if frac > estimate:
                estimate = frac
    return estimate


@njit(cache=True)
def _ndtr(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = 0.5 * (1.0 + math.erf(x[i] * 0.7071067811865476))
    return out


def _event_on_values(event, values: np.ndarray) -> np.ndarray:
    if event is None:
        return (values > 0.0).astype(np.float64)
    if event == "full":
        return np.ones(values.shape)
    if event == "empty":
        return np.zeros(values.shape)
    out = np.asarray([float(event(float(v))) for v in values])
    if np.any((out != 0.0) & (out != 1.0)):
        raise ValueError("functional not 0/1-valued on terminal states")
    return out


def _limit_martingale(event, t: np.ndarray, b: np.ndarray, horizon: float) -> np.ndarray:
    """E[ event(B_T) | B_t ] along a Brownian path, on a fixed grid ending at T."""
    vals = np.empty(len(t))
    rem = horizon - t[:-1]
    if event is None:
        vals[:-1] = _ndtr(b[:-1] / np.sqrt(rem))
    elif event == "full":
        vals[:-1] = 1.0
    elif event == "empty":
        vals[:-1] = 0.0
    else:
        nodes, weights = np.polynomial.hermite.hermgauss(GH_NODES)
        scale = np.sqrt(2.0 * rem)
        acc = np.zeros(len(t) - 1)
        for x, w in zip(nodes, weights):
            term = _event_on_values(event, b[:-1] + scale * x)
            acc += w * term
        vals[:-1] = acc / math.sqrt(math.pi)
    vals[-1] = _event_on_values(event, b[-1:])[0]
    return vals


def _tree_martingale_table(event, n: int, horizon: float) -> list:
    """cond[k][j] = E[event(walk_T) | k steps, j of them up] for the symmetric
    walk; computed exactly by backward halving (dyadic, reproducible)."""
    h = math.sqrt(horizon / n)
    j = np.arange(n + 1, dtype=np.float64)
    terminal = h * (2.0 * j - n)
    cond = [None] * (n + 1)
    cond[n] = _event_on_values(event, terminal)
    for k in range(n - 1, -1, -1):
        nxt = cond[k + 1]
        cond[k] = 0.5 * (nxt[1:] + nxt[:-1])
    return cond


def filtration_convergence_probe(
    coupled_sampler,
    n: int,
    event=None,
    n_paths: int = 200,
    seed: int = 0,
    resolution: int = 2,
) -> float:
    """Mean Skorokhod-J1 distance between the walk-filtration martingale
    E[1_A | walk history] and the Brownian-filtration martingale E[1_A | B],
    evaluated along coupled paths from `coupled_sampler(n, seed_i)`.

    The event A is a 0/1 functional of the terminal value of each process
    (default: terminal value > 0, whose Brownian martingale has the closed
    form Phi(B_t / sqrt(T - t)); at t = T the indicator itself is used).
    """
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError("n must be a power of 2")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    seeds = np.random.SeedSequence(seed).generate_state(n_paths)

    first = coupled_sampler(n, int(seeds[0]))
    horizon = first.walk.horizon
    cond = _tree_martingale_table(event, n, horizon)
    limit_grid = uniform_grid(horizon, LIMIT_GRID_POINTS)
    walk_grid = uniform_grid(horizon, n + 1)

    distances = np.empty(n_paths)
    coupled = first
    for i in range(n_paths):
        if i > 0:
            coupled = coupled_sampler(n, int(seeds[i]))
        ups = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(coupled.signs > 0, out=ups[1:])
        tree_vals = np.array([cond[k][ups[k]] for k in range(n + 1)])
        tree_path = CadlagPath(walk_grid, tree_vals)
        b = coupled.brownian.evaluate(limit_grid.points)
        limit_path = CadlagPath(limit_grid, _limit_martingale(event, limit_grid.points, b, horizon))
        distances[i] = skorokhod_j1_distance(tree_path, limit_path, resolution)
    return float(np.mean(distances))
