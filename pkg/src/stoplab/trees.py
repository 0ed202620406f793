"""Recombining binomial trees: model construction, Snell-envelope backward
induction, optimal stopping rules, and exercise boundaries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .processes import BlackScholesParams
from .stopping import StoppingRule, StructuralError, _LevelDecisions

DISCOUNTING_MODES = ("none", "per_step", "continuous")

BOUND_RTOL = 1e-12
BOUND_ATOL = 1e-12


class ParameterError(ValueError):
    """Model parameters violate a numerical precondition (e.g. no-arbitrage)."""


@dataclass(frozen=True)
class BinomialModel:
    """n-step recombining tree: node (k, j) carries price S0 * u^j * d^(k-j).

    `step_rate` is the per-step accrual rho; when `p_star` is omitted it is
    computed from the no-arbitrage condition d < rho < u.  Degenerate trees
    (u == d) are allowed iff `p_star` is supplied explicitly.
    """

    n: int
    T: float
    u: float
    d: float
    step_rate: float
    S0: float
    p_star: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if self.n > 10_000:
            raise ParameterError(
                f"n={self.n} exceeds the supported ceiling of 10000 steps "
                "(whole-tree storage is quadratic in n)"
            )
        if self.T <= 0.0 or self.S0 <= 0.0 or self.step_rate <= 0.0:
            raise ParameterError("T, S0 and step_rate must be positive")
        if not 0.0 < self.d <= self.u:
            raise ParameterError("need 0 < d <= u")
        if self.p_star is None:
            if not self.d < self.step_rate < self.u:
                raise ParameterError(
                    "no-arbitrage violation: need d < step_rate < u, got "
                    f"d={self.d!r}, step_rate={self.step_rate!r}, u={self.u!r}"
                )
            object.__setattr__(
                self, "p_star", (self.step_rate - self.d) / (self.u - self.d)
            )
        elif not 0.0 <= self.p_star <= 1.0:
            raise ParameterError("p_star must lie in [0, 1]")

    def price_level(self, k: int) -> np.ndarray:
        """Prices at level k, ordered by up-move count j = 0..k."""
        j = np.arange(k + 1, dtype=np.float64)
        return self.S0 * np.power(self.u, j) * np.power(self.d, k - j)

    def step_time(self, k: int) -> float:
        return self.T if k == self.n else self.T * (k / self.n)


@dataclass(frozen=True)
class Payoff:
    """Bounded gain function g(t, x) with an explicit sup bound.

    discounting: "none", "per_step" (factor step_rate^-k at step k), or
    "continuous" (factor e^(-r t) with r read off the model's step_rate).
    `gain` should accept numpy arrays in x; scalar-only callables are handled
    by a slower fallback.
    """

    gain: Callable[[float, np.ndarray], np.ndarray]
    bound: float
    discounting: str = "none"

    def __post_init__(self):
        if not math.isfinite(self.bound) or self.bound < 0.0:
            raise ValueError("bound must be finite and non-negative")
        if self.discounting not in DISCOUNTING_MODES:
            raise ValueError(f"discounting must be one of {DISCOUNTING_MODES}")

    def step_factor(self, model: BinomialModel) -> float:
        """One-step discount factor applied to continuation values."""
        if self.discounting == "none":
            return 1.0
        if self.discounting == "per_step":
            return 1.0 / model.step_rate
        return math.exp(-(model.step_rate - 1.0))

    def gain_values(self, t: float, prices: np.ndarray, step: int) -> np.ndarray:
        """Gains at one tree level, with finiteness and bound enforcement."""
        vals = None
        try:
            out = self.gain(t, prices)
            arr = np.asarray(out, dtype=np.float64)
            if arr.shape == prices.shape:
                vals = arr
            elif arr.ndim == 0:
                vals = np.full(prices.shape, float(arr))
        except (TypeError, ValueError):
            vals = None
        if vals is None:
            vals = np.array([float(self.gain(t, float(x))) for x in prices])
        bad = ~np.isfinite(vals)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise ValueError(
                f"non-finite gain at node (k={step}, j={j}): "
                f"g({t!r}, {prices[j]!r}) = {vals[j]!r}"
            )
        limit = self.bound * (1.0 + BOUND_RTOL) + BOUND_ATOL
        if np.any(np.abs(vals) > limit):
            j = int(np.argmax(np.abs(vals)))
            raise ValueError(
                f"gain exceeds declared bound {self.bound!r} at node "
                f"(k={step}, j={j}): |{vals[j]!r}|"
            )
        return vals


def put_payoff(strike: float, discounting: str = "per_step") -> Payoff:
    """American-put gain (strike - x)^+, bounded by the strike."""
    if strike < 0.0:
        raise ValueError("strike must be non-negative")

    def gain(t, x):
        return np.maximum(strike - x, 0.0)

    return Payoff(gain=gain, bound=strike, discounting=discounting)


def constant_payoff(value: float, discounting: str = "none") -> Payoff:
    def gain(t, x):
        return np.full(np.shape(x), value, dtype=np.float64) if np.ndim(x) else value

    return Payoff(gain=gain, bound=abs(value), discounting=discounting)


def build_crr_model(params: BlackScholesParams, n: int) -> BinomialModel:
    """Binomial model with u = exp(sigma sqrt(T/n)), d = 1/u, accrual 1 + rT/n."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    u = math.exp(params.sigma * math.sqrt(params.T / n))
    d = 1.0 / u
    rho = 1.0 + params.r * params.T / n
    if not d < rho < u:
        raise ParameterError(
            "no-arbitrage violation: need d < 1 + r*T/n < u, got "
            f"d={d!r}, 1+r*T/n={rho!r}, u={u!r} (sigma too small vs r at n={n})"
        )
    return BinomialModel(n=n, T=params.T, u=u, d=d, step_rate=rho, S0=params.S0)


@dataclass
class SnellSolution:
    """Envelope values and stop flags for every tree node.

    envelope[k][j] is the value U(k, j); immediate[k][j] flags gain >=
    continuation (ties stop; at the terminal level the flag is always true).
    """

    model: BinomialModel
    payoff: Payoff
    envelope: tuple = field(repr=False)
    immediate: tuple = field(repr=False)
    root_value: float = 0.0

    def gain_level(self, k: int) -> np.ndarray:
        return self.payoff.gain_values(
            self.model.step_time(k), self.model.price_level(k), k
        )

    def continuation_level(self, k: int) -> np.ndarray:
        """Discounted one-step expectations at level k < n (recomputed)."""
        if not 0 <= k < self.model.n:
            raise ValueError("continuation defined for interior levels only")
        p = self.model.p_star
        delta = self.payoff.step_factor(self.model)
        nxt = self.envelope[k + 1]
        return delta * (p * nxt[1:] + (1.0 - p) * nxt[:-1])


def snell_envelope(model: BinomialModel, payoff: Payoff) -> SnellSolution:
    """Backward induction U(k) = max(gain, delta * E[U(k+1)]); O(n^2) time/space."""
    n = model.n
    p = model.p_star
    q = 1.0 - p
    delta = payoff.step_factor(model)
    envelope = [None] * (n + 1)
    immediate = [None] * (n + 1)

    g = payoff.gain_values(model.step_time(n), model.price_level(n), n)
    envelope[n] = g
    immediate[n] = np.ones(n + 1, dtype=bool)
    for k in range(n - 1, -1, -1):
        g = payoff.gain_values(model.step_time(k), model.price_level(k), k)
        nxt = envelope[k + 1]
        cont = delta * (p * nxt[1:] + q * nxt[:-1])
        envelope[k] = np.maximum(g, cont)
        immediate[k] = g >= cont
    return SnellSolution(
        model=model,
        payoff=payoff,
        envelope=tuple(envelope),
        immediate=tuple(immediate),
        root_value=float(envelope[0][0]),
    )


def optimal_rule(solution: SnellSolution) -> StoppingRule:
    """Minimal optimal rule: stop at the first node whose gain reaches the
    continuation value (ties stop); the terminal level always stops."""
    n = solution.model.n
    levels = tuple(np.asarray(solution.immediate[k], dtype=bool) for k in range(n))
    return StoppingRule(
        n=n,
        horizon=solution.model.T,
        space="markov",
        decisions=_LevelDecisions(levels),
    )


def rational_exercise_rule(solution: SnellSolution) -> StoppingRule:
    """Rule stopping at the first node where stopping is optimal AND the gain
    is strictly positive; paths that never meet both ride to the horizon.

    For nonnegative payoffs this attains the same value as `optimal_rule`:
    whenever the minimal rule stops at a worthless node its continuation value
    is also zero, so deferring costs nothing.  Unlike the minimal rule it never
    reports an early stop that a rational holder would decline to take."""
    n = solution.model.n
    levels = tuple(
        np.asarray(solution.immediate[k], dtype=bool) & (solution.gain_level(k) > 0.0)
        for k in range(n)
    )
    return StoppingRule(
        n=n,
        horizon=solution.model.T,
        space="markov",
        decisions=_LevelDecisions(levels),
    )


def stopping_time_on_path(rule: StoppingRule, signs) -> float:
    """Realized stop time k*T/n of a rule along one +-1 path (T if never early)."""
    signs = np.asarray(signs)
    if signs.shape != (rule.n,):
        raise ValueError(f"need exactly {rule.n} signs")
    if not np.all(np.abs(signs) == 1):
        raise ValueError("signs must be +-1")
    n = rule.n
    if rule.space == "markov":
        j = 0
        for k in range(n):
            stop = _lookup_decision(rule, (k, j))
            if stop:
                return k * rule.horizon / n
            if signs[k] > 0:
                j += 1
    else:
        prefix = ()
        for k in range(n):
            stop = _lookup_decision(rule, prefix)
            if stop:
                return k * rule.horizon / n
            prefix = prefix + (int(signs[k]),)
    return rule.horizon


def _lookup_decision(rule: StoppingRule, node) -> bool:
    try:
        return bool(rule.decisions[node])
    except KeyError:
        raise StructuralError(f"no decision for reachable node {node!r}") from None


def exercise_boundary(solution: SnellSolution):
    """Per step, the largest lattice price whose node stops (None if no node does).

    Requires the gain to be non-increasing in price at every step.
    """
    model = solution.model
    out = []
    for k in range(model.n + 1):
        prices = model.price_level(k)
        g = solution.gain_level(k)
        if np.any(np.diff(g) > 0.0):
            raise ParameterError(
                f"boundary undefined: gain increases with price at step {k}"
            )
        idx = np.nonzero(solution.immediate[k])[0]
        critical = float(prices[idx[-1]]) if len(idx) else None
        out.append((model.step_time(k), critical))
    return out


def write_snell_csv(solution: SnellSolution, fname: str) -> None:
    model = solution.model
    with open(fname, "w") as f:
        f.write("k,j,price,gain,continuation,envelope,immediate\n")
        for k in range(model.n + 1):
            prices = model.price_level(k)
            g = solution.gain_level(k)
            cont = solution.continuation_level(k) if k < model.n else None
            for j in range(k + 1):
                c = "" if cont is None else repr(float(cont[j]))
                f.write(
                    f"{k},{j},{float(prices[j])!r},{float(g[j])!r},{c},"
                    f"{float(solution.envelope[k][j])!r},"
                    f"{int(solution.immediate[k][j])}\n"
                )


def write_boundary_csv(solution: SnellSolution, fname: str) -> None:
    boundary = exercise_boundary(solution)
    with open(fname, "w") as f:
        f.write("k,t,critical_price\n")
        for k, (t, crit) in enumerate(boundary):
            c = "" if crit is None else repr(float(crit))
            f.write(f"{k},{float(t)!r},{c}\n")
