"""Adapted stopping rules on binomial trees, exhaustive enumeration at small
sizes, and randomized (finite-mixture) rules.

The enumeration-based value below is an oracle deliberately independent of the
backward-induction pricer: it propagates reach probabilities forward through
every admissible stop/continue assignment.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numba import njit

if TYPE_CHECKING:  # pragma: no cover - import only for annotations
    from .trees import BinomialModel, Payoff

MAX_MARKOV_N = 6
MAX_PATH_N = 4
WEIGHT_TOL = 1e-12
_PATH_RULE_VALUE_LIMIT = 22

RULE_SPACES = ("markov", "path_dependent")


class StructuralError(LookupError):
    """A rule lacks a decision at a reachable node."""


class _LevelDecisions(Mapping):
    """Array-backed markov decisions: level k holds k+1 stop/continue flags."""

    __slots__ = ("levels",)

    def __init__(self, levels):
        self.levels = tuple(np.asarray(a, dtype=bool) for a in levels)
        for k, a in enumerate(self.levels):
            if a.shape != (k + 1,):
                raise ValueError(f"level {k} must hold {k + 1} decisions")

    def __getitem__(self, node):
        k, j = node
        if 0 <= k < len(self.levels) and 0 <= j <= k:
            return bool(self.levels[k][j])
        raise KeyError(node)

    def __iter__(self):
        for k, a in enumerate(self.levels):
            for j in range(k + 1):
                yield (k, j)

    def __len__(self):
        m = len(self.levels)
        return m * (m + 1) // 2

    def level(self, k: int) -> np.ndarray:
        return self.levels[k]

    def __eq__(self, other):
        if isinstance(other, Mapping):
            return dict(self) == dict(other)
        return NotImplemented

    def __ne__(self, other):
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq


def _validate_dict_decisions(n: int, space: str, decisions: Mapping) -> None:
    for node, val in decisions.items():
        if not isinstance(val, (bool, np.bool_)):
            raise ValueError(f"decision at {node!r} must be a bool")
        if space == "markov":
            k, j = node
            ok = 0 <= k < n and 0 <= j <= k
        else:
            ok = isinstance(node, tuple) and len(node) < n and all(
                s in (-1, 1) for s in node
            )
        if not ok:
            raise ValueError(f"invalid interior node identifier {node!r}")


@dataclass(frozen=True)
class StoppingRule:
    """Stop/continue decision per interior node; terminal nodes always stop.

    Markov rules are keyed by (step, up_count); path-dependent rules by the
    tuple of signs observed so far (the root is the empty tuple).  Adaptedness
    is structural: a decision can only read its own node's history.
    """

    n: int
    horizon: float
    space: str
    decisions: Mapping

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.space not in RULE_SPACES:
            raise ValueError(f"space must be one of {RULE_SPACES}")
        if isinstance(self.decisions, dict):
            _validate_dict_decisions(self.n, self.space, self.decisions)


@dataclass(frozen=True)
class RandomizedRule:
    """Finite mixture of pure rules; weights on the probability simplex."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), rule) for w, rule in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        total = 0.0
        for w, rule in comps:
            if w < 0.0:
                raise ValueError("mixture weights must be non-negative")
            if not isinstance(rule, StoppingRule):
                raise ValueError("mixture components must be StoppingRule")
            total += w
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"mixture weights sum to {total!r}, not 1")
        object.__setattr__(self, "components", comps)


def _markov_bits(n: int) -> int:
    return n * (n + 1) // 2

def _path_bits(n: int) -> int:
    return (1 << n) - 1


def _check_enumerable(n: int, space: str) -> int:
    if space == "markov":
        bits = _markov_bits(n)
        if n > MAX_MARKOV_N:
            raise ValueError(
                f"markov enumeration supports n <= {MAX_MARKOV_N}; n={n} would "
                f"generate 2**{bits} = {2 ** bits} rules"
            )
    elif space == "path_dependent":
        bits = _path_bits(n)
        if n > MAX_PATH_N:
            raise ValueError(
                f"path-dependent enumeration supports n <= {MAX_PATH_N}; n={n} "
                f"would generate 2**{bits} = {2 ** bits} rules"
            )
    else:
        raise ValueError(f"space must be one of {RULE_SPACES}")
    return bits


def _prefix_of(h: int, k: int) -> tuple:
    return tuple(1 if (h >> (k - 1 - i)) & 1 else -1 for i in range(k))


def rule_from_mask(model: "BinomialModel", space: str, mask: int) -> StoppingRule:
    """The mask's bit b decides interior node b (nodes in lexicographic order,
    level-major); bit set = stop."""
    n = model.n
    bits = _check_enumerable(n, space)
    if not 0 <= mask < (1 << bits):
        raise ValueError(f"mask must lie in [0, 2**{bits})")
    decisions = {}
    if space == "markov":
        for k in range(n):
            base = _markov_bits(k)
            for j in range(k + 1):
                decisions[(k, j)] = bool((mask >> (base + j)) & 1)
    else:
        for k in range(n):
            base = _path_bits(k)
            for h in range(1 << k):
                decisions[_prefix_of(h, k)] = bool((mask >> (base + h)) & 1)
    return StoppingRule(n=n, horizon=model.T, space=space, decisions=decisions)


def enumerate_rules(model: "BinomialModel", space: str):
    """Yield every adapted rule exactly once (mask order, reproducible)."""
    bits = _check_enumerable(model.n, space)
    for mask in range(1 << bits):
        yield rule_from_mask(model, space, mask)


def _gain_table(model: "BinomialModel", payoff: "Payoff") -> np.ndarray:
    n = model.n
    g = np.zeros((n + 1, n + 1))
    for k in range(n + 1):
        g[k, : k + 1] = payoff.gain_values(model.step_time(k), model.price_level(k), k)
    return g


def _discount_vector(model: "BinomialModel", payoff: "Payoff") -> np.ndarray:
    delta = payoff.step_factor(model)
    disc = np.empty(model.n + 1)
    disc[0] = 1.0
    for k in range(1, model.n + 1):
        disc[k] = disc[k - 1] * delta
    return disc


def rule_value(model: "BinomialModel", payoff: "Payoff", rule: StoppingRule) -> float:
    """Expected discounted gain of a rule: forward propagation of reach
    probabilities under p_star, collecting mass at stopped nodes."""
    n = model.n
    if rule.n != n:
        raise ValueError(f"rule has n={rule.n}, model has n={n}")
    if abs(rule.horizon - model.T) > 1e-12 * max(1.0, abs(model.T)):
        raise ValueError("rule and model horizons differ")
    if rule.space == "path_dependent" and n > _PATH_RULE_VALUE_LIMIT:
        raise ValueError(
            f"path-dependent evaluation supports n <= {_PATH_RULE_VALUE_LIMIT}"
        )
    p = model.p_star
    q = 1.0 - p
    disc = _discount_vector(model, payoff)
    value = 0.0

    if rule.space == "markov":
        mass = np.zeros(1)
        mass[0] = 1.0
        fast = isinstance(rule.decisions, _LevelDecisions)
        for k in range(n):
            g = payoff.gain_values(model.step_time(k), model.price_level(k), k)
            nxt = np.zeros(k + 2)
            if fast:
                stops = rule.decisions.level(k)
                value += disc[k] * float(np.sum(np.where(stops, mass * g, 0.0)))
                cont = np.where(stops, 0.0, mass)
                nxt[:-1] += cont * q
                nxt[1:] += cont * p
            else:
                for j in range(k + 1):
                    mu = mass[j]
                    if mu == 0.0:
                        continue
                    if _decision(rule, (k, j)):
                        value += mu * disc[k] * g[j]
                    else:
                        nxt[j] += mu * q
                        nxt[j + 1] += mu * p
            mass = nxt
        g = payoff.gain_values(model.step_time(n), model.price_level(n), n)
        value += disc[n] * float(np.sum(mass * g))
        return float(value)

    g_tab = _gain_table(model, payoff)
    mass = {(): 1.0}
    for k in range(n):
        nxt = {}
        for prefix, mu in mass.items():
            if mu == 0.0:
                continue
            ups = sum(1 for s in prefix if s > 0)
            if _decision(rule, prefix):
                value += mu * disc[k] * g_tab[k, ups]
            else:
                nxt[prefix + (-1,)] = nxt.get(prefix + (-1,), 0.0) + mu * q
                nxt[prefix + (1,)] = nxt.get(prefix + (1,), 0.0) + mu * p
        mass = nxt
    for prefix, mu in mass.items():
        ups = sum(1 for s in prefix if s > 0)
        value += mu * disc[n] * g_tab[n, ups]
    return float(value)


def _decision(rule: StoppingRule, node) -> bool:
    try:
        return bool(rule.decisions[node])
    except KeyError:
        raise StructuralError(f"no decision for reachable node {node!r}") from None


@njit(cache=True)
def _brute_markov(n_rules, g, disc, p, n):
    best = -1.0e300
    q = 1.0 - p
    mass = np.zeros(n + 1)
    nxt = np.zeros(n + 1)
    for m in range(n_rules):
        for j in range(n + 1):
            mass[j] = 0.0
        mass[0] = 1.0
        val = 0.0
        for k in range(n):
            base = (k * (k + 1)) >> 1
            for j in range(k + 2):
                nxt[j] = 0.0
            for j in range(k + 1):
                mu = mass[j]
                if mu == 0.0:
                    continue
                if (m >> (base + j)) & 1:
                    val += mu * disc[k] * g[k, j]
                else:
                    nxt[j] += mu * q
                    nxt[j + 1] += mu * p
            for j in range(k + 2):
                mass[j] = nxt[j]
        for j in range(n + 1):
            mu = mass[j]
            if mu != 0.0:
                val += mu * disc[n] * g[n, j]
        if val > best:
            best = val
    return best


@njit(cache=True)
def _brute_path(n_rules, g, disc, pops, p, n):
    best = -1.0e300
    q = 1.0 - p
    size = 1 << n
    mass = np.zeros(size)
    nxt = np.zeros(size)
    for m in range(n_rules):
        for h in range(size):
            mass[h] = 0.0
        mass[0] = 1.0
        val = 0.0
        for k in range(n):
            width = 1 << k
            base = width - 1
            for h in range(2 * width):
                nxt[h] = 0.0
            for h in range(width):
                mu = mass[h]
                if mu == 0.0:
                    continue
                if (m >> (base + h)) & 1:
                    val += mu * disc[k] * g[k, pops[h]]
                else:
                    nxt[2 * h] += mu * q
                    nxt[2 * h + 1] += mu * p
            for h in range(2 * width):
                mass[h] = nxt[h]
        for h in range(size):
            mu = mass[h]
            if mu != 0.0:
                val += mu * disc[n] * g[n, pops[h]]
        if val > best:
            best = val
    return best


def brute_force_value(
    model: "BinomialModel", payoff: "Payoff", space: str = "markov"
) -> float:
    """Max of rule_value over every rule in the space (exhaustive, vectorized
    over rule masks inside a compiled kernel)."""
    bits = _check_enumerable(model.n, space)
    g = _gain_table(model, payoff)
    disc = _discount_vector(model, payoff)
    n_rules = 1 << bits
    if space == "markov":
        return float(_brute_markov(n_rules, g, disc, model.p_star, model.n))
    pops = np.array([bin(h).count("1") for h in range(1 << model.n)], dtype=np.int64)
    return float(_brute_path(n_rules, g, disc, pops, model.p_star, model.n))


def randomized_value(
    model: "BinomialModel", payoff: "Payoff", rule: RandomizedRule
) -> float:
    """Mixture value: weight-linear combination of component rule values."""
    return float(
        sum(w * rule_value(model, payoff, comp) for w, comp in rule.components)
    )
