"""Stochastic path generators: Brownian samples, geometric Brownian motion,
the band-exit (Skorokhod-embedding) walk coupling, and walk-driven binomial
price paths."""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .paths import CadlagPath, TimeGrid, restrict, uniform_grid

# Refinement target: the driver step is subdivided until band_width^2 / step >= this.
# At 256 the per-step probability of an undetected double crossing is below e^-512
# and the mean detection lag per exit is ~h^2/512, i.e. a cumulative clock bias of
# about 0.2% of the horizon over all n steps.
TARGET_STEP_RATIO = 256.0
# Maximum number of band exits resolved inside a single driver step before deferring
# the remainder to the next step (the band reference moves, so nothing is lost).
MAX_CHAIN_DEPTH = 6

_UNIFORMITY_RTOL = 1e-9


class InsufficientDriverError(RuntimeError):
    """The driver path ended before the requested number of band exits."""


@dataclass(frozen=True)
class BlackScholesParams:
    """Geometric-Brownian market parameters.

    `mu` is the physical-measure drift and is ignored for risk-neutral paths.
    """

    S0: float
    r: float
    sigma: float
    T: float
    mu: float = 0.0

    def __post_init__(self):
        if self.S0 <= 0.0:
            raise ValueError("S0 must be positive")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.T <= 0.0:
            raise ValueError("T must be positive")


@dataclass(frozen=True)
class CouplingResult:
    """A walk coupled to a Brownian driver through successive band exits.

    brownian: the driver restricted to the walk horizon.
    walk: piecewise-constant path on the uniform grid {i*horizon/n} whose value
        after i steps is sqrt(horizon/n) * sum(signs[:i]).
    signs: +-1 per step, the exit directions.
    hitting_times: exit times of the driver (may exceed the walk horizon).
    """

    brownian: CadlagPath
    walk: CadlagPath
    signs: np.ndarray
    hitting_times: np.ndarray
    n: int

    def __post_init__(self):
        signs = np.asarray(self.signs, dtype=np.int8)
        hits = np.asarray(self.hitting_times, dtype=np.float64)
        if signs.shape != (self.n,) or hits.shape != (self.n,):
            raise ValueError("need exactly n signs and n hitting times")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be +-1")
        if not np.all(np.diff(hits) > 0.0):
            raise ValueError("hitting times must be strictly increasing")
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "hitting_times", hits)


def sample_brownian(T: float, points: int, seed: int) -> CadlagPath:
    """Standard Brownian path sampled on a uniform grid; deterministic per seed."""
    grid = uniform_grid(T, points)
    dt = T / (points - 1)
    rng = np.random.default_rng(seed)
    increments = rng.normal(0.0, np.sqrt(dt), points - 1)
    values = np.concatenate(([0.0], np.cumsum(increments)))
    return CadlagPath(grid, values)


def sample_black_scholes(
    params: BlackScholesParams, driver: CadlagPath, measure: str = "risk_neutral"
) -> CadlagPath:
    """Exact exponential solution S(t) = S0 exp((a - sigma^2/2) t + sigma B(t)).

    a is `params.mu` under the physical measure, `params.r` under the
    risk-neutral one.  The driver's initial value is taken as the origin, so
    S(0) = S0 for any driver.
    """
    if measure == "physical":
        a = params.mu
    elif measure == "risk_neutral":
        a = params.r
    else:
        raise ValueError(f"unknown measure {measure!r}")
    t = driver.grid.points
    b = driver.values - driver.values[0]
    vals = params.S0 * np.exp((a - 0.5 * params.sigma**2) * t + params.sigma * b)
    return CadlagPath(driver.grid, vals)


@njit(cache=True)
def _detect_exits(bvals, dt, h, nmax, uni):
    # Walk-centered band-exit detection.  Endpoint crossings are chained within a
    # step (the band re-centers after each exit); additionally, once per step, a
    # hidden within-step crossing is sampled from the exact Brownian-bridge
    # boundary-hitting probability so that detection lag does not dilate the
    # walk's clock.
    signs = np.empty(nmax, np.int8)
    hit_steps = np.empty(nmax, np.float64)
    ref = bvals[0]
    count = 0
    n_steps = len(bvals) - 1
    for k in range(n_steps):
        if count >= nmax:
            break
        x = bvals[k] - ref
        y = bvals[k + 1] - ref
        t0 = 0.0
        depth = 0
        while count < nmax and depth < MAX_CHAIN_DEPTH:
            crossed = False
            s = 0
            frac = 0.0
            if y >= h:
                s = 1
                frac = (h - x) / (y - x) if y > x else 1.0
                crossed = True
            elif y <= -h:
                s = -1
                frac = (-h - x) / (y - x) if y < x else 1.0
                crossed = True
            elif depth == 0:
                rem = 1.0 - t0
                pu = 1.0
                if (h - x) > 0.0 and (h - y) > 0.0:
                    pu = np.exp(-2.0 * (h - x) * (h - y) / (dt * rem))
                pd = 1.0
                if (h + x) > 0.0 and (h + y) > 0.0:
                    pd = np.exp(-2.0 * (h + x) * (h + y) / (dt * rem))
                u = uni[k]
                if u < pu:
                    s = 1
                    frac = 0.5
                    crossed = True
                elif u > 1.0 - pd:
                    s = -1
                    frac = 0.5
                    crossed = True
            if not crossed:
                break
            t0 = t0 + (1.0 - t0) * frac
            hit_steps[count] = k + t0
            signs[count] = s
            ref = ref + s * h
            count += 1
            x = 0.0
            y = bvals[k + 1] - ref
            depth += 1
    return signs[:count], hit_steps[:count]


def _refine_bridge(values: np.ndarray, dt: float, levels: int, rng) -> tuple:
    """Midpoint refinement of a uniform-grid path by Brownian-bridge sampling.

    Each level halves the step; the midpoint of a step of width w gets the exact
    conditional law N(average of endpoints, w/4).
    """
    v = values
    step = dt
    for _ in range(levels):
        m = len(v) - 1
        noise = rng.normal(0.0, np.sqrt(step / 4.0), m)
        v2 = np.empty(2 * m + 1)
        v2[0::2] = v
        v2[1::2] = 0.5 * (v[:-1] + v[1:]) + noise
        v = v2
        step = step / 2.0
    return v, step


def _embedding_rng(values: np.ndarray, n: int, horizon: float):
    # All auxiliary randomness (bridge refinement, hidden-crossing sampling) is a
    # deterministic function of the inputs, keeping the embedding a pure function.
    digest = hashlib.blake2b(digest_size=16)
    digest.update(np.ascontiguousarray(values, dtype=np.float64).tobytes())
    digest.update(struct.pack("<qd", n, horizon))
    key = int.from_bytes(digest.digest(), "little")
    return np.random.Generator(np.random.Philox(key=key))


def knight_embedding(brownian: CadlagPath, n: int, horizon: float | None = None) -> CouplingResult:
    """Couple an n-step symmetric walk to a Brownian driver by band exits.

    The walk steps are the successive first-exit directions of the driver from
    bands of half-width sqrt(horizon/n) centered at the previous exit level.  The
    walk lives on the uniform grid {i*horizon/n}; the driver may (and should)
    extend beyond the horizon so that all n exits are observed.

    Deterministic for a fixed (driver, n, horizon).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if horizon is None:
        horizon = brownian.horizon
    if not 0.0 < horizon <= brownian.horizon * (1.0 + 1e-12):
        raise ValueError("horizon must lie in (0, driver horizon]")
    pts = brownian.grid.points
    gaps = np.diff(pts)
    dt = gaps[0]
    if np.max(np.abs(gaps - dt)) > _UNIFORMITY_RTOL * dt:
        raise ValueError("driver must be sampled on a uniform grid")

    h = np.sqrt(horizon / n)
    levels = max(0, int(np.ceil(np.log2(TARGET_STEP_RATIO * dt / (h * h)))))
    rng = _embedding_rng(brownian.values, n, horizon)
    fine, dt_fine = _refine_bridge(brownian.values, dt, levels, rng)
    uni = rng.random(len(fine) - 1)
    signs, hit_steps = _detect_exits(fine, dt_fine, h, n, uni)
    if len(signs) < n:
        raise InsufficientDriverError(
            f"driver exhausted after {len(signs)} of {n} band exits of width "
            f"{h:.6g}; refine driver grid (finer sampling and/or a longer driver)"
        )
    hitting_times = hit_steps * dt_fine
    walk_vals = h * np.concatenate(([0], np.cumsum(signs, dtype=np.int64)))
    walk = CadlagPath(uniform_grid(horizon, n + 1), walk_vals)
    driver_out = brownian if brownian.horizon == horizon else restrict(brownian, horizon)
    return CouplingResult(
        brownian=driver_out, walk=walk, signs=signs, hitting_times=hitting_times, n=n
    )


def crr_path_from_signs(signs, params: BlackScholesParams, n: int) -> CadlagPath:
    """Binomial price path S0 * u^(net up-moves) on the uniform n-step grid,
    with u = exp(sigma sqrt(T/n)) and d = 1/u."""
    signs = np.asarray(signs)
    if signs.shape != (n,):
        raise ValueError("need exactly n signs")
    if not np.all(np.abs(signs) == 1):
        raise ValueError("signs must be +-1")
    u = np.exp(params.sigma * np.sqrt(params.T / n))
    net = np.concatenate(([0], np.cumsum(signs.astype(np.int64))))
    values = params.S0 * np.power(u, net.astype(np.float64))
    return CadlagPath(uniform_grid(params.T, n + 1), values)


def coupling_table(result: CouplingResult, crr: CadlagPath):
    """Merged-grid view (t, B, Bn, Sn) of a coupled triple."""
    t = np.union1d(result.brownian.grid.points, result.walk.grid.points)
    return t, result.brownian.evaluate(t), result.walk.evaluate(t), crr.evaluate(t)


def write_coupling_csv(result: CouplingResult, crr: CadlagPath, fname: str) -> None:
    t, b, bn, sn = coupling_table(result, crr)
    with open(fname, "w") as f:
        f.write("t,B,Bn,Sn\n")
        for row in zip(t, b, bn, sn):
            f.write(
                f"{float(row[0])!r},{float(row[1])!r},"
                f"{float(row[2])!r},{float(row[3])!r}\n"
            )
