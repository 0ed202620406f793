"""Cadlag step paths on [0, T]: evaluation, discretization, and path distances."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

HORIZON_RTOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sample times starting at 0; the last point is the horizon."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("time grid needs at least two points")
        if pts[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if not np.all(np.diff(pts) > 0.0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.points)))

    def __len__(self) -> int:
        return len(self.points)


def uniform_grid(horizon: float, points: int) -> TimeGrid:
    if points < 2:
        raise ValueError("need at least two grid points")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    return TimeGrid(np.linspace(0.0, horizon, points))


@dataclass(frozen=True)
class CadlagPath:
    """Right-continuous step path: value at t is the value at the last grid point <= t."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.grid.points.shape:
            raise ValueError("values and grid must have the same length")
        object.__setattr__(self, "values", vals)

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    def evaluate(self, t):
        """Value at time(s) t in [0, horizon]."""
        tt = np.asarray(t, dtype=np.float64)
        if np.any(tt < 0.0) or np.any(tt > self.horizon):
            raise ValueError(f"time outside [0, {self.horizon}]")
        idx = np.searchsorted(self.grid.points, tt, side="right") - 1
        out = self.values[idx]
        return float(out) if np.isscalar(t) else out


def constant_path(value: float, horizon: float) -> CadlagPath:
    return CadlagPath(TimeGrid(np.array([0.0, horizon])), np.array([value, value]))


def restrict(path: CadlagPath, horizon: float) -> CadlagPath:
    """The same step path viewed on the shorter interval [0, horizon]."""
    if not 0.0 < horizon <= path.horizon * (1.0 + HORIZON_RTOL):
        raise ValueError("restriction horizon outside (0, path horizon]")
    pts = path.grid.points
    keep = pts <= horizon
    new_pts = pts[keep]
    new_vals = path.values[keep]
    if new_pts[-1] < horizon:
        new_pts = np.append(new_pts, horizon)
        new_vals = np.append(new_vals, new_vals[-1])
    return CadlagPath(TimeGrid(new_pts), new_vals)


def _check_same_horizon(x: CadlagPath, y: CadlagPath) -> float:
    hx, hy = x.horizon, y.horizon
    if abs(hx - hy) > HORIZON_RTOL * max(1.0, abs(hx)):
        raise ValueError(f"paths have different horizons: {hx} vs {hy}")
    return min(hx, hy)


def discretize(path: CadlagPath, subdivision: TimeGrid) -> CadlagPath:
    """Freeze the path on a coarser grid.

    On [t_i, t_{i+1}) the result holds path(t_i); on the final segment up to and
    including the horizon it holds the value at the last subdivision point strictly
    before the horizon, so the terminal value is deliberately path(t_{k-1}), not
    path(T).
    """
    if abs(subdivision.horizon - path.horizon) > HORIZON_RTOL * max(1.0, path.horizon):
        raise ValueError("subdivision horizon must match the path horizon")
    vals = path.evaluate(subdivision.points).copy()
    vals[-1] = vals[-2]
    return CadlagPath(subdivision, vals)


def sup_distance(x: CadlagPath, y: CadlagPath) -> float:
    """Exact uniform distance between two step paths (evaluated on the merged grid)."""
    _check_same_horizon(x, y)
    xt, xv = x.grid.points, x.values
    yt, yv = y.grid.points, y.values
    ix = np.minimum(np.searchsorted(xt, yt, side="right") - 1, len(xt) - 1)
    e1 = np.max(np.abs(xv[ix] - yv))
    iy = np.minimum(np.searchsorted(yt, xt, side="right") - 1, len(yt) - 1)
    e2 = np.max(np.abs(xv - yv[iy]))
    return float(max(e1, e2))


@njit(cache=True)
def _segment_sup(xt, xv, yt, yv, t0, t1, a, b):
    # sup over [t0, t1) of |x(lam(t)) - y(t)| for lam linear with lam(t0)=a, lam(t1)=b.
    # Both paths are step functions, so the sup is attained at one of: t0, the y
    # breakpoints inside (t0, t1), or the preimages of x breakpoints inside (a, b).
    nx = len(xt)
    ny = len(yt)
    xi = np.searchsorted(xt, a, side="right") - 1
    yi = np.searchsorted(yt, t0, side="right") - 1
    best = abs(xv[xi] - yv[yi])
    slope = (b - a) / (t1 - t0)
    j = yi + 1
    while j < ny and yt[j] < t1:
        lam = a + (yt[j] - t0) * slope
        while xi + 1 < nx and xt[xi + 1] <= lam:
            xi += 1
        d = abs(xv[xi] - yv[j])
        if d > best:
            best = d
        j += 1
    i = np.searchsorted(xt, a, side="right")
    yi2 = np.searchsorted(yt, t0, side="right") - 1
    inv = (t1 - t0) / (b - a)
    while i < nx and xt[i] < b:
        t = t0 + (xt[i] - a) * inv
        while yi2 + 1 < ny and yt[yi2 + 1] <= t:
            yi2 += 1
        d = abs(xv[i] - yv[yi2])
        if d > best:
            best = d
        i += 1
    return best


@njit(cache=True)
def _j1_upper(xt, xv, yt, yv, m, horizon):
    # Min over piecewise-linear increasing time changes with m uniform knots,
    # values on a grid of quarter-steps (slopes in [1/4, 4]), of
    # max(sup |lam - id|, sup |x(lam(t)) - y(t)|).  Dynamic program over knot values.
    nvals = 4 * m + 1
    knots = np.empty(m + 1)
    for k in range(m + 1):
        knots[k] = k * horizon / m
    knots[m] = horizon
    vals = np.empty(nvals)
    for k in range(m):
        base = knots[k]
        step = (knots[k + 1] - base) / 4.0
        for q in range(4):
            vals[4 * k + q] = base + q * step
        vals[4 * k] = base  # knot values appear bitwise in the value grid
    vals[4 * m] = horizon

    inf = 1e300
    dp = np.full(nvals, inf)
    dp[0] = 0.0
    for k in range(m):
        t0 = knots[k]
        t1 = knots[k + 1]
        ndp = np.full(nvals, inf)
        rem = m - k - 1
        lo_next = 4 * m - 16 * rem
        hi_next = 4 * m - rem
        for u in range(nvals):
            c0 = dp[u]
            if c0 >= inf:
                continue
            for dv in range(1, 17):
                v = u + dv
                if v > 4 * m or v > hi_next:
                    break
                if v < lo_next:
                    continue
                seg = _segment_sup(xt, xv, yt, yv, t0, t1, vals[u], vals[v])
                cost = max(max(c0, seg), abs(vals[v] - t1))
                if cost < ndp[v]:
                    ndp[v] = cost
        dp = ndp
    end = abs(xv[len(xv) - 1] - yv[len(yv) - 1])
    return max(dp[4 * m], end)


def skorokhod_j1_distance(x: CadlagPath, y: CadlagPath, resolution: int = 2) -> float:
    """Upper approximation of the Skorokhod J1 distance between two step paths.

    Searches piecewise-linear increasing time changes (uniform knots, value grid of
    quarter knot steps, slopes within [1/4, 4]) for the smallest
    max(time distortion, matched uniform distance).  The identity change is always a
    candidate, so the result never exceeds sup_distance; the candidate family grows
    with `resolution`, so the result is non-increasing in it.  The reported value is
    the minimum over both orderings of the arguments, hence exactly symmetric.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    horizon = _check_same_horizon(x, y)
    best = sup_distance(x, y)
    for s in range(1, resolution + 1):
        m = 8 * s
        d_xy = _j1_upper(x.grid.points, x.values, y.grid.points, y.values, m, horizon)
        d_yx = _j1_upper(y.grid.points, y.values, x.grid.points, x.values, m, horizon)
        best = min(best, d_xy, d_yx)
    return float(best)


def write_path_csv(path: CadlagPath, fname: str) -> None:
    with open(fname, "w") as f:
        f.write("t,x\n")
        for t, v in zip(path.grid.points, path.values):
            f.write(f"{float(t)!r},{float(v)!r}\n")


def read_path_csv(fname: str) -> CadlagPath:
    data = np.genfromtxt(fname, delimiter=",", skip_header=1)
    if data.ndim == 1:
        data = data.reshape(1, -1)
    return CadlagPath(TimeGrid(data[:, 0]), data[:, 1])
