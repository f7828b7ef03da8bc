"""Time grids, discrete paths, two-parameter fields and Hölder diagnostics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend
from .errors import EstimationFailure, InvalidArgument


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time points ``0 = t_0 < ... < t_n = T``."""

    points: np.ndarray
    uniform: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidArgument("a grid needs at least two points")
        if pts[0] != 0.0:
            raise InvalidArgument("grids start at t_0 = 0")
        if not np.all(np.diff(pts) > 0):
            raise InvalidArgument("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def n(self) -> int:
        """Number of cells."""
        return self.points.size - 1

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.points)))

    def __len__(self):
        return self.points.size

    def coarsen(self, step: int) -> "TimeGrid":
        """Keep every ``step``-th point; ``step`` must divide ``n``."""
        if step < 1 or self.n % step:
            raise InvalidArgument(f"step {step} does not divide {self.n} cells")
        return TimeGrid(self.points[::step], self.uniform)

    def same_as(self, other: "TimeGrid") -> bool:
        return self.points.shape == other.points.shape and np.array_equal(self.points, other.points)


def make_uniform_grid(T: float, n: int) -> TimeGrid:
    if not T > 0:
        raise InvalidArgument(f"horizon must be positive, got {T}")
    if int(n) != n or n < 1:
        raise InvalidArgument(f"need at least one cell, got n={n}")
    n = int(n)
    pts = np.arange(n + 1, dtype=float) * (T / n)
    pts[-1] = T
    return TimeGrid(pts, uniform=True)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Values on a grid; ``values`` has shape ``(n + 1, *value_shape)``.

    ``report`` optionally carries the sewing report of the computation that
    produced the path.
    """

    grid: TimeGrid
    values: np.ndarray
    report: object = field(default=None, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != len(self.grid):
            raise InvalidArgument(
                f"{vals.shape[0]} values for a grid of {len(self.grid)} points")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgument("path values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.values.shape[1:]))

    @property
    def value_shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def flat(self) -> np.ndarray:
        return self.values.reshape(self.values.shape[0], -1)


def increment(path: SamplePath, i, j) -> np.ndarray:
    i = np.asarray(i)
    j = np.asarray(j)
    npts = len(path.grid)
    if np.any(i < 0) or np.any(j >= npts) or np.any(j < 0) or np.any(i >= npts):
        raise InvalidArgument("index out of range")
    if np.any(i > j):
        raise InvalidArgument("increments need i <= j")
    return path.values[j] - path.values[i]


class Germ:
    """A two-parameter field ``(i, j) -> A_{t_i, t_j}`` on grid indices.

    ``fn`` receives integer arrays ``i <= j`` of equal length and returns an
    array whose leading axis runs over the pairs.  Diagonal pairs are forced
    to zero.
    """

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], grid: TimeGrid):
        self.fn = fn
        self.grid = grid

    def __call__(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.intp))
        j = np.atleast_1d(np.asarray(j, dtype=np.intp))
        out = np.asarray(self.fn(i, j), dtype=float)
        diag = i == j
        if diag.any():
            out = out.copy()
            out[diag] = 0.0
        return out

    def __sub__(self, other: "Germ") -> "Germ":
        return Germ(lambda i, j: self(i, j) - other(i, j), self.grid)

    def __add__(self, other: "Germ") -> "Germ":
        return Germ(lambda i, j: self(i, j) + other(i, j), self.grid)


TwoParamField = Germ


def additive_germ(path: SamplePath) -> Germ:
    vals = path.values
    return Germ(lambda i, j: vals[j] - vals[i], path.grid)


def delta(A: Germ, i, u, j) -> np.ndarray:
    """``A_{s,t} - A_{s,u} - A_{u,t}`` for index triples ``i <= u <= j``."""
    i, u, j = (np.atleast_1d(np.asarray(a, dtype=np.intp)) for a in (i, u, j))
    if np.any(i > u) or np.any(u > j):
        raise InvalidArgument("delta needs i <= u <= j")
    return A(i, j) - A(i, u) - A(u, j)


def dyadic_pairs(n: int, all_offsets: bool = True):
    """Index pairs ``(i, i + 2**k)``.

    With ``all_offsets`` every start index is used, otherwise only starts
    that are multiples of the span (the dyadic intervals themselves).
    """
    ii, jj = [], []
    h = 1
    while h <= n:
        step = 1 if all_offsets else h
        start = np.arange(0, n - h + 1, step)
        ii.append(start)
        jj.append(start + h)
        h *= 2
    return np.concatenate(ii), np.concatenate(jj)


def _pair_norms(flat: np.ndarray, i, j) -> np.ndarray:
    diff = flat[j] - flat[i]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def holder_seminorm(path: SamplePath, alpha: float, pair_budget: int = 0) -> float:
    """Discrete ``sup |f_t - f_s| / (t - s)**alpha``.

    All pairs are used when ``pair_budget >= n**2``; otherwise the sup runs
    over dyadic spans with every offset.
    """
    if not 0 < alpha <= 1:
        raise InvalidArgument(f"alpha must lie in (0, 1], got {alpha}")
    flat = path.flat()
    t = path.times
    n = path.grid.n
    if pair_budget >= n * n:
        best = 0.0
        for h in range(1, n + 1):
            inc = np.sqrt(np.sum((flat[h:] - flat[:-h]) ** 2, axis=1))
            best = max(best, float(np.max(inc / (t[h:] - t[:-h]) ** alpha)))
        return best
    return float(_backend.dyadic_sup(flat[None], t, alpha)[0])


def estimate_holder_exponent(path: SamplePath) -> float:
    """Weighted log-log slope of median second-order increments against dyadic lags.

    Lags ``2**k`` for ``k`` in ``[2, log2(n) - 4]``.  The increments
    ``x_{t+2h} - 2 x_{t+h} + x_t`` scale like ``h^H`` for fBm and, unlike
    first-order ones, are short-range dependent for every ``H < 1``, so the
    median over offsets at lag ``h`` has spread of order ``sqrt(h / n)``; each
    lag is weighted by the inverse of that spread.  The median makes the
    estimate insensitive to isolated large increments.  Second differences
    cancel affine parts, so the estimate is capped at 1 and a path whose
    second differences vanish against its first differences gets exactly 1.
    """
    n = path.grid.n
    if n < 64:
        raise InvalidArgument("need at least 64 cells")
    flat = path.flat()
    t = path.times
    kmax = int(np.floor(np.log2(n))) - 4
    lags, sizes, weights = [], [], []
    affine = True
    for k in range(2, kmax + 1):
        h = 2 ** k
        first = np.median(np.sqrt(np.sum((flat[h:] - flat[:-h]) ** 2, axis=1)))
        if first <= 0:
            raise EstimationFailure("degenerate path: zero median increment")
        inc = np.sqrt(np.sum((flat[2 * h:] - 2 * flat[h:-h] + flat[:-2 * h]) ** 2, axis=1))
        med = np.median(inc)
        affine = affine and med <= 1e-10 * first
        lags.append(np.median(t[h:] - t[:-h]))
        sizes.append(max(med, 1e-300))
        weights.append(np.sqrt(inc.size / h))
    if len(lags) < 2:
        raise EstimationFailure("too few lags for a regression")
    if affine:
        return 1.0
    slope, _ = np.polyfit(np.log(lags), np.log(sizes), 1, w=weights)
    return float(min(slope, 1.0))


def write_path_csv(path: SamplePath, filename) -> None:
    flat = path.flat()
    header = ["t"] + [f"x{k}" for k in range(flat.shape[1])]
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, row in zip(path.times, flat):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_path_csv(filename, uniform: bool = False) -> SamplePath:
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    grid = TimeGrid(data[:, 0], uniform=uniform)
    return SamplePath(grid, data[:, 1:])
