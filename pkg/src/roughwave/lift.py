"""Second-order lifts of discrete paths and their algebraic diagnostics."""
from __future__ import annotations

import csv
from typing import Optional

import numpy as np

from . import _backend
from .errors import InvalidArgument
from .fbm import HistoryUpdateSplit
from .grids import SamplePath, dyadic_pairs


def chen_prefix(x: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Batched prefix ``P_j = G_{0,j}`` from per-cell second levels.

    ``x`` has shape (m, n+1, p) and ``cells`` (m, n, p, p).  Uses
    ``P_{k+1} = P_k + x_{0,k} (x) dx_k + cells_k``.
    """
    x0k = x[:, :-1] - x[:, :1]
    dx = np.diff(x, axis=1)
    return _backend.outer_prefix(np.ascontiguousarray(x0k), np.ascontiguousarray(dx),
                                 np.ascontiguousarray(cells))


def geometric_cells(dx: np.ndarray) -> np.ndarray:
    """``dx (x) dx / 2`` for trailing-axis increments."""
    return 0.5 * dx[..., :, None] * dx[..., None, :]


class RoughPath:
    """A path with second-level iterated integrals, composed by Chen.

    Only per-cell second levels are stored; a prefix of ``G_{0,j}`` makes
    every pair evaluation O(1).  ``overrides`` maps index pairs to replacement
    second-level values and exists to build deliberately corrupted lifts.
    """

    def __init__(self, base: SamplePath, cells: np.ndarray, alpha: float = 0.5,
                 overrides: Optional[dict] = None):
        x = base.flat()
        d = x.shape[1]
        cells = np.asarray(cells, dtype=float)
        if cells.shape != (base.grid.n, d, d):
            raise InvalidArgument(f"cells need shape {(base.grid.n, d, d)}, got {cells.shape}")
        self.base = base
        self.cells = cells
        self.alpha = alpha
        self.overrides = dict(overrides or {})
        self._x = x
        self._prefix = chen_prefix(x[None], cells[None])[0]

    @property
    def grid(self):
        return self.base.grid

    @property
    def dimension(self) -> int:
        return self._x.shape[1]

    def first(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.intp))
        j = np.atleast_1d(np.asarray(j, dtype=np.intp))
        return self._x[j] - self._x[i]

    def second(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.intp))
        j = np.atleast_1d(np.asarray(j, dtype=np.intp))
        if np.any(i > j):
            raise InvalidArgument("second level needs i <= j")
        x = self._x
        out = (self._prefix[j] - self._prefix[i]
               - (x[i] - x[0])[:, :, None] * (x[j] - x[i])[:, None, :])
        if self.overrides:
            for k, (a, b) in enumerate(zip(i.tolist(), j.tolist())):
                if (a, b) in self.overrides:
                    out[k] = self.overrides[(a, b)]
        return out

    def with_override(self, i: int, j: int, value) -> "RoughPath":
        ov = dict(self.overrides)
        ov[(int(i), int(j))] = np.asarray(value, dtype=float)
        return RoughPath(self.base, self.cells, self.alpha, ov)

    def corrupt_cell(self, k: int, amount: float = 1.0) -> "RoughPath":
        """Shift the one-cell value ``G_{k,k+1}`` by ``amount`` in every entry,
        leaving all other pairs untouched (so Chen fails around cell k)."""
        val = self.second(k, k + 1)[0] + amount
        return self.with_override(k, k + 1, val)

    def scaled(self, c: float) -> "RoughPath":
        return RoughPath(SamplePath(self.grid, c * self.base.values), c * c * self.cells,
                         self.alpha)


def lift_from_cells(path: SamplePath, cells, alpha: float = 0.5) -> RoughPath:
    return RoughPath(path, cells, alpha)


def lift_piecewise_linear(path: SamplePath, alpha: float = 0.5) -> RoughPath:
    """Exact iterated integrals of the piecewise-linear interpolant."""
    return RoughPath(path, geometric_cells(np.diff(path.flat(), axis=0)), alpha)


def lift_ito(path: SamplePath, alpha: float = 0.5) -> RoughPath:
    """Lift with one-cell values ``dx (x) dx / 2 - dt I / 2``; Chen holds but
    the lift is not geometric."""
    dx = np.diff(path.flat(), axis=0)
    dt = np.diff(path.times)
    cells = geometric_cells(dx) - 0.5 * dt[:, None, None] * np.eye(dx.shape[1])
    return RoughPath(path, cells, alpha)


def _triple_arrays(i, u, j):
    i, u, j = (np.atleast_1d(np.asarray(a, dtype=np.intp)) for a in (i, u, j))
    if np.any(i > u) or np.any(u > j):
        raise InvalidArgument("need i <= u <= j")
    return i, u, j


def chen_defect(rp: RoughPath, i, u, j) -> np.ndarray:
    """``G_{s,t} - G_{s,u} - G_{u,t} - x_{s,u} (x) x_{u,t}``."""
    i, u, j = _triple_arrays(i, u, j)
    a = rp.first(i, u)
    b = rp.first(u, j)
    return rp.second(i, j) - rp.second(i, u) - rp.second(u, j) - a[:, :, None] * b[:, None, :]


def geometric_defect(rp: RoughPath, i, j) -> np.ndarray:
    """``Sym(G_{s,t}) - x_{s,t} (x) x_{s,t} / 2``."""
    G = rp.second(i, j)
    x = rp.first(i, j)
    return 0.5 * (G + G.transpose(0, 2, 1)) - 0.5 * x[:, :, None] * x[:, None, :]


def lift_update_process(rpB: RoughPath, split: HistoryUpdateSplit,
                        alpha: Optional[float] = None) -> RoughPath:
    """Lift of the update process ``Btilde = B - Y``.

    Per cell, ``BB - (x)-integrals of Y against B, B against Y and Y against
    Y``, each cross integral taken exactly for the piecewise-linear
    interpolants.  Cells before the anchor vanish.
    """
    if not rpB.grid.same_as(split.Y.grid):
        raise InvalidArgument("lift and split must share the grid")
    a = split.anchor_index
    dY = np.diff(split.Y.flat(), axis=0)
    dB = np.diff(rpB.base.flat(), axis=0)
    outer = lambda p, q: p[:, :, None] * q[:, None, :]
    cells = rpB.cells - 0.5 * outer(dY, dB) - 0.5 * outer(dB, dY) + 0.5 * outer(dY, dY)
    cells[:a] = 0.0
    return RoughPath(split.Btilde, cells, rpB.alpha if alpha is None else alpha)


def _flat_norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1))


def rough_path_norm(rp: RoughPath, alpha: float) -> float:
    """Sup over dyadic pairs of ``|x_{s,t}|/|t-s|^a + |G_{s,t}|/|t-s|^{2a}``."""
    if not 0 < alpha <= 0.5:
        raise InvalidArgument(f"alpha must lie in (0, 1/2], got {alpha}")
    i, j = dyadic_pairs(rp.grid.n)
    dt = rp.grid.points[j] - rp.grid.points[i]
    val = _flat_norm(rp.first(i, j)) / dt ** alpha + _flat_norm(rp.second(i, j)) / dt ** (2 * alpha)
    return float(val.max())


def rough_path_distance(coarse: RoughPath, fine: RoughPath, alpha: float) -> float:
    """Inhomogeneous distance on the dyadic pairs of ``coarse``.

    The grid of ``coarse`` must be a coarsening of the grid of ``fine``.
    """
    step = fine.grid.n // coarse.grid.n
    if step * coarse.grid.n != fine.grid.n or not np.allclose(
            fine.grid.points[::step], coarse.grid.points, rtol=0, atol=1e-14):
        raise InvalidArgument("coarse grid is not a coarsening of the fine grid")
    i, j = dyadic_pairs(coarse.grid.n)
    dt = coarse.grid.points[j] - coarse.grid.points[i]
    d1 = _flat_norm(coarse.first(i, j) - fine.first(step * i, step * j))
    d2 = _flat_norm(coarse.second(i, j) - fine.second(step * i, step * j))
    return float(np.max(d1 / dt ** alpha + d2 / dt ** (2 * alpha)))


def write_lift_csv(rp: RoughPath, filename) -> None:
    """Rows ``i, j, G_{i,j}`` flattened row-major, over dyadic pairs."""
    i, j = dyadic_pairs(rp.grid.n, all_offsets=False)
    G = rp.second(i, j).reshape(i.size, -1)
    d = rp.dimension
    header = ["i", "j"] + [f"g{a}{b}" for a in range(d) for b in range(d)]
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for a, b, row in zip(i, j, G):
            w.writerow([int(a), int(b)] + [repr(float(v)) for v in row])
