"""Young and rough integrals, controlled paths and the modified driver."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .errors import InvalidArgument
from .grids import Germ, SamplePath, dyadic_pairs, holder_seminorm
from .lift import RoughPath
from .sewing import sew


def max_depth(n: int, cap: int = 16) -> int:
    """Largest ``D <= cap`` with ``2**D`` dividing ``n``."""
    d = 0
    while d < cap and n % (2 ** (d + 1)) == 0:
        d += 1
    return d


def _resolve_depth(n, depth):
    return max_depth(n) if depth is None else depth


def _flat_norms(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1))


# -------------------------------------------------------------------- Young

def _contract(fv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Pairwise action of integrand values on increments.

    Matrices act on vectors; a length-one integrand is a scalar factor; an
    integrand of the increment's length pairs by the dot product.
    """
    if fv.ndim == 3:
        return np.einsum("kij,kj->ki", fv, dg)
    if fv.shape[1] == 1:
        return fv * dg
    if fv.shape[1] == dg.shape[1]:
        return np.sum(fv * dg, axis=1, keepdims=True)
    raise InvalidArgument(f"cannot pair integrand {fv.shape[1:]} with increment {dg.shape[1:]}")


def young_germ(f: SamplePath, g: SamplePath) -> Germ:
    fv = f.values
    gv = g.flat()
    return Germ(lambda i, j: _contract(fv[i], gv[j] - gv[i]), g.grid)


def young_integral(f: SamplePath, g: SamplePath, depth: Optional[int] = None) -> SamplePath:
    """Sewn limit of ``f_s g_{s,t}``; the sewing report rides on the result."""
    if not f.grid.same_as(g.grid):
        raise InvalidArgument("integrand and integrator must share the grid")
    rep = sew(young_germ(f, g), g.grid, _resolve_depth(g.grid.n, depth))
    return SamplePath(rep.limit.grid, rep.limit.values, report=rep)


# ---------------------------------------------------------- controlled paths

@dataclass(frozen=True, eq=False)
class ControlledPath:
    """``(Z, Z')`` controlled by ``reference``.

    ``value`` has shape ``(n+1, *S, d2)`` for an integrand acting on ``d2``
    dimensional increments, or any shape ``(n+1, *S)`` for a generic path;
    ``gubinelli`` has shape ``value.shape + (d2,)``.
    """

    value: np.ndarray
    gubinelli: np.ndarray
    reference: RoughPath
    beta: float = 0.5
    report: object = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.value, dtype=float)
        gd = np.asarray(self.gubinelli, dtype=float)
        d2 = self.reference.dimension
        if v.shape[0] != len(self.reference.grid):
            raise InvalidArgument("controlled path and reference must share the grid")
        if gd.shape != v.shape + (d2,):
            raise InvalidArgument(f"Gubinelli derivative needs shape {v.shape + (d2,)}, got {gd.shape}")
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "gubinelli", gd)

    @property
    def grid(self):
        return self.reference.grid

    def path(self) -> SamplePath:
        return SamplePath(self.grid, self.value)

    def remainder(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.intp))
        j = np.atleast_1d(np.asarray(j, dtype=np.intp))
        x = self.reference.first(i, j)
        return self.value[j] - self.value[i] - np.einsum("k...l,kl->k...", self.gubinelli[i], x)


def controlled(path: SamplePath, derivative, reference: RoughPath, beta: float = 0.5) -> ControlledPath:
    return ControlledPath(path.values, derivative, reference, beta)


def rough_germ(Z: ControlledPath, rp: RoughPath) -> Germ:
    """``Z_s g_{s,t} + Z'_s G_{s,t}`` with ``Z``'s last axis acting on increments."""
    zv, zd = Z.value, Z.gubinelli

    def fn(i, j):
        x = rp.first(i, j)
        G = rp.second(i, j)
        return (np.einsum("k...j,kj->k...", zv[i], x)
                + np.einsum("k...jl,klj->k...", zd[i], G))

    return Germ(fn, rp.grid)


def _check_reference(a: RoughPath, b: RoughPath):
    if a is not b and not (a.grid.same_as(b.grid) and np.array_equal(a.base.values, b.base.values)
                           and np.array_equal(a.cells, b.cells)):
        raise InvalidArgument("controlled path is not controlled by this rough path")


def rough_integral(Z: ControlledPath, rp: RoughPath, depth: Optional[int] = None) -> ControlledPath:
    """Rough integral; the result is controlled with Gubinelli derivative ``Z``."""
    _check_reference(Z.reference, rp)
    if Z.value.shape[-1] != rp.dimension:
        raise InvalidArgument("integrand's last axis must match the driver dimension")
    rep = sew(rough_germ(Z, rp), rp.grid, _resolve_depth(rp.grid.n, depth))
    return ControlledPath(rep.limit.values.reshape((len(rp.grid),) + Z.value.shape[1:-1]),
                          Z.value, rp, Z.beta, rep)


def remainder_sup(Z: ControlledPath, beta: Optional[float] = None) -> float:
    beta = Z.beta if beta is None else beta
    i, j = dyadic_pairs(Z.grid.n)
    dt = Z.grid.points[j] - Z.grid.points[i]
    return float(np.max(_flat_norms(Z.remainder(i, j)) / dt ** beta))


def controlled_norm(Z: ControlledPath, alpha: Optional[float] = None, beta: Optional[float] = None) -> float:
    """``[[Z']]_{C^{beta-alpha}} + sup |Z_{s,t} - Z'_s g_{s,t}| / |t-s|^beta`` on dyadic pairs."""
    alpha = Z.reference.alpha if alpha is None else alpha
    beta = Z.beta if beta is None else beta
    if not 0 < beta - alpha <= 1:
        raise InvalidArgument("need 0 < beta - alpha <= 1")
    gd = SamplePath(Z.grid, Z.gubinelli.reshape(Z.gubinelli.shape[0], -1))
    return holder_seminorm(gd, beta - alpha) + remainder_sup(Z, beta)


def remainder_rate(Z: ControlledPath, triple_budget: int = 256, stat: str = "max"):
    """Log-log fit of the remainder size against dyadic spans.

    ``stat`` selects the size per span: ``"max"`` over offsets or ``"rms"``,
    the root mean square over offsets.  The maximum over ``n/h`` offsets
    carries a ``sqrt(log(n/h))`` factor that biases the slope downwards; the
    root mean square estimates the second moment and has no such bias.
    """
    from .sewing import fit_power_law
    if stat not in ("max", "rms"):
        raise InvalidArgument(f"unknown statistic {stat!r}")
    n, t = Z.grid.n, Z.grid.points
    spans, vals = [], []
    h = 1
    while h <= n:
        i = np.arange(0, n - h + 1)
        if i.size > triple_budget:
            i = np.unique(np.linspace(0, n - h, triple_budget).round().astype(np.intp))
        r = _flat_norms(Z.remainder(i, i + h))
        spans.append(t[h] - t[0])
        vals.append(float(r.max() if stat == "max" else np.sqrt(np.mean(r ** 2))))
        h *= 2
    vals = np.asarray(vals)
    keep = vals > 1e-14
    return fit_power_law(np.asarray(spans)[keep], vals[keep])


# ------------------------------------------------------- modified driver

class ModifiedRoughDriver:
    """``(G, curlG)`` satisfying the modified Chen relation against ``reference``.

    ``G`` has shape (n+1, d1); ``curl_cells`` (n, d1, d2) with entry ``[i, l]``
    pairing ``G^i`` with ``B^l``.  ``F`` optionally records the Gubinelli
    derivative of ``G`` with respect to ``B`` (shape (n+1, d1, d2)).
    """

    def __init__(self, G, curl_cells, reference: RoughPath, F=None,
                 alpha: float = 0.35, gamma: float = 1.0, overrides: Optional[dict] = None):
        G = np.asarray(G, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        curl_cells = np.asarray(curl_cells, dtype=float)
        n = reference.grid.n
        d1, d2 = G.shape[1], reference.dimension
        if G.shape[0] != n + 1 or curl_cells.shape != (n, d1, d2):
            raise InvalidArgument("driver arrays do not match the reference grid")
        self.G = G
        self.curl_cells = curl_cells
        self.reference = reference
        self.F = None if F is None else np.asarray(F, dtype=float)
        self.alpha = alpha
        self.gamma = gamma
        self.overrides = dict(overrides or {})
        B = reference.base.flat()
        self._B = B
        self._Q = _backend.outer_prefix(np.ascontiguousarray(np.diff(G, axis=0)[None]),
                                        np.ascontiguousarray((B[:-1] - B[0])[None]),
                                        np.ascontiguousarray(curl_cells[None]))[0]

    @property
    def grid(self):
        return self.reference.grid

    @property
    def d1(self) -> int:
        return self.G.shape[1]

    def first(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.intp))
        j = np.atleast_1d(np.asarray(j, dtype=np.intp))
        return self.G[j] - self.G[i]

    def second(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=np.intp))
        j = np.atleast_1d(np.asarray(j, dtype=np.intp))
        B = self._B
        out = self._Q[j] - self._Q[i] - (self.G[j] - self.G[i])[:, :, None] * (B[i] - B[0])[:, None, :]
        if self.overrides:
            for k, (a, b) in enumerate(zip(i.tolist(), j.tolist())):
                if (a, b) in self.overrides:
                    out[k] = self.overrides[(a, b)]
        return out

    def corrupt_cell(self, k: int, amount: float = 1.0) -> "ModifiedRoughDriver":
        ov = dict(self.overrides)
        ov[(int(k), int(k) + 1)] = self.second(k, k + 1)[0] + amount
        return ModifiedRoughDriver(self.G, self.curl_cells, self.reference, self.F,
                                   self.alpha, self.gamma, ov)

    def scaled(self, c: float) -> "ModifiedRoughDriver":
        F = None if self.F is None else c * self.F
        return ModifiedRoughDriver(c * self.G, c * self.curl_cells, self.reference, F,
                                   self.alpha, self.gamma)


def modified_lift_piecewise_linear(G, reference: RoughPath, **kw) -> ModifiedRoughDriver:
    """Driver whose second level is the exact ``int B_{s,r} (x) dG_r`` of the
    piecewise-linear interpolants."""
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    dG = np.diff(G, axis=0)
    dB = np.diff(reference.base.flat(), axis=0)
    return ModifiedRoughDriver(G, 0.5 * dG[:, :, None] * dB[:, None, :], reference, **kw)


def modified_chen_defect(D: ModifiedRoughDriver, i, u, j) -> np.ndarray:
    """``curlG_{s,t} - curlG_{s,u} - curlG_{u,t} - B_{s,u} (x) G_{u,t}``."""
    i, u, j = (np.atleast_1d(np.asarray(a, dtype=np.intp)) for a in (i, u, j))
    if np.any(i > u) or np.any(u > j):
        raise InvalidArgument("need i <= u <= j")
    Bsu = D.reference.first(i, u)
    Gut = D.first(u, j)
    return D.second(i, j) - D.second(i, u) - D.second(u, j) - Gut[:, :, None] * Bsu[:, None, :]


def _driver_ratios(firsts, seconds, dt, alpha, gamma):
    return _flat_norms(firsts) / dt ** alpha + _flat_norms(seconds) / dt ** (gamma * alpha)


def driver_norm(D: ModifiedRoughDriver, alpha: Optional[float] = None,
                gamma: Optional[float] = None) -> float:
    alpha = D.alpha if alpha is None else alpha
    gamma = D.gamma if gamma is None else gamma
    i, j = dyadic_pairs(D.grid.n)
    dt = D.grid.points[j] - D.grid.points[i]
    return float(_driver_ratios(D.first(i, j), D.second(i, j), dt, alpha, gamma).max())


def modified_metric(D1: ModifiedRoughDriver, D2: ModifiedRoughDriver,
                    alpha: Optional[float] = None, gamma: Optional[float] = None) -> float:
    """``d_{alpha,gamma}`` over dyadic pairs."""
    if not D1.grid.same_as(D2.grid):
        raise InvalidArgument("drivers live on different grids")
    alpha = D1.alpha if alpha is None else alpha
    gamma = D1.gamma if gamma is None else gamma
    i, j = dyadic_pairs(D1.grid.n)
    dt = D1.grid.points[j] - D1.grid.points[i]
    return float(_driver_ratios(D1.first(i, j) - D2.first(i, j),
                                D1.second(i, j) - D2.second(i, j), dt, alpha, gamma).max())


def modified_germ(Z: ControlledPath, D: ModifiedRoughDriver) -> Germ:
    """``Z_u G_{u,v} + Z'_u curlG_{u,v}`` for a scalar controlled ``Z``."""
    zv = Z.value.reshape(Z.value.shape[0])
    zd = Z.gubinelli.reshape(Z.gubinelli.shape[0], -1)

    def fn(i, j):
        return zv[i, None] * D.first(i, j) + np.einsum("kl,kil->ki", zd[i], D.second(i, j))

    return Germ(fn, D.grid)


def integral_against_modified(Z: ControlledPath, D: ModifiedRoughDriver,
                              depth: Optional[int] = None) -> SamplePath:
    _check_reference(Z.reference, D.reference)
    if Z.value.size != Z.value.shape[0]:
        raise InvalidArgument("integrand against a modified driver must be scalar")
    rep = sew(modified_germ(Z, D), D.grid, _resolve_depth(D.grid.n, depth))
    return SamplePath(rep.limit.grid, rep.limit.values, report=rep)
