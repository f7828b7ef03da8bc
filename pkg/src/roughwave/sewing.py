"""Sewing of two-parameter germs and Monte Carlo checks of germ hypotheses."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import DivergenceWarning, InvalidArgument, PrecisionFailure
from .grids import Germ, SamplePath, TimeGrid

DIVERGENCE_RATIO = 1.0  # distances that do not shrink along the ladder


@dataclass
class RateFit:
    exponent: float
    constant: float
    spans: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stderr: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        out = {"exponent": _jsonable(self.exponent), "constant": _jsonable(self.constant),
               "levels": self.spans.tolist(), "values": self.values.tolist(),
               "residuals": self.residuals.tolist()}
        if self.stderr is not None:
            out["stderr"] = self.stderr.tolist()
        return out


def _jsonable(x):
    x = float(x)
    return "inf" if np.isinf(x) else x


@dataclass
class SewingReport:
    """Outcome of sewing a germ along a dyadic ladder.

    ``level_sums[k]`` holds the Riemann sums over ``[0, t]`` for the level-k
    partition points; ``distances[k]`` is the sup distance between levels
    ``k`` and ``k + 1`` on the level-k points.
    """

    limit: SamplePath
    level_sums: list
    steps: list
    distances: np.ndarray
    decay: float
    rate: Optional[RateFit] = None
    diverged: bool = False

    @property
    def cauchy_gap(self) -> float:
        return float(self.distances[-1]) if self.distances.size else 0.0

    def to_dict(self) -> dict:
        out = {"distances": self.distances.tolist(), "decay": float(self.decay),
               "steps": [int(s) for s in self.steps], "diverged": self.diverged}
        if self.rate is not None:
            out["rate"] = self.rate.to_dict()
        return out


def riemann_sums(germ: Germ, idx: np.ndarray) -> np.ndarray:
    """Cumulative sums of the germ over the partition ``idx``; first entry 0."""
    idx = np.asarray(idx, dtype=np.intp)
    A = germ(idx[:-1], idx[1:])
    out = np.zeros((idx.size,) + A.shape[1:])
    np.cumsum(A, axis=0, out=out[1:])
    return out


def _sup(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def _fit_decay(distances: np.ndarray, scale: float) -> float:
    """Geometric decay factor of the finer half of the ladder distances."""
    d = np.asarray(distances, dtype=float)
    k = max(3, d.size // 2)
    d = d[-k:]
    floor = 1e-13 * max(scale, 1.0)
    if np.all(d <= floor):
        return 0.0
    d = np.maximum(d, floor)
    if d.size == 1:
        return 0.0
    slope = np.polyfit(np.arange(d.size), np.log(d), 1)[0]
    return float(np.exp(slope))


def sew(germ: Germ, grid: TimeGrid, ladder_depth: int = 10, rate: bool = True,
        warn: bool = True) -> SewingReport:
    """Sew ``germ`` along dyadic partitions ending at the grid cells.

    Level ``k`` uses partition points every ``2**(ladder_depth - k)`` grid
    cells, so ``grid.n`` must be divisible by ``2**ladder_depth``.  The limit
    is the finest-level path of cumulative sums.
    """
    n = grid.n
    if ladder_depth < 0 or n % (2 ** ladder_depth):
        raise InvalidArgument(f"{n} cells are not divisible by 2**{ladder_depth}")
    sums, steps = [], []
    for k in range(ladder_depth + 1):
        step = 2 ** (ladder_depth - k)
        sums.append(riemann_sums(germ, np.arange(0, n + 1, step)))
        steps.append(step)
    dist = np.array([_sup(sums[k] - sums[k + 1][::2]) for k in range(ladder_depth)])
    scale = _sup(sums[-1])
    decay = _fit_decay(dist, scale) if dist.size else 0.0
    diverged = bool(decay > DIVERGENCE_RATIO)
    if diverged and warn:
        warnings.warn(f"Riemann sums are not Cauchy along the ladder (decay {decay:.3f})",
                      DivergenceWarning, stacklevel=2)
    limit = SamplePath(grid, sums[-1])
    fit = germ_rate(germ, grid) if rate and n >= 8 else None
    return SewingReport(limit, sums, steps, dist, decay, fit, diverged)


def midpoint_triples(n: int, span: int, budget: Optional[int] = None):
    """Triples ``(i, i + span/2, i + span)``; offsets thinned to ``budget``."""
    if span < 2 or span % 2:
        raise InvalidArgument("span must be even and at least 2")
    starts = np.arange(0, n - span + 1)
    if budget is not None and starts.size > budget:
        starts = starts[np.linspace(0, starts.size - 1, budget).round().astype(np.intp)]
        starts = np.unique(starts)
    return starts, starts + span // 2, starts + span


def fit_power_law(spans, values, drop: int = 2) -> RateFit:
    """Least squares of ``log values`` on ``log spans`` after dropping ``drop``
    levels at each end (when at least three levels remain)."""
    spans = np.asarray(spans, dtype=float)
    values = np.asarray(values, dtype=float)
    if drop > 0 and spans.size - 2 * drop >= 3:
        spans, values = spans[drop:-drop], values[drop:-drop]
    if spans.size < 2:
        raise InvalidArgument("need at least two levels to fit a rate")
    X = np.log(spans)
    Y = np.log(values)
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icpt)
    return RateFit(float(slope), float(np.exp(icpt)), spans, values, resid)


def _delta_norms(germ: Germ, i, u, j) -> np.ndarray:
    d = germ(i, j) - germ(i, u) - germ(u, j)
    return np.sqrt(np.sum(d.reshape(d.shape[0], -1) ** 2, axis=1))


def germ_rate(germ: Germ, grid: TimeGrid, triple_budget: int = 256) -> RateFit:
    """Fit ``max |delta A_{s,u,t}| ~ C (t - s)^{1 + eps}`` across dyadic spans.

    Triples use the midpoint, which satisfies ``min(u-s, t-u) >= (t-s)/3``.
    Returns an infinite exponent when every defect is at round-off level.
    """
    n = grid.n
    t = grid.points
    spans, vals = [], []
    scale = 0.0
    span = 2
    while span <= n:
        i, u, j = midpoint_triples(n, span, triple_budget)
        dn = _delta_norms(germ, i, u, j)
        a = germ(i, j)
        scale = max(scale, _sup(a))
        spans.append(float(np.max(t[j] - t[i])))
        vals.append(float(dn.max()))
        span *= 2
    vals = np.array(vals)
    spans = np.array(spans)
    keep = vals > 1e-12 * max(scale, 1.0)
    if not keep.any():
        return RateFit(np.inf, 0.0, spans, vals, np.zeros(0))
    return fit_power_law(spans[keep], vals[keep])


class GermFamily(Protocol):
    """Random germs indexed by a seed, with freeze-and-resample conditioning."""

    grid: TimeGrid

    def germ(self, seed: int) -> Germ:
        ...

    def conditional_germ(self, seed: int, anchor_index: int, m: int, resample_seed: int) -> Germ:
        """Average of the germ over ``m`` resamples of the noise after the
        anchor, history frozen at ``seed``."""
        ...


ANCHOR_RULES = {
    "same": lambda i, j: i,
    "shifted": lambda i, j: i - (j - i),
}


@dataclass
class MomentReport:
    unconditional: RateFit
    conditional: Optional[RateFit] = None
    p: float = 2.0
    mc: int = 0

    def to_dict(self) -> dict:
        out = {"p": self.p, "mc": self.mc, "unconditional": self.unconditional.to_dict()}
        if self.conditional is not None:
            out["conditional"] = self.conditional.to_dict()
        return out


def _lp_with_stderr(samples: np.ndarray, p: float):
    """``(E|X|^p)^{1/p}`` and its delta-method standard error, per column."""
    a = np.abs(samples) ** p
    mean = a.mean(axis=0)
    se_mean = a.std(axis=0, ddof=1) / np.sqrt(a.shape[0])
    norm = mean ** (1.0 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(mean > 0, norm * se_mean / (p * mean), 0.0)
    return norm, se, se_mean, mean


def stochastic_germ_moments(family: GermFamily, p: float = 2.0, mc: int = 1000,
                            conditional: Optional[str] = None, inner: int = 64,
                            triples_per_span: int = 4, min_span: int = 4,
                            seed: int = 0, max_rel_se: float = 0.3) -> MomentReport:
    """Monte Carlo ``L^p`` norms of ``delta A`` and of ``E[delta A | F_v]``.

    For each dyadic span a few midpoint triples are drawn; the norm of a
    span is the maximum over its triples.  ``conditional`` selects the anchor
    rule ``v(s, t)``: ``"same"`` (v = s) or ``"shifted"`` (v = s - (t - s));
    triples whose anchor would fall before 0 are skipped.
    """
    if mc < 2:
        raise InvalidArgument("need mc >= 2")
    grid = family.grid
    n, t = grid.n, grid.points
    rule = ANCHOR_RULES.get(conditional) if conditional else None
    if conditional and rule is None:
        raise InvalidArgument(f"unknown anchor rule {conditional!r}")
    spans, triples = [], []
    span = max(2, min_span)
    while span <= n:
        i, u, j = midpoint_triples(n, span, triples_per_span)
        if rule is not None:
            ok = rule(i, j) >= 0
            i, u, j = i[ok], u[ok], j[ok]
        if i.size:
            spans.append(span)
            triples.append((i, u, j))
        span *= 2
    if not spans:
        raise InvalidArgument("grid too small for the requested spans")

    def collect(make_delta):
        out = [np.empty((mc, tr[0].size)) for tr in triples]
        for r in range(mc):
            for k, tr in enumerate(triples):
                out[k][r] = make_delta(r, k, tr)
        return out

    def uncond_delta(r, k, tr):
        g = family.germ(seed + r)
        return _delta_norms(g, *tr)

    def cond_delta(r, k, tr):
        i, u, j = tr
        vals = np.empty(i.size)
        for q in range(i.size):
            v = int(rule(i[q], j[q]))
            g = family.conditional_germ(seed + r, v, inner, 7919 * (seed + r) + 31 * k + q)
            vals[q] = _delta_norms(g, i[q:q + 1], u[q:q + 1], j[q:q + 1])[0]
        return vals

    def summarise(samples):
        norms, ses, errs = [], [], []
        for smp in samples:
            norm, se, se_mean, mean = _lp_with_stderr(smp, p)
            best = int(np.argmax(norm))
            norms.append(norm[best])
            ses.append(se[best])
            errs.append(se[best] / norm[best] if norm[best] > 0 else 0.0)
        width = np.array([float(np.max(t[tr[2]] - t[tr[0]])) for tr in triples])
        norms = np.array(norms)
        if np.all(norms <= 1e-14):
            return RateFit(np.inf, 0.0, width, norms, np.zeros(0), np.array(ses))
        bad = [e for e, v in zip(errs, norms) if v > 1e-14 and e > max_rel_se]
        if bad:
            raise PrecisionFailure(
                f"Monte Carlo standard error {max(bad):.2f} exceeds {max_rel_se} of the estimate")
        keep = norms > 1e-14
        fit = fit_power_law(width[keep], norms[keep])
        fit.stderr = np.array(ses)[keep]
        return fit

    unc = summarise(collect(uncond_delta))
    cond = summarise(collect(cond_delta)) if rule is not None else None
    return MomentReport(unc, cond, p, mc)


class VolterraGermFamily:
    """Germs built from Volterra fBm samples.

    ``local`` maps a batch of paths ``(m, n+1, d2)`` and index arrays to germ
    values of shape ``(m, pairs, ...)``; the germ is the batch mean, which is
    a single sample for the unconditional draw and the resample average for
    the conditional one.
    """

    def __init__(self, params, grid: TimeGrid,
                 local: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]):
        from . import fbm
        self._fbm = fbm
        self.params = params
        self.grid = grid
        self.local = local

    def _dW(self, seed):
        n, d2 = self.grid.n, self.params.d2
        dt = self.grid.horizon / n
        return np.random.default_rng(seed).standard_normal((1, n, d2)) * np.sqrt(dt)

    def germ(self, seed: int) -> Germ:
        dW = self._dW(seed)
        Y, Bt = self._fbm.split_increments(self.params.H, self.grid, dW, 0)
        B = Y + Bt
        return Germ(lambda i, j: self.local(B, i, j).mean(axis=0), self.grid)

    def conditional_germ(self, seed: int, anchor_index: int, m: int, resample_seed: int) -> Germ:
        dW = self._dW(seed)
        fresh = np.random.default_rng(resample_seed).standard_normal(
            (m,) + dW.shape[1:]) * np.sqrt(self.grid.horizon / self.grid.n)
        a = anchor_index
        fresh[:, :a] = dW[:, :a]
        B = sum(self._fbm.split_increments(self.params.H, self.grid, fresh, a))
        return Germ(lambda i, j: self.local(B, i, j).mean(axis=0), self.grid)
