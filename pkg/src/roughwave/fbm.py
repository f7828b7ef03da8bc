"""Fractional Brownian motion: samplers, the Volterra kernel, the history and
update decomposition and conditional resampling."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, linalg, special

from . import _backend
from .errors import InvalidArgument, NumericalFailure
from .grids import SamplePath, TimeGrid

VOLTERRA_MAX_CELLS = 4096
CHOLESKY_MAX_CELLS = 8192


@dataclass(frozen=True)
class HurstParams:
    H: float
    d2: int = 1

    def __post_init__(self):
        if not 1.0 / 3.0 < self.H < 1.0:
            raise InvalidArgument(f"H must lie in (1/3, 1), got {self.H}")
        if int(self.d2) != self.d2 or self.d2 < 1:
            raise InvalidArgument(f"d2 must be a positive integer, got {self.d2}")

    @property
    def regime(self) -> str:
        return "young" if self.H > 0.5 else "rough"


@dataclass(frozen=True, eq=False)
class FbmSample:
    """One fBm path; ``W`` is the driving Brownian motion for Volterra samples."""

    params: HurstParams
    B: SamplePath
    W: Optional[SamplePath] = None
    seed: Optional[int] = None
    sampler: str = "cholesky"

    @property
    def grid(self) -> TimeGrid:
        return self.B.grid


@dataclass(frozen=True, eq=False)
class HistoryUpdateSplit:
    """``B = Y + Btilde`` with anchor ``s = t_anchor``.

    Both paths live on the full grid.  Before the anchor ``Y = B`` and
    ``Btilde = 0``; after it ``Y`` collects the past noise cells and
    ``Btilde`` the future ones.
    """

    anchor_index: int
    anchor: float
    Y: SamplePath
    Btilde: SamplePath


# ---------------------------------------------------------------- covariance

def fbm_covariance(H: float, s, t):
    """``E[B_s B_t] = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2`` per component."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * H
    return 0.5 * (s ** h2 + t ** h2 - np.abs(t - s) ** h2)


def _check_grid(grid: TimeGrid, max_cells: int, name: str):
    if grid.n > max_cells:
        raise InvalidArgument(f"{name} sampler supports at most {max_cells} cells, got {grid.n}")


def _rng(seed):
    return np.random.default_rng(seed)


@lru_cache(maxsize=8)
def _cholesky_factor(H: float, points: tuple) -> np.ndarray:
    t = np.asarray(points[1:])
    cov = fbm_covariance(H, t[:, None], t[None, :])
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        cov = cov + 1e-12 * np.trace(cov) / t.size * np.eye(t.size)
        try:
            return linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalFailure("fBm covariance is not positive definite") from exc


def cholesky_paths(params: HurstParams, grid: TimeGrid, m: int, rng) -> np.ndarray:
    """``m`` exact fBm paths, shape ``(m, n + 1, d2)``."""
    _check_grid(grid, CHOLESKY_MAX_CELLS, "cholesky")
    n, d2 = grid.n, params.d2
    out = np.zeros((m, n + 1, d2))
    if params.H == 0.5:
        dt = np.sqrt(np.diff(grid.points))
        z = rng.standard_normal((m, d2, n))
        out[:, 1:] = np.cumsum(z * dt, axis=2).transpose(0, 2, 1)
        return out
    L = _cholesky_factor(params.H, tuple(grid.points))
    z = rng.standard_normal((n, m * d2))
    out[:, 1:] = (L @ z).reshape(n, m, d2).transpose(1, 0, 2)
    return out


def fgn_autocovariance(H: float, n: int, dt: float = 1.0) -> np.ndarray:
    k = np.arange(n, dtype=float)
    h2 = 2.0 * H
    return 0.5 * dt ** h2 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2 * k ** h2)


def hosking_paths(params: HurstParams, grid: TimeGrid, m: int, rng) -> np.ndarray:
    """Exact fBm on a uniform grid via the Durbin-Levinson recursion.

    O(n) memory and O(n^2) time per path; used for meshes beyond the
    Cholesky limit.
    """
    if not grid.uniform:
        raise InvalidArgument("the hosking sampler needs a uniform grid")
    n, d2 = grid.n, params.d2
    gamma = fgn_autocovariance(params.H, n, grid.horizon / n)
    z = rng.standard_normal((m * d2, n))
    inc = _backend.hosking_fgn(gamma, z)
    out = np.zeros((m, n + 1, d2))
    out[:, 1:] = np.cumsum(inc, axis=1).reshape(m, d2, n).transpose(0, 2, 1)
    return out


# ------------------------------------------------------------ Volterra kernel

def _kernel_raw(H: float, t, s):
    """Volterra kernel without the constant ``c_H``; vectorised, ``0 < s < t``."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if H == 0.5:
        return np.ones(np.broadcast(t, s).shape)
    z = -(t - s) / s
    if H > 0.5:
        a = H - 0.5
        # s^{1/2-H} int_s^t (u-s)^{H-3/2} u^{H-1/2} du, inner integral in closed form
        return (t - s) ** a / a * special.hyp2f1(0.5 - H, a, a + 1.0, z)
    b = H + 0.5
    first = (t / s) ** (H - 0.5) * (t - s) ** (H - 0.5)
    # -(H - 1/2) s^{1/2-H} int_s^t u^{H-3/2} (u-s)^{H-1/2} du
    second = (0.5 - H) * (t - s) ** b / (b * s) * special.hyp2f1(1.5 - H, b, b + 1.0, z)
    return first + second


def _sq_weight_exponents(H: float):
    """Endpoint exponents of ``K(t, r)**2`` in ``r``: at ``r = 0`` and ``r = t``."""
    return -abs(2 * H - 1), 2 * H - 1


def _quad_sq(fn, lo, hi, alpha, beta, eps=1e-13):
    """``int_lo^hi fn(r) dr`` where fn behaves like ``(r-lo)^alpha (hi-r)^beta``."""
    width = hi - lo

    def reduced(r):
        r = min(max(r, lo + eps * width), hi - eps * width)
        return fn(r) / ((r - lo) ** alpha * (hi - r) ** beta)

    val, _ = integrate.quad(reduced, lo, hi, weight="alg", wvar=(alpha, beta),
                            epsabs=1e-13, epsrel=1e-11, limit=200)
    return val


@lru_cache(maxsize=64)
def c_H(H: float) -> float:
    """Kernel constant fixed by ``int_0^1 K_H(1, r)^2 dr = 1``."""
    if H == 0.5:
        return 1.0
    alpha, beta = _sq_weight_exponents(H)
    z = _quad_sq(lambda r: float(_kernel_raw(H, 1.0, r)) ** 2, 0.0, 1.0, alpha, beta)
    return 1.0 / np.sqrt(z)


def volterra_kernel(H: float, t, s):
    """``K_H(t, s)`` for ``0 < s < t``, vectorised over arrays."""
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0) or np.any(s_arr >= t_arr):
        raise InvalidArgument("volterra_kernel needs 0 < s < t")
    if not 0.0 < H < 1.0:
        raise InvalidArgument(f"H must lie in (0, 1), got {H}")
    out = c_H(H) * _kernel_raw(H, t_arr, s_arr)
    return float(out) if out.ndim == 0 else out


def kernel_sq_integral(H: float, t: float, lo: float, hi: float) -> float:
    """``int_lo^hi K_H(t, r)^2 dr`` for ``0 <= lo < hi <= t``."""
    if not 0 <= lo < hi <= t:
        raise InvalidArgument("need 0 <= lo < hi <= t")
    if H == 0.5:
        return hi - lo
    a0, at = _sq_weight_exponents(H)
    alpha = a0 if lo == 0 else 0.0
    beta = at if hi == t else 0.0
    c = c_H(H)
    return _quad_sq(lambda r: (c * float(_kernel_raw(H, t, r))) ** 2, lo, hi, alpha, beta)


def rho_squared(H: float, s: float, t: float) -> float:
    """Variance of the update process, ``int_s^t K_H(t, r)^2 dr``."""
    if not 0 <= s < t:
        raise InvalidArgument(f"rho_squared needs 0 <= s < t, got ({s}, {t})")
    if H == 0.5:
        return t - s
    # homogeneity K(lt, ls) = l^{H-1/2} K(t, s) moves everything to t = 1
    return t ** (2 * H) * kernel_sq_integral(H, 1.0, s / t, 1.0)


@lru_cache(maxsize=4)
def _integer_cell_integrals(H: float, n: int) -> np.ndarray:
    """``I[i, j] = int_j^{j+1} K_H(i, r)^2 dr`` for ``j < i <= n``.

    Rows are rescaled so that ``sum_j I[i, j] = i^{2H}`` exactly.
    """
    out = np.zeros((n + 1, n))
    if H == 0.5:
        out[np.tril_indices(n + 1, -1, n)] = 1.0
        return out
    c2 = c_H(H) ** 2
    a0, at = _sq_weight_exponents(H)
    xl, wl = special.roots_legendre(8)
    xl, wl = 0.5 * (xl + 1.0), 0.5 * wl
    nj = 16
    # cell [0, 1] with singular weight r^{a0}
    x0, w0 = special.roots_jacobi(nj, 0.0, a0)
    r0, w0 = 0.5 * (x0 + 1.0), w0 * 2.0 ** (-1.0 - a0)
    # cell [i-1, i] with weight (i - r)^{at}
    x1, w1 = special.roots_jacobi(nj, at, 0.0)
    r1, w1 = 0.5 * (x1 + 1.0), w1 * 2.0 ** (-1.0 - at)

    out[1, 0] = 1.0
    for i in range(2, n + 1):
        ti = float(i)
        f0 = c2 * _kernel_raw(H, ti, r0) ** 2 * r0 ** (-a0)
        out[i, 0] = np.dot(w0, f0)
        rr = (i - 1) + r1
        f1 = c2 * _kernel_raw(H, ti, rr) ** 2 * (ti - rr) ** (-at)
        out[i, i - 1] = np.dot(w1, f1)
        if i > 2:
            j = np.arange(1, i - 1, dtype=float)[:, None]
            nodes = j + xl[None, :]
            vals = c2 * _kernel_raw(H, ti, nodes) ** 2
            out[i, 1:i - 1] = vals @ wl
        out[i, :i] *= ti ** (2 * H) / out[i, :i].sum()
    return out


def volterra_cell_weights(H: float, grid: TimeGrid) -> np.ndarray:
    """``Kbar[i, j] = sqrt(int_{cell j} K(t_i, r)^2 dr / dt)``, shape (n+1, n)."""
    if not grid.uniform:
        raise InvalidArgument("Volterra cell weights need a uniform grid")
    _check_grid(grid, VOLTERRA_MAX_CELLS, "volterra")
    n = grid.n
    dt = grid.horizon / n
    return np.sqrt(_integer_cell_integrals(float(H), n)) * dt ** (H - 0.5)


def volterra_paths(params: HurstParams, grid: TimeGrid, m: int, rng):
    """Return ``(B, dW, weights)`` with ``B`` of shape (m, n+1, d2)."""
    n, d2 = grid.n, params.d2
    dt = grid.horizon / n
    dW = rng.standard_normal((m, n, d2)) * np.sqrt(dt)
    if params.H == 0.5:
        B = np.zeros((m, n + 1, d2))
        B[:, 1:] = np.cumsum(dW, axis=1)
        return B, dW, None
    Kw = volterra_cell_weights(params.H, grid)
    B = np.einsum("ij,mjd->mid", Kw, dW, optimize=True)
    return B, dW, Kw


SAMPLERS = ("cholesky", "volterra", "hosking")


def sample_paths(params: HurstParams, grid: TimeGrid, m: int, seed=None,
                 sampler: str = "cholesky") -> np.ndarray:
    """Batch of ``m`` fBm paths, shape (m, n+1, d2)."""
    rng = _rng(seed)
    if sampler == "cholesky":
        return cholesky_paths(params, grid, m, rng)
    if sampler == "volterra":
        return volterra_paths(params, grid, m, rng)[0]
    if sampler == "hosking":
        return hosking_paths(params, grid, m, rng)
    raise InvalidArgument(f"unknown sampler {sampler!r}")


def sample_fbm_cholesky(params: HurstParams, grid: TimeGrid, seed=None) -> FbmSample:
    B = cholesky_paths(params, grid, 1, _rng(seed))[0]
    return FbmSample(params, SamplePath(grid, B), None, seed, "cholesky")


def sample_fbm_hosking(params: HurstParams, grid: TimeGrid, seed=None) -> FbmSample:
    B = hosking_paths(params, grid, 1, _rng(seed))[0]
    return FbmSample(params, SamplePath(grid, B), None, seed, "hosking")


def sample_fbm_volterra(params: HurstParams, grid: TimeGrid, seed=None) -> FbmSample:
    if not grid.uniform:
        raise InvalidArgument("the Volterra sampler needs a uniform grid")
    _check_grid(grid, VOLTERRA_MAX_CELLS, "volterra")
    B, dW, _ = volterra_paths(params, grid, 1, _rng(seed))
    W = np.zeros_like(B[0])
    W[1:] = np.cumsum(dW[0], axis=0)
    return FbmSample(params, SamplePath(grid, B[0]), SamplePath(grid, W), seed, "volterra")


def sample_fbm(params: HurstParams, grid: TimeGrid, seed=None, sampler="cholesky") -> FbmSample:
    if sampler == "cholesky":
        return sample_fbm_cholesky(params, grid, seed)
    if sampler == "volterra":
        return sample_fbm_volterra(params, grid, seed)
    if sampler == "hosking":
        return sample_fbm_hosking(params, grid, seed)
    raise InvalidArgument(f"unknown sampler {sampler!r}")


# -------------------------------------------------------- history / update

def split_increments(H: float, grid: TimeGrid, dW: np.ndarray, anchor_index: int):
    """Batch split of Volterra paths built from ``dW`` (shape (m, n, d2)).

    Returns ``(Y, Btilde)``, each (m, n+1, d2).
    """
    n = grid.n
    if not 0 <= anchor_index <= n:
        raise InvalidArgument(f"anchor index {anchor_index} outside [0, {n}]")
    a = anchor_index
    m, _, d2 = dW.shape
    if H == 0.5:
        W = np.zeros((m, n + 1, d2))
        W[:, 1:] = np.cumsum(dW, axis=1)
        Y = W.copy()
        Y[:, a:] = W[:, a:a + 1]
        return Y, W - Y
    Kw = volterra_cell_weights(H, grid)
    Y = np.einsum("ij,mjd->mid", Kw[:, :a], dW[:, :a], optimize=True)
    Bt = np.einsum("ij,mjd->mid", Kw[:, a:], dW[:, a:], optimize=True)
    return Y, Bt


def _driving_increments(sample: FbmSample) -> np.ndarray:
    if sample.W is None:
        raise InvalidArgument("the decomposition needs a Volterra sample carrying W")
    return np.diff(sample.W.values, axis=0)[None]


def decompose_history_update(sample: FbmSample, anchor_index: int) -> HistoryUpdateSplit:
    dW = _driving_increments(sample)
    grid = sample.grid
    Y, Bt = split_increments(sample.params.H, grid, dW, anchor_index)
    return HistoryUpdateSplit(anchor_index, float(grid.points[anchor_index]),
                              SamplePath(grid, Y[0]), SamplePath(grid, Bt[0]))


def resample_update(sample: FbmSample, anchor_index: int, m: int, seed=None) -> np.ndarray:
    """``m`` fresh copies of the update process, shape (m, n+1, d2).

    Adding the frozen history ``Y`` gives draws from the conditional law of
    ``B`` given the noise up to the anchor.
    """
    if m < 1:
        raise InvalidArgument("need at least one resample")
    _driving_increments(sample)
    grid = sample.grid
    n, d2 = grid.n, sample.params.d2
    if not 0 <= anchor_index <= n:
        raise InvalidArgument(f"anchor index {anchor_index} outside [0, {n}]")
    rng = _rng(seed)
    dt = grid.horizon / n
    dW = np.zeros((m, n, d2))
    dW[:, anchor_index:] = rng.standard_normal((m, n - anchor_index, d2)) * np.sqrt(dt)
    return split_increments(sample.params.H, grid, dW, anchor_index)[1]


def gaussian_abs_moment(p: float) -> float:
    """``E|N(0,1)|^p``."""
    return 2 ** (p / 2) * special.gamma((p + 1) / 2) / np.sqrt(np.pi)


def history_increment_variance(H: float, s: float, u: float, t: float) -> float:
    """``E[(Y^s_t - Y^s_u)^2] = int_0^s (K(t,r) - K(u,r))^2 dr``."""
    if H == 0.5 or s == 0:
        return 0.0
    c = c_H(H)
    a0, _ = _sq_weight_exponents(H)
    fn = lambda r: (c * float(_kernel_raw(H, t, r) - _kernel_raw(H, u, r))) ** 2
    return _quad_sq(fn, 0.0, s, a0, 0.0)


def y_moment_check(H: float, s: float, u: float, t: float, p: float = 2.0, mc: int = 0,
                   seed=None) -> dict:
    """``||Y^s_{u,t}||_{L^p}`` against ``(t-s)^H - (u-s)^H``.

    The moment is exact (Gaussian variance by kernel quadrature).  With
    ``mc > 0`` a Monte Carlo estimate from a discretised driving noise on
    ``[0, s]`` is added as a cross-check.
    """
    if not 0 <= s < u < t:
        raise InvalidArgument("need s < u < t")
    var = history_increment_variance(H, s, u, t)
    lhs = np.sqrt(var) * gaussian_abs_moment(p) ** (1.0 / p)
    bound = (t - s) ** H - (u - s) ** H
    rep = {"lhs": float(lhs), "bound": float(bound), "ratio": float(lhs / bound)}
    if mc > 0 and H != 0.5 and s > 0:
        cells = 512
        edges = np.linspace(0.0, s, cells + 1)
        xg, wg = special.roots_legendre(8)
        mid = 0.5 * (edges[:-1, None] + edges[1:, None]) + 0.5 * (edges[1] - edges[0]) * xg
        diff = volterra_kernel(H, t, mid) - volterra_kernel(H, u, mid)
        w = diff @ wg * 0.5  # cell average of the kernel difference
        z = _rng(seed).standard_normal((mc, cells)) * np.sqrt(s / cells)
        samples = np.abs(z @ w) ** p
        est = samples.mean()
        rep["lhs_mc"] = float(est ** (1.0 / p))
        rep["lhs_mc_stderr"] = float(samples.std(ddof=1) / np.sqrt(mc) * est ** (1.0 / p - 1) / p)
    return rep
