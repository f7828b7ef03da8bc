"""Anisotropic heat semigroup, negative-order Hölder norms and numerical
checks of the semigroup regularisation estimates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import InvalidArgument, UnsupportedDimension

EIG_FLOOR = 1e-10


def _as_matrix(G, d: Optional[int] = None) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim == 0:
        G = G * np.eye(d or 1)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidArgument("conductance must be a square matrix")
    if not np.allclose(G, G.T, rtol=0, atol=1e-12):
        raise InvalidArgument("conductance must be symmetric")
    return G


def sqrt_spd(G) -> np.ndarray:
    """Symmetric square root; raises on eigenvalues below the floor."""
    G = _as_matrix(G)
    w, V = np.linalg.eigh(G)
    if w.min() < EIG_FLOOR:
        raise InvalidArgument(f"matrix is not positive definite (min eigenvalue {w.min():.3g})")
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True, eq=False)
class ConductanceMatrix:
    """SPD matrix with eigenvalues inside ``[1/c, c]``."""

    Gamma: np.ndarray
    c: float = 10.0

    def __post_init__(self):
        G = _as_matrix(self.Gamma)
        w = np.linalg.eigvalsh(G)
        if w.min() < 1.0 / self.c or w.max() > self.c:
            raise InvalidArgument(f"eigenvalues {w.min():.3g}..{w.max():.3g} outside [1/{self.c}, {self.c}]")
        object.__setattr__(self, "Gamma", G)

    @property
    def d(self) -> int:
        return self.Gamma.shape[0]


def heat_kernel(Gamma, x) -> np.ndarray:
    """Gaussian density with covariance ``Gamma``; ``x`` has trailing axis d."""
    G = _as_matrix(Gamma)
    d = G.shape[0]
    w = np.linalg.eigvalsh(G)
    if w.min() < EIG_FLOOR:
        raise InvalidArgument("heat kernel needs an SPD matrix")
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    q = np.einsum("...i,ij,...j->...", x, np.linalg.inv(G), x)
    return (2 * np.pi) ** (-d / 2) / np.sqrt(np.linalg.det(G)) * np.exp(-0.5 * q)


class ScalarField:
    """Vectorised evaluator ``x -> f(x)``; ``x`` has shape (..., d).

    ``gamma`` and ``bound`` record a declared Hölder class and seminorm
    bound.  Subclasses may override :meth:`semigroup` with an exact route.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], d: int = 1,
                 gamma: Optional[float] = None, bound: Optional[float] = None):
        self.fn = fn
        self.d = d
        self.gamma = gamma
        self.bound = bound

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return np.asarray(self.fn(x), dtype=float)

    def semigroup(self, Gamma, x, nodes: Optional[int] = None) -> np.ndarray:
        return gauss_hermite_semigroup(self, Gamma, x, nodes)


def constant_field(c: float, d: int = 1) -> ScalarField:
    return ScalarField(lambda x: np.full(x.shape[:-1], float(c)), d, gamma=np.inf, bound=0.0)


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def default_nodes(d: int) -> int:
    return 64 if d <= 2 else 24


def gauss_hermite_semigroup(f: ScalarField, Gamma, x, nodes: Optional[int] = None) -> np.ndarray:
    """``E[f(x + Gamma^{1/2} xi)]`` by tensor Gauss-Hermite quadrature."""
    d = f.d
    if d > 3:
        raise UnsupportedDimension(f"semigroup quadrature supports d <= 3, got {d}")
    G = _as_matrix(Gamma, d)
    if G.shape[0] != d:
        raise InvalidArgument("conductance and field dimensions differ")
    nodes = nodes or default_nodes(d)
    z, w = hermegauss(nodes)
    w = w / np.sqrt(2 * np.pi)
    grids = np.meshgrid(*([z] * d), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0).ravel()
    S = sqrt_spd(G)
    shift = Z @ S.T
    x = _points(x, d)
    vals = f(x[..., None, :] + shift)
    # centring on one node keeps constants exact
    ref = vals[..., :1]
    return ref[..., 0] + (vals - ref) @ (W / W.sum())


def apply_semigroup(f: ScalarField, Gamma, x, nodes: Optional[int] = None) -> np.ndarray:
    """``(P_Gamma f)(x)``; dimension capped at 3."""
    if f.d > 3:
        raise UnsupportedDimension(f"semigroup quadrature supports d <= 3, got {f.d}")
    return f.semigroup(Gamma, x, nodes)


class RidgeField(ScalarField):
    """``f(x) = profile(<w, x> + phase)`` with a periodic profile.

    The semigroup reduces to a one-dimensional periodic heat flow with
    variance ``w^T Gamma w``, computed exactly in Fourier space on ``N``
    samples per period and evaluated by linear interpolation.
    """

    def __init__(self, profile: Callable[[np.ndarray], np.ndarray], w, period: float,
                 phase: float = 0.0, N: int = 2 ** 14, gamma=None, bound=None):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        self.profile = profile
        self.w = w
        self.period = float(period)
        self.phase = float(phase)
        self.N = N
        self._y = np.arange(N) * (self.period / N)
        self._hat = np.fft.rfft(profile(self._y))
        self._k = 2 * np.pi * np.fft.rfftfreq(N, d=self.period / N)
        super().__init__(lambda x: profile(x @ w + self.phase), w.size, gamma, bound)

    def _smoothed(self, var: float, deriv: int = 0) -> np.ndarray:
        mult = np.exp(-0.5 * var * self._k ** 2) * (1j * self._k) ** deriv
        return np.fft.irfft(self._hat * mult, n=self.N)

    def _interp(self, table: np.ndarray, y: np.ndarray) -> np.ndarray:
        ext = np.append(table, table[0])
        yy = np.mod(y, self.period)
        return np.interp(yy, np.append(self._y, self.period), ext)

    def variance(self, Gamma) -> float:
        return float(self.w @ _as_matrix(Gamma, self.d) @ self.w)

    def semigroup(self, Gamma, x, nodes=None, deriv: int = 0) -> np.ndarray:
        """``P_Gamma`` applied to the profile's ``deriv``-th derivative along w."""
        x = _points(x, self.d)
        y = x @ self.w + self.phase
        return self._interp(self._smoothed(self.variance(Gamma), deriv), y)

    def semigroup_gradient(self, Gamma, x) -> np.ndarray:
        """``grad P_Gamma f(x)``, shape (..., d)."""
        return self.semigroup(Gamma, x, deriv=1)[..., None] * self.w

    def smoothed_tables(self, var: float, derivs: Sequence[int] = (0, 1, 2)):
        return [self._smoothed(var, k) for k in derivs]


# --------------------------------------------------------------- norms

def _axis_grid(center, width, npts, d):
    center = np.zeros(d) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    axes = [np.linspace(c - width / 2, c + width / 2, npts) for c in center]
    return axes


def _seminorm_1d(vals: np.ndarray, h: float, expo: float) -> float:
    """Dyadic-offset Hölder seminorm of equally spaced samples along axis 0."""
    best = 0.0
    n = vals.shape[0]
    s = 1
    while s < n:
        diff = np.abs(vals[s:] - vals[:-s])
        best = max(best, float(diff.max()) / (s * h) ** expo)
        s *= 2
    return best


def grid_holder_norm(vals: np.ndarray, h: float, beta: float) -> float:
    """Finite-difference proxy of ``||g||_{C^beta}`` from samples on a
    uniform grid (d = 1 or 2, spacing ``h`` on every axis).

    For ``beta < 1``: sup plus the beta-seminorm.  For ``1 <= beta < 2``:
    sup, sup of the gradient, plus the (beta - 1)-seminorm of the gradient
    (Lipschitz constant when beta = 1).
    """
    vals = np.asarray(vals, dtype=float)
    if vals.ndim > 2:
        raise UnsupportedDimension("grid Hölder proxies support d <= 2")
    if beta < 0 or beta >= 2:
        raise InvalidArgument("grid Hölder proxies need 0 <= beta < 2")
    sup = float(np.max(np.abs(vals)))
    if beta == 0:
        return sup
    axes = range(vals.ndim)
    if beta < 1:
        return sup + max(_seminorm_1d(np.moveaxis(vals, a, 0), h, beta) for a in axes)
    grads = [np.diff(vals, axis=a) / h for a in axes]
    gsup = max(float(np.max(np.abs(g))) for g in grads)
    if beta == 1:
        return sup + gsup
    return sup + gsup + max(_seminorm_1d(np.moveaxis(g, a, 0), h, beta - 1)
                            for a, g in zip(axes, grads))


def neg_holder_profile(f: ScalarField, gamma: float, t_grid=None, x_grid=None,
                       nodes: Optional[int] = None):
    """``(t, t^{-gamma/2} sup_x |P_t f|)`` over the t grid."""
    if gamma >= 0:
        raise InvalidArgument("negative Hölder norms need gamma < 0")
    t_grid = np.logspace(-4, 0, 41) if t_grid is None else np.asarray(t_grid, dtype=float)
    if x_grid is None:
        axes = _axis_grid(None, 2 * np.pi, 257, f.d)
        x_grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, f.d)
    vals = np.array([np.max(np.abs(f.semigroup(t * np.eye(f.d), x_grid, nodes))) for t in t_grid])
    return t_grid, t_grid ** (-gamma / 2) * vals


def neg_holder_norm(f: ScalarField, gamma: float, t_grid=None, x_grid=None,
                    nodes: Optional[int] = None) -> float:
    """``max_t t^{-gamma/2} ||P_t f||_inf`` over a log-spaced grid in [1e-4, 1]."""
    return float(np.max(neg_holder_profile(f, gamma, t_grid, x_grid, nodes)[1]))


@dataclass
class RatioReport:
    max_ratio: float
    ratios: np.ndarray
    t_grid: np.ndarray

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "ratios": self.ratios.tolist(),
                "t_grid": self.t_grid.tolist()}


def _field_grid(f: ScalarField, center, width, npts):
    if f.d > 2:
        raise UnsupportedDimension("norm proxies support d <= 2")
    axes = _axis_grid(center, width, npts, f.d)
    h = axes[0][1] - axes[0][0]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return X, h


def regularisation_check(f: ScalarField, alpha: float, beta: float, gammas, t_grid,
                         center=None, width: float = 8.0, npts: int = 8193,
                         nodes: Optional[int] = None) -> RatioReport:
    """Max over ``(Gamma, t)`` of ``||P_{t Gamma} f||_{C^beta}`` divided by
    ``(t ^ 1)^{-(beta - alpha)/2} ||f||_{C^alpha}``."""
    if beta < max(0.0, alpha):
        raise InvalidArgument("need beta >= max(0, alpha)")
    X, h = _field_grid(f, center, width, npts if f.d == 1 else 257)
    fnorm = grid_holder_norm(f(X), h, alpha)
    t_grid = np.asarray(t_grid, dtype=float)
    ratios = []
    for G in gammas:
        G = _as_matrix(G, f.d)
        row = []
        for t in t_grid:
            g = f.semigroup(t * G, X, nodes)
            row.append(grid_holder_norm(g, h, beta) / (min(t, 1.0) ** (-(beta - alpha) / 2) * fnorm))
        ratios.append(row)
    ratios = np.asarray(ratios)
    return RatioReport(float(ratios.max()), ratios, t_grid)


def difference_check(f: ScalarField, Gamma1, Gamma2, alpha: float, beta: float, t_grid,
                     center=None, width: float = 8.0, npts: int = 8193,
                     nodes: Optional[int] = None) -> RatioReport:
    """Max over t of ``||(P_{t G1} - P_{t G2}) f||_{C^beta}`` divided by
    ``(t ^ 1)^{-(beta - alpha)/2} |G1 - G2| ||f||_{C^alpha}``; 0 when G1 = G2."""
    G1 = _as_matrix(Gamma1, f.d)
    G2 = _as_matrix(Gamma2, f.d)
    X, h = _field_grid(f, center, width, npts if f.d == 1 else 257)
    dist = float(np.linalg.norm(G1 - G2, 2))
    t_grid = np.asarray(t_grid, dtype=float)
    if dist == 0.0:
        return RatioReport(0.0, np.zeros(t_grid.size), t_grid)
    fnorm = grid_holder_norm(f(X), h, alpha)
    ratios = []
    for t in t_grid:
        diff = f.semigroup(t * G1, X, nodes) - f.semigroup(t * G2, X, nodes)
        ratios.append(grid_holder_norm(diff, h, beta)
                      / (min(t, 1.0) ** (-(beta - alpha) / 2) * dist * fnorm))
    ratios = np.asarray(ratios)
    return RatioReport(float(ratios.max()), ratios, t_grid)


def dilate(f: ScalarField, Gamma) -> ScalarField:
    """``Lambda_Gamma f(x) = f(sqrt(Gamma) x)``."""
    S = sqrt_spd(_as_matrix(Gamma, f.d))
    return ScalarField(lambda x: f(x @ S.T), f.d)
