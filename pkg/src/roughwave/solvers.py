"""Solvers for dX = sigma(X) dB^H, Hölder test coefficients, mollification,
the linearisation drivers and the linear equation they drive."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.stats import ortho_group

from . import _backend
from .errors import Divergence, InvalidArgument
from .fbm import FbmSample
from .grids import SamplePath, estimate_holder_exponent
from .integrators import ControlledPath, ModifiedRoughDriver, rough_integral
from .lift import RoughPath, lift_piecewise_linear

BLOWUP = 1e8
THETA_NODES = 16


def threshold_gamma(H: float) -> float:
    """Regularity threshold ``max(1/(2H), (1-H)/H)``."""
    return max(1.0 / (2 * H), (1 - H) / H)


class Coefficient:
    """Matrix field ``sigma: R^{d1} -> R^{d1 x d2}``, vectorised over leading axes.

    ``grad(x)[..., i, j, k] = d_k sigma^{ij}(x)``; ``hess`` adds one more
    trailing derivative axis.
    """

    def __init__(self, fn: Callable, d1: int, d2: int, gamma: float, ell: float = 1.0,
                 grad: Optional[Callable] = None, hess: Optional[Callable] = None,
                 bound: Optional[float] = None, oscillation: Optional[float] = None):
        self.fn = fn
        self.d1 = d1
        self.d2 = d2
        self.gamma = gamma
        self.ell = ell
        self._grad = grad
        self._hess = hess
        self.bound = bound
        self.oscillation = oscillation

    def __call__(self, x) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=float))

    @property
    def differentiable(self) -> bool:
        return self._grad is not None

    def grad(self, x) -> np.ndarray:
        if self._grad is None:
            raise InvalidArgument("this coefficient has no gradient")
        return self._grad(np.asarray(x, dtype=float))

    def hess(self, x) -> np.ndarray:
        if self._hess is None:
            raise InvalidArgument("this coefficient has no second derivative")
        return self._hess(np.asarray(x, dtype=float))


def constant_coefficient(A) -> Coefficient:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d1, d2 = A.shape
    return Coefficient(lambda x: np.broadcast_to(A, x.shape[:-1] + A.shape).copy(), d1, d2,
                       gamma=np.inf, grad=lambda x: np.zeros(x.shape[:-1] + (d1, d2, d1)),
                       hess=lambda x: np.zeros(x.shape[:-1] + (d1, d2, d1, d1)),
                       bound=0.0, oscillation=0.0)


def linear_coefficient(c: float = 1.0) -> Coefficient:
    """Scalar ``sigma(x) = c x`` (d1 = d2 = 1)."""
    return Coefficient(lambda x: c * x[..., None], 1, 1, gamma=np.inf,
                       grad=lambda x: np.full(x.shape[:-1] + (1, 1, 1), float(c)),
                       hess=lambda x: np.zeros(x.shape[:-1] + (1, 1, 1, 1)))


# ------------------------------------------------------------ ridge fields

def ridge_profile(gamma: float):
    """Periodic profile of Hölder order ``gamma`` and its first derivative.

    ``|sin y|^gamma`` for gamma <= 1 and ``sgn(sin y) |sin y|^gamma`` above,
    whose derivative ``gamma |sin y|^{gamma-1} cos y`` is (gamma-1)-Hölder.
    """
    if gamma <= 1:
        return (lambda y: np.abs(np.sin(y)) ** gamma), None
    g = gamma
    return ((lambda y: np.sign(np.sin(y)) * np.abs(np.sin(y)) ** g),
            (lambda y: g * np.abs(np.sin(y)) ** (g - 1) * np.cos(y)))


class TrigSeries:
    """Truncated Fourier series of a smoothed ``2 pi``-periodic profile.

    Values and derivatives come from the same coefficients, so they are
    exactly consistent with each other.
    """

    def __init__(self, profile: Callable, var: float, N: int = 2 ** 14, tol: float = 1e-16):
        y = np.arange(N) * (2 * np.pi / N)
        c = np.fft.rfft(profile(y)) / N
        c[1:] *= 2.0
        if N % 2 == 0:
            c[-1] /= 2.0
        k = np.arange(c.size, dtype=float)
        c = c * np.exp(-0.5 * var * k ** 2)
        keep = np.nonzero(np.abs(c) > tol * np.abs(c).max())[0]
        K = int(keep.max()) + 1 if keep.size else 1
        self.c = c[:K]
        self.k = k[:K]

    def __call__(self, y, deriv: int = 0) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        phase = np.exp(1j * y[..., None] * self.k)
        return np.real(phase @ (self.c * (1j * self.k) ** deriv))


def _ridge_coefficient(A0, A1, a, w, phi, gamma, ell, value, d1_fn=None, d2_fn=None,
                       bound=None, oscillation=None) -> Coefficient:
    d1, d2 = A0.shape

    def fn(x):
        y = x @ w + phi
        return A0 + a * value(y)[..., None, None] * A1

    grad = hess = None
    if d1_fn is not None:
        def grad(x):
            y = x @ w + phi
            return a * d1_fn(y)[..., None, None, None] * A1[:, :, None] * w

    if d2_fn is not None:
        def hess(x):
            y = x @ w + phi
            return (a * d2_fn(y)[..., None, None, None, None]
                    * A1[:, :, None, None] * w[:, None] * w[None, :])

    coef = Coefficient(fn, d1, d2, gamma, ell, grad, hess, bound, oscillation)
    coef.ridge = dict(A0=A0, A1=A1, a=a, w=w, phi=phi)
    return coef


def holder_sigma(gamma: float, l: float = 2.0, d1: int = 1, d2: int = 1, seed=None,
                 amplitude: Optional[float] = None, frequency: float = 2.0) -> Coefficient:
    """Elliptic test coefficient ``A0 + a P(<w, x> + phi) A1`` of Hölder order gamma.

    ``A0 A0^T = I`` (rows of a random orthogonal matrix, so ``d2 >= d1``),
    ``|A1|_F = 1``, ``|w| = frequency``.  The amplitude is the largest value
    keeping both the low-oscillation window ``sup|sigma(x) - sigma(y)| <=
    l^{-2}/4`` and the ellipticity window ``l^{-1} <= sigma sigma^T <= l``
    (with 1% slack); for ``l = 1`` it is 0 and sigma is constant.
    """
    if not 0 < gamma < 2:
        raise InvalidArgument(f"gamma must lie in (0, 2), got {gamma}")
    if l < 1:
        raise InvalidArgument("ellipticity constant must be >= 1")
    if d2 < d1:
        raise InvalidArgument("an elliptic coefficient needs d2 >= d1")
    rng = np.random.default_rng(seed)
    Q = ortho_group.rvs(d2, random_state=rng) if d2 > 1 else np.ones((1, 1))
    A0 = Q[:d1, :d2]
    A1 = rng.standard_normal((d1, d2))
    A1 /= np.linalg.norm(A1)
    w = rng.standard_normal(d1)
    w *= frequency / np.linalg.norm(w)
    phi = float(rng.uniform(0, np.pi))
    value, deriv = ridge_profile(gamma)
    span = 1.0 if gamma <= 1 else 2.0  # range of the profile
    window = 0.99 * l ** -2 / 4 / span
    eps_max = max(0.0, min(1 - np.sqrt(1.01 / l), np.sqrt(l / 1.01) - 1))
    a = min(window, eps_max) if amplitude is None else float(amplitude)
    hol = 1.0 if gamma <= 1 else gamma  # Hölder constant of the profile (derivative for gamma > 1)
    bound = a * hol * frequency ** min(gamma, 1.0) if gamma <= 1 else a * hol * frequency ** gamma
    coef = _ridge_coefficient(A0, A1, a, w, phi, gamma, l, value, deriv, None,
                              bound=bound, oscillation=a * span)
    coef.profile = value
    return coef


def mollify(sigma: Coefficient, n: float, nodes: int = 32) -> Coefficient:
    """``sigma_n = P_{1/n^2} sigma`` with exact-consistent derivatives.

    Ridge coefficients reduce to a one-dimensional periodic heat flow of
    variance ``|w|^2 / n^2`` evaluated as a truncated Fourier series.  Other
    coefficients use Gauss-Hermite quadrature, with derivatives moved onto
    the Gaussian weight.
    """
    if n <= 0:
        raise InvalidArgument("mollification index must be positive")
    if hasattr(sigma, "ridge") and hasattr(sigma, "profile"):
        r = sigma.ridge
        var = float(r["w"] @ r["w"]) / n ** 2
        ser = TrigSeries(sigma.profile, var)
        out = _ridge_coefficient(r["A0"], r["A1"], r["a"], r["w"], r["phi"], sigma.gamma,
                                 sigma.ell, ser, lambda y: ser(y, 1), lambda y: ser(y, 2),
                                 sigma.bound, sigma.oscillation)
        out.series = ser
        out.mollified_from = sigma
        return out
    d1, d2 = sigma.d1, sigma.d2
    z, wts = hermegauss(nodes)
    wts = wts / np.sqrt(2 * np.pi)
    mesh = np.meshgrid(*([z] * d1), indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=1)
    W = np.prod(np.meshgrid(*([wts] * d1), indexing="ij"), axis=0).ravel()
    h = 1.0 / n

    def sample(x):
        return sigma(x[..., None, :] + h * Z)  # (..., q, d1, d2)

    def fn(x):
        return np.einsum("...qij,q->...ij", sample(x), W)

    def grad(x):
        return np.einsum("...qij,q,qk->...ijk", sample(x), W, Z) / h

    def hess(x):
        H2 = Z[:, :, None] * Z[:, None, :] - np.eye(d1)
        return np.einsum("...qij,q,qkm->...ijkm", sample(x), W, H2) / h ** 2

    return Coefficient(fn, d1, d2, sigma.gamma, sigma.ell, grad, hess, sigma.bound,
                       sigma.oscillation)


# ----------------------------------------------------------------- solvers

@dataclass
class SolveResult:
    X: ControlledPath
    scheme: str
    mesh: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def path(self) -> SamplePath:
        return self.X.path()


def _check(X, i):
    if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > BLOWUP:
        raise Divergence(f"solution left the ball of radius {BLOWUP:g} at step {i}")


def _as_batch(x0, d1, m):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 0:
        x0 = x0[None]
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (m, d1))
    return np.array(x0, dtype=float)


def young_steps(sigma: Coefficient, x0, dB: np.ndarray, scheme: str = "euler") -> np.ndarray:
    """Batched Young schemes; ``dB`` has shape (m, n, d2), output (m, n+1, d1)."""
    m, n, _ = dB.shape
    X = np.empty((m, n + 1, sigma.d1))
    X[:, 0] = _as_batch(x0, sigma.d1, m)
    x = X[:, 0].copy()
    for i in range(n):
        db = dB[:, i]
        if scheme == "euler":
            x = x + np.einsum("mij,mj->mi", sigma(x), db)
        elif scheme in ("two-step", "midpoint"):
            xm = x + 0.5 * np.einsum("mij,mj->mi", sigma(x), db)
            x = x + np.einsum("mij,mj->mi", sigma(xm), db)
        else:
            raise InvalidArgument(f"unknown Young scheme {scheme!r}")
        X[:, i + 1] = x
        if i % 64 == 0 or i == n - 1:
            _check(x, i)
    return X


def davie_steps(sigma: Coefficient, x0, dB: np.ndarray, BB: np.ndarray) -> np.ndarray:
    """Batched Davie scheme ``x + sigma dB + (d_k sigma^{ij} sigma^{kl}) BB^{lj}``.

    ``dB`` (m, n, d2), ``BB`` (m, n, d2, d2) one-cell second levels.
    """
    m, n, _ = dB.shape
    X = np.empty((m, n + 1, sigma.d1))
    X[:, 0] = _as_batch(x0, sigma.d1, m)
    x = X[:, 0].copy()
    for i in range(n):
        s = sigma(x)
        g = sigma.grad(x)
        x = (x + np.einsum("mij,mj->mi", s, dB[:, i])
             + np.einsum("mijk,mkl,mlj->mi", g, s, BB[:, i]))
        X[:, i + 1] = x
        if i % 64 == 0 or i == n - 1:
            _check(x, i)
    return X


def _package(sigma, X, rp, scheme, beta):
    Xp = sigma(X)
    cp = ControlledPath(X, Xp, rp, beta)
    diag = {}
    try:
        diag["holder_estimate"] = estimate_holder_exponent(SamplePath(rp.grid, X))
    except Exception:  # short grids or constant paths
        diag["holder_estimate"] = None
    return SolveResult(cp, scheme, rp.grid.mesh, diag)


def _driver_path(fbm_or_path) -> SamplePath:
    return fbm_or_path.B if isinstance(fbm_or_path, FbmSample) else fbm_or_path


def solve_yde(sigma: Coefficient, x0, fbm, scheme: str = "euler", beta: Optional[float] = None) -> SolveResult:
    """Young equation on the grid of ``fbm`` (an FbmSample or a SamplePath).

    ``scheme`` is ``"euler"`` or ``"two-step"`` (midpoint predictor-corrector).
    """
    B = _driver_path(fbm)
    if isinstance(fbm, FbmSample) and fbm.params.H <= 0.5:
        raise InvalidArgument("Young equations need H > 1/2")
    dB = np.diff(B.flat(), axis=0)[None]
    if dB.shape[2] != sigma.d2:
        raise InvalidArgument("noise dimension does not match the coefficient")
    X = young_steps(sigma, x0, dB, scheme)[0]
    rp = lift_piecewise_linear(B)
    return _package(sigma, X, rp, scheme, 0.5 if beta is None else beta)


def solve_rde(sigma: Coefficient, x0, rp: RoughPath, beta: Optional[float] = None) -> SolveResult:
    """Davie scheme against a rough path; requires a gradient."""
    if not sigma.differentiable:
        raise InvalidArgument("the rough solver needs a differentiable coefficient")
    if rp.dimension != sigma.d2:
        raise InvalidArgument("rough path dimension does not match the coefficient")
    dB = np.diff(rp.base.flat(), axis=0)[None]
    X = davie_steps(sigma, x0, dB, rp.cells[None])[0]
    return _package(sigma, X, rp, "davie", 2 * rp.alpha if beta is None else beta)


# ---------------------------------------------------------- linearisation

def theta_rule(nodes: int = THETA_NODES):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _gradient_controlled(sigma: Coefficient, X: ControlledPath, Y: ControlledPath, nodes: int):
    """Theta-averaged gradients ``F[k]`` (n+1, d1, d2) and their Gubinelli
    derivatives ``Fp[k]`` (n+1, d1, d2, d2)."""
    th, wt = theta_rule(nodes)
    x, y = X.value, Y.value
    xp, yp = X.gubinelli, Y.gubinelli
    d1, d2 = sigma.d1, sigma.d2
    F = np.zeros((d1, x.shape[0], d1, d2))
    Fp = np.zeros((d1, x.shape[0], d1, d2, d2))
    for t, w in zip(th, wt):
        z = t * x + (1 - t) * y
        zp = t * xp + (1 - t) * yp  # (n+1, d1, d2)
        g = sigma.grad(z)  # (n+1, i, j, k)
        h = sigma.hess(z)  # (n+1, i, j, k, m)
        F += w * np.moveaxis(g, -1, 0)
        Fp += w * np.einsum("nijkm,nml->knijl", h, zp)
    return F, Fp


def build_linearisation(sigma_smooth: Coefficient, X: SolveResult, Y: SolveResult,
                        rp: Optional[RoughPath] = None, nodes: int = THETA_NODES,
                        alpha: float = 0.35, gamma: Optional[float] = None) -> List[ModifiedRoughDriver]:
    """Drivers ``(G^k, curlG^k)`` for ``k = 1..d1``.

    ``G^k`` is the rough integral of the theta-averaged ``d_k sigma`` along
    ``theta X + (1 - theta) Y``; its one-cell second level pairs that
    integrand with the driver's second level.
    """
    rp = X.X.reference if rp is None else rp
    if not (X.X.grid.same_as(Y.X.grid) and X.X.grid.same_as(rp.grid)):
        raise InvalidArgument("solutions and rough path must share the grid")
    if not (np.array_equal(X.X.reference.base.values, rp.base.values)
            and np.array_equal(Y.X.reference.base.values, rp.base.values)):
        raise InvalidArgument("solutions must be driven by the same noise")
    F, Fp = _gradient_controlled(sigma_smooth, X.X, Y.X, nodes)
    gamma = sigma_smooth.gamma if gamma is None else gamma
    drivers = []
    for k in range(sigma_smooth.d1):
        Zk = ControlledPath(F[k], Fp[k], rp, 2 * alpha)
        Gk = rough_integral(Zk, rp, depth=0).value
        curl = np.einsum("nij,nlj->nil", F[k][:-1], rp.cells)
        drivers.append(ModifiedRoughDriver(Gk, curl, rp, F=F[k], alpha=alpha, gamma=gamma))
    return drivers


def solve_linear_modified(drivers: List[ModifiedRoughDriver], z0) -> SamplePath:
    """``Z_t = z0 + sum_k int Z^k dG^k`` with ``Z' = sum_k Z^k F^k``.

    One step: ``Z + sum_k Z^k G^k_{cell} + sum_k (Z')^k . curlG^k_{cell}``.
    """
    if not drivers:
        raise InvalidArgument("need at least one driver")
    ref = drivers[0].reference
    for D in drivers[1:]:
        if not D.grid.same_as(ref.grid) or not np.array_equal(D.reference.base.values,
                                                             ref.base.values):
            raise InvalidArgument("drivers must share grid and reference")
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    K = len(drivers)
    d1 = drivers[0].d1
    d2 = ref.dimension
    if z0.size != K:
        raise InvalidArgument("one driver per component of z0 is required")
    Fs = []
    for D in drivers:
        if D.F is None:
            if d1 == 1 and d2 == 1:
                Fs.append(np.ones((len(ref.grid), 1, 1)))
            else:
                raise InvalidArgument("driver lacks the Gubinelli derivative F")
        else:
            Fs.append(D.F)
    dG = np.stack([np.diff(D.G, axis=0) for D in drivers], axis=1)
    dcurl = np.stack([D.second(np.arange(ref.grid.n), np.arange(1, ref.grid.n + 1))
                      for D in drivers], axis=1)
    F = np.stack(Fs, axis=1)
    Z = _backend.linear_recurrence(z0, np.ascontiguousarray(dG), np.ascontiguousarray(dcurl),
                                   np.ascontiguousarray(F))
    return SamplePath(ref.grid, Z)


def linearisation_sides(sigma_smooth: Coefficient, X: SolveResult, Y: SolveResult,
                        drivers: Optional[List[ModifiedRoughDriver]] = None,
                        depth: Optional[int] = None):
    """Both sides of the linearisation identity, sewn along dyadic ladders.

    Left: rough integral of ``sigma(X) - sigma(Y)`` with derivative
    ``grad sigma(X) X' - grad sigma(Y) Y'``.  Right: ``sum_k int (X^k - Y^k) dG^k``.
    """
    from .integrators import integral_against_modified
    rp = X.X.reference
    drivers = build_linearisation(sigma_smooth, X, Y, rp) if drivers is None else drivers
    x, y = X.X.value, Y.X.value
    xp, yp = X.X.gubinelli, Y.X.gubinelli
    val = sigma_smooth(x) - sigma_smooth(y)
    der = (np.einsum("nijk,nkl->nijl", sigma_smooth.grad(x), xp)
           - np.einsum("nijk,nkl->nijl", sigma_smooth.grad(y), yp))
    lhs = rough_integral(ControlledPath(val, der, rp), rp, depth)
    rhs = np.zeros_like(lhs.value)
    for k, D in enumerate(drivers):
        Zk = ControlledPath((x - y)[:, k:k + 1], (xp - yp)[:, k:k + 1, :], rp)
        rhs = rhs + integral_against_modified(Zk, D, depth).values
    return lhs.value, rhs
