import numpy as np
import pytest
from scipy import integrate, stats

from roughwave import InvalidArgument, UnsupportedDimension
from roughwave.heat import (ConductanceMatrix, RidgeField, ScalarField, apply_semigroup,
                            constant_field, difference_check, dilate, grid_holder_norm,
                            heat_kernel, neg_holder_norm, neg_holder_profile,
                            regularisation_check, sqrt_spd)


def _gauss(var):
    return ScalarField(lambda x: np.exp(-0.5 * x[..., 0] ** 2 / var) / np.sqrt(2 * np.pi * var))


def _spd(rng, d=2):
    A = rng.standard_normal((d, d))
    return A @ A.T + 0.5 * np.eye(d)


def test_heat_kernel_values_and_normalisation():
    assert heat_kernel(1.0, 0.0) == pytest.approx(1 / np.sqrt(2 * np.pi))
    G = _spd(np.random.default_rng(0))
    tot, _ = integrate.dblquad(lambda y, x: heat_kernel(G, np.array([x, y])), -12, 12, -12, 12,
                               epsabs=1e-10)
    assert tot == pytest.approx(1.0, abs=1e-6)
    x = np.array([[0.3, -0.2], [1.0, 2.0]])
    assert np.allclose(heat_kernel(0.7 * np.eye(2), x),
                       stats.multivariate_normal(np.zeros(2), 0.7 * np.eye(2)).pdf(x))
    with pytest.raises(InvalidArgument):
        heat_kernel(np.array([[1.0, 2.0], [2.0, 1.0]]), x)


def test_conductance_window_and_sqrt():
    with pytest.raises(InvalidArgument):
        ConductanceMatrix(np.diag([0.01, 1.0]), c=10)
    with pytest.raises(InvalidArgument):
        ConductanceMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
    G = _spd(np.random.default_rng(1))
    S = sqrt_spd(G)
    assert np.allclose(S @ S, G, atol=1e-12) and np.allclose(S, S.T)
    assert ConductanceMatrix(np.eye(3)).d == 3


def test_constants_and_odd_moments_exact():
    x = np.linspace(-3, 3, 11)
    c = constant_field(2.75)
    assert np.all(apply_semigroup(c, 0.37, x) == 2.75)
    c2 = constant_field(-1.5, d=2)
    pts = np.random.default_rng(2).standard_normal((5, 2))
    assert np.all(apply_semigroup(c2, _spd(np.random.default_rng(3)), pts) == -1.5)
    lin = ScalarField(lambda y: y[..., 0])
    assert np.allclose(apply_semigroup(lin, 0.5, x), x, atol=1e-13)


@pytest.mark.parametrize("var, t", [(0.5, 0.1), (1.0, 1.0), (2.0, 0.3)])
def test_gaussian_convolution_closed_form(var, t):
    x = np.linspace(-3, 3, 13)
    got = apply_semigroup(_gauss(var), t, x)
    assert np.max(np.abs(got - stats.norm(0, np.sqrt(var + t)).pdf(x))) < 1e-8


def test_semigroup_property_and_contraction():
    f = _gauss(0.6)
    x = np.linspace(-2, 2, 9)
    s, t = 0.2, 0.5
    inner = ScalarField(lambda y: apply_semigroup(f, t, y[..., 0]))
    assert np.allclose(apply_semigroup(inner, s, x), apply_semigroup(f, s + t, x), atol=1e-6)
    g = ScalarField(lambda y: np.sign(np.sin(3 * y[..., 0])))
    assert np.max(np.abs(apply_semigroup(g, 0.1, x))) <= 1.0 + 1e-12


def test_dimension_cap():
    f = ScalarField(lambda x: x[..., 0], d=4)
    with pytest.raises(UnsupportedDimension):
        apply_semigroup(f, np.eye(4), np.zeros(4))


def test_lambda_conjugation():
    rng = np.random.default_rng(4)
    G = _spd(rng)
    f = ScalarField(lambda x: np.cos(x[..., 0]) * np.exp(-0.1 * x[..., 1] ** 2) + x[..., 0] * x[..., 1],
                    d=2)
    x = rng.standard_normal((6, 2))
    t = 0.3
    lhs = apply_semigroup(f, t * G, x)
    inner = dilate(f, G)
    Ginv = np.linalg.inv(G)
    rhs_field = ScalarField(lambda y: apply_semigroup(inner, t * np.eye(2), y), d=2)
    rhs = dilate(rhs_field, Ginv)(x)
    assert np.allclose(lhs, rhs, atol=1e-8)


def test_ridge_semigroup_matches_quadrature():
    G = np.array([[0.5, 0.1], [0.1, 0.3]])
    x = np.random.default_rng(5).standard_normal((4, 2))
    smooth = RidgeField(lambda y: np.exp(np.cos(y)), [1.0, 0.5], 2 * np.pi, phase=0.3)
    quad = ScalarField(smooth.fn, d=2).semigroup(G, x, nodes=64)
    assert np.allclose(smooth.semigroup(G, x), quad, atol=1e-10)
    # a cusp slows Gauss-Hermite down, so the gap shrinks with the node count
    f = RidgeField(lambda y: np.abs(np.sin(y)) ** 0.6, [1.0, 0.5], 2 * np.pi, phase=0.3, gamma=0.6)
    exact = f.semigroup(G, x)
    gaps = [np.max(np.abs(exact - ScalarField(f.fn, d=2).semigroup(G, x, nodes=k))) for k in (32, 128)]
    assert gaps[1] < gaps[0] and gaps[1] < 2e-3
    cosf = RidgeField(np.cos, [1.0], 2 * np.pi)
    y = np.linspace(0, 1, 7)
    assert np.allclose(cosf.semigroup(0.4, y), np.exp(-0.2) * np.cos(y), atol=1e-7)


def test_neg_holder_norm():
    zero = constant_field(0.0)
    assert neg_holder_norm(zero, -0.5) == 0.0
    bounded = ScalarField(lambda x: np.cos(3 * x[..., 0]) * 0.8)
    assert neg_holder_norm(bounded, -0.5) <= 0.8 + 1e-12
    with pytest.raises(InvalidArgument):
        neg_holder_norm(bounded, 0.2)


def test_neg_holder_profile_of_difference_proxy():
    # g = |sin|^{g0}; its finite-difference derivative behaves like a
    # (g0 - 1)-Hölder distribution
    g0, eps = 0.6, 1e-3
    prof = lambda y: (np.abs(np.sin(y + eps)) ** g0 - np.abs(np.sin(y)) ** g0) / eps
    f = RidgeField(prof, [1.0], 2 * np.pi)
    t = np.logspace(-4, 0, 21)
    _, at = neg_holder_profile(f, g0 - 1, t)
    assert np.all(np.isfinite(at))
    _, above = neg_holder_profile(f, g0 - 1 + 0.1, t)
    # above the critical order the weighted profile grows as t decreases
    assert above[0] > above[10] > above[-1]


def test_grid_holder_norm():
    h = 1e-3
    x = np.arange(0, 1 + h / 2, h)
    assert grid_holder_norm(2 * x, h, 1.0) == pytest.approx(2 + 2, rel=1e-12)
    assert grid_holder_norm(np.full(11, -3.0), 0.1, 0.5) == 3.0
    with pytest.raises(InvalidArgument):
        grid_holder_norm(x, h, 2.0)
    with pytest.raises(UnsupportedDimension):
        grid_holder_norm(np.zeros((3, 3, 3)), h, 0.5)


def test_regularisation_smooth_alpha_equals_beta():
    f = ScalarField(lambda x: np.sin(x[..., 0]))
    rep = regularisation_check(f, 0.5, 0.5, [1.0], np.logspace(-3, 0, 7))
    assert rep.max_ratio <= 1.0 + 1e-3


def test_regularisation_holder_proxy_stable():
    prof = lambda y: np.abs(np.sin(y)) ** 0.6
    f = RidgeField(prof, [1.0], 2 * np.pi, gamma=0.6)
    coarse = regularisation_check(f, 0.6, 1.0, [1.0], np.logspace(-3, 0, 7)).max_ratio
    fine = regularisation_check(f, 0.6, 1.0, [1.0], np.logspace(-3, 0, 25)).max_ratio
    assert np.isfinite(coarse) and abs(fine / coarse - 1) <= 0.5
    scaled = regularisation_check(f, 0.6, 1.0, [2.0], np.logspace(-3, 0, 7)).max_ratio
    assert 0.1 < scaled / coarse < 10


def test_difference_check():
    prof = lambda y: np.abs(np.sin(y)) ** 0.6
    f = RidgeField(prof, [1.0], 2 * np.pi)
    t = np.logspace(-3, 0, 7)
    assert difference_check(f, 1.0, 1.0, 0.6, 1.0, t).max_ratio == 0.0
    c = constant_field(1.0)
    assert difference_check(c, 1.0, 1.3, 0.6, 1.0, t).max_ratio == 0.0
    ratios = [difference_check(f, 1.0, 1.0 + h, 0.6, 1.0, t).max_ratio for h in (1e-1, 1e-2, 1e-3)]
    assert ratios[2] / ratios[1] == pytest.approx(1.0, abs=0.2)
    assert ratios[1] / ratios[0] == pytest.approx(1.0, abs=0.5)
