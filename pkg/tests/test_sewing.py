import warnings

import numpy as np
import pytest
from oracles import fine_trapezoid

from roughwave import (DivergenceWarning, Germ, InvalidArgument, PrecisionFailure, SamplePath,
                       additive_germ, make_uniform_grid, sew)
from roughwave.fbm import HurstParams, sample_fbm
from roughwave.integrators import controlled, rough_germ, young_germ
from roughwave.lift import lift_piecewise_linear
from roughwave.sewing import (VolterraGermFamily, fit_power_law, germ_rate, midpoint_triples,
                              riemann_sums, stochastic_germ_moments)


def _smooth_pair(n):
    g = make_uniform_grid(1.0, n)
    t = g.points
    f = SamplePath(g, np.cos(3 * t))
    h = SamplePath(g, np.sin(2 * t) + t ** 2)
    return g, f, h


def test_additive_germ_sews_to_itself():
    g = make_uniform_grid(1.0, 256)
    p = sample_fbm(HurstParams(0.4, 2), g, 0).B
    rep = sew(additive_germ(p), g, 8)
    assert np.allclose(rep.limit.values, p.values - p.values[0], atol=1e-13)
    for k, s in enumerate(rep.level_sums):
        assert np.allclose(s, rep.level_sums[-1][:: rep.steps[k]], atol=1e-13)
    assert rep.rate.exponent == np.inf


def test_young_germ_matches_quadrature():
    n = 2 ** 16
    g, f, h = _smooth_pair(n)
    rep = sew(young_germ(f, h), g, 12, rate=False)
    t = np.linspace(0, 1, 2 ** 20 + 1)
    want = fine_trapezoid(lambda x: np.cos(3 * x), lambda x: np.sin(2 * x) + x ** 2, t)
    # the left-point germ is first order, so the error is about one mesh
    assert abs(rep.limit.values[-1, 0] - want) < 2 * g.mesh


def test_rough_germ_matches_quadrature():
    n = 2 ** 12
    g, f, h = _smooth_pair(n)
    rp = lift_piecewise_linear(h)
    # Z = phi(h) with Z' = phi'(h): the rough germ is second order
    hv = h.values[:, 0]
    Z = controlled(SamplePath(g, np.cos(hv)), (-np.sin(hv))[:, None, None], rp)
    rep = sew(rough_germ(Z, rp), g, 12, rate=False)
    want = np.sin(hv[-1]) - np.sin(hv[0])
    assert rep.limit.values[-1, 0] == pytest.approx(want, abs=1e-6)
    assert np.allclose(rep.limit.values[:, 0], np.sin(hv) - np.sin(hv[0]), atol=1e-6)


def test_ladder_checks_and_divergence_warning():
    g = make_uniform_grid(1.0, 64)
    with pytest.raises(InvalidArgument):
        sew(additive_germ(SamplePath(g, g.points)), g, 7)
    # |t - s|^{1/2} is not summable: Riemann sums blow up like sqrt(n)
    bad = Germ(lambda i, j: np.sqrt(g.points[j] - g.points[i])[:, None], g)
    with pytest.warns(DivergenceWarning):
        rep = sew(bad, g, 6)
    assert rep.diverged
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sew(bad, g, 6, warn=False)


def test_riemann_sums():
    g = make_uniform_grid(1.0, 4)
    A = Germ(lambda i, j: (g.points[j] - g.points[i])[:, None], g)
    assert np.allclose(riemann_sums(A, np.array([0, 2, 4]))[:, 0], [0, 0.5, 1.0])


def test_germ_rate_smooth_young_is_two():
    g, f, h = _smooth_pair(2 ** 10)
    fit = germ_rate(young_germ(f, h), g)
    assert fit.exponent == pytest.approx(2.0, abs=0.05)


def test_germ_rate_young_fbm():
    H = 0.75
    g = make_uniform_grid(1.0, 2 ** 12)
    B = sample_fbm(HurstParams(H, 2), g, 1).B
    f = SamplePath(g, np.cos(B.values[:, 0]))
    fit = germ_rate(young_germ(f, SamplePath(g, B.values[:, 1])), g)
    assert fit.exponent >= 1.3


def test_young_and_rough_germs_differ_by_higher_order():
    g, f, h = _smooth_pair(2 ** 10)
    rp = lift_piecewise_linear(h)
    hv = h.values[:, 0]
    Z = controlled(SamplePath(g, np.cos(hv)), (-np.sin(hv))[:, None, None], rp)
    Yg = young_germ(SamplePath(g, np.cos(hv)), h)
    diff = rough_germ(Z, rp) - Yg
    fit = germ_rate(diff, g)
    assert fit.exponent > 1
    a = sew(rough_germ(Z, rp), g, 10, rate=False).limit.values[-1, 0]
    b = sew(Yg, g, 10, rate=False).limit.values[-1, 0]
    assert abs(a - b) < 5 * g.mesh


def test_partition_invariance():
    rng = np.random.default_rng(0)
    g, f, h = _smooth_pair(2 ** 12)
    A = young_germ(f, h)
    rep = sew(A, g, 12, rate=False)
    # random nested ladder: keep a random half of the points at each level
    idx = np.arange(g.n + 1)
    for _ in range(6):
        inner = idx[1:-1]
        keep = inner[rng.random(inner.size) < 0.5]
        idx = np.concatenate([[0], keep, [g.n]])
    coarse_sum = riemann_sums(A, idx)[-1]
    fine_sum = riemann_sums(A, np.arange(g.n + 1))[-1]
    gap = abs(rep.limit.values[-1, 0] - fine_sum[0])
    assert gap < 1e-12
    assert abs(coarse_sum[0] - rep.limit.values[-1, 0]) < 3 * rep.distances[0] * 2 ** 6


def test_fit_power_law_and_triples():
    spans = 2.0 ** -np.arange(10)
    fit = fit_power_law(spans, 3 * spans ** 1.5)
    assert fit.exponent == pytest.approx(1.5) and fit.constant == pytest.approx(3.0)
    assert fit_power_law(spans, 3 * spans ** 1.5, drop=0).spans.size == 10
    i, u, j = midpoint_triples(32, 8, budget=4)
    assert np.all(u - i == 4) and np.all(j - u == 4) and i.size == 4
    with pytest.raises(InvalidArgument):
        midpoint_triples(32, 3)


class _ProductNoise:
    """Germ ``(t - s) xi_t``; ``delta A = (u - s)(xi_t - xi_u)`` is independent
    of the noise up to ``s``."""

    def __init__(self, n):
        self.grid = make_uniform_grid(1.0, n)

    def germ(self, seed):
        xi = np.random.default_rng(seed).standard_normal(self.grid.n + 1)
        t = self.grid.points
        return Germ(lambda i, j: ((t[j] - t[i]) * xi[j])[:, None], self.grid)

    def conditional_germ(self, seed, anchor_index, m, resample_seed):
        # xi_s for s > v is resampled and averaged over m draws
        xi = np.random.default_rng(seed).standard_normal(self.grid.n + 1)
        fresh = np.random.default_rng(resample_seed).standard_normal((m, self.grid.n + 1))
        fresh[:, : anchor_index + 1] = xi[: anchor_index + 1]
        mean = fresh.mean(axis=0)
        t = self.grid.points
        return Germ(lambda i, j: ((t[j] - t[i]) * mean[j])[:, None], self.grid)


def test_stochastic_moments_additive_and_errors():
    g = make_uniform_grid(1.0, 64)

    class Additive:
        grid = g

        def germ(self, seed):
            x = np.random.default_rng(seed).standard_normal(65)
            return additive_germ(SamplePath(g, x))

        def conditional_germ(self, seed, v, m, rs):
            return self.germ(seed)

    rep = stochastic_germ_moments(Additive(), mc=20, conditional="shifted")
    assert rep.unconditional.exponent == np.inf and rep.conditional.exponent == np.inf
    with pytest.raises(InvalidArgument):
        stochastic_germ_moments(Additive(), mc=1)
    with pytest.raises(InvalidArgument):
        stochastic_germ_moments(Additive(), mc=4, conditional="other")


def test_stochastic_moments_centred_noise_germ():
    fam = _ProductNoise(64)
    rep = stochastic_germ_moments(fam, mc=400, conditional="same", inner=256, seed=1)
    # exponent 1 unconditionally; the conditional mean is 0 up to the
    # 1/sqrt(inner) resampling noise
    assert rep.unconditional.exponent == pytest.approx(1.0, abs=0.1)
    ratio = rep.conditional.values / rep.unconditional.values
    assert np.all(ratio < 0.15)


def test_precision_failure():
    fam = _ProductNoise(64)
    with pytest.raises(PrecisionFailure):
        stochastic_germ_moments(fam, p=8, mc=3, max_rel_se=1e-3)


def test_volterra_family_young_germ():
    H = 0.75

    def local(B, i, j):
        f = np.cos(B[:, :, 0])
        return (f[:, i] * (B[:, j, 1] - B[:, i, 1]))[..., None]

    fam = VolterraGermFamily(HurstParams(H, 2), make_uniform_grid(1.0, 256), local)
    rep = stochastic_germ_moments(fam, mc=500, conditional="shifted", inner=64, seed=3)
    assert rep.unconditional.exponent >= 1.3
    assert rep.conditional.exponent > rep.unconditional.exponent
    assert "conditional" in rep.to_dict()
