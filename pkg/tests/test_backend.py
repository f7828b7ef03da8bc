import os
import subprocess
import sys

import numpy as np
import pytest

from roughwave import BACKEND, _pykernels

ck = pytest.importorskip("roughwave._ckernels")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_compiled_backend_selected():
    assert BACKEND == "cython"


def test_outer_prefix_parity(rng):
    a, b = rng.standard_normal((2, 3, 257, 2))
    cells = rng.standard_normal((3, 257, 2, 2))
    assert np.allclose(ck.outer_prefix(a, b, cells), _pykernels.outer_prefix(a, b, cells),
                       rtol=0, atol=1e-13)


def test_dyadic_sup_parity(rng):
    x = np.cumsum(rng.standard_normal((2, 513, 3)), axis=1)
    t = np.linspace(0, 1, 513)
    assert np.array_equal(ck.dyadic_sup(x, t, 0.4), _pykernels.dyadic_sup(x, t, 0.4))


def test_hosking_parity(rng):
    H = 0.3
    k = np.arange(256, dtype=float)
    gam = 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    z = rng.standard_normal((3, 256))
    assert np.allclose(ck.hosking_fgn(gam, z), _pykernels.hosking_fgn(gam, z), rtol=0, atol=1e-13)


def test_linear_recurrence_parity(rng):
    n, K = 300, 2
    z0 = np.array([0.4, -1.0])
    dG = 1e-2 * rng.standard_normal((n, K, K))
    dcurl = 1e-3 * rng.standard_normal((n, K, K, 2))
    F = rng.standard_normal((n + 1, K, K, 2))
    assert np.allclose(ck.linear_recurrence(z0, dG, dcurl, F),
                       _pykernels.linear_recurrence(z0, dG, dcurl, F), rtol=0, atol=1e-12)


def test_read_only_inputs_accepted(rng):
    x = np.cumsum(rng.standard_normal((1, 65, 1)), axis=1)
    t = np.linspace(0, 1, 65)
    x.flags.writeable = False
    t.flags.writeable = False
    assert np.isfinite(ck.dyadic_sup(x, t, 0.4)).all()


def test_pure_python_switch():
    code = ("import numpy as np, roughwave as r;"
            "from roughwave.fbm import HurstParams, sample_fbm;"
            "p = sample_fbm(HurstParams(0.4), r.make_uniform_grid(1.0, 64), 1, 'hosking');"
            "print(r.BACKEND, repr(float(p.B.values[-1, 0])))")
    env = dict(os.environ, ROUGHWAVE_PURE_PYTHON="1")
    pure = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                          check=True).stdout.split()
    env.pop("ROUGHWAVE_PURE_PYTHON")
    comp = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                          check=True).stdout.split()
    assert pure[0] == "python" and comp[0] == "cython"
    assert float(pure[1]) == pytest.approx(float(comp[1]), abs=1e-13)
