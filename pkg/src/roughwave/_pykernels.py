"""Pure numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and semantics; ``_backend`` picks one at import time.
"""
import numpy as np


def outer_prefix(a, b, cells):
    """Prefix sums ``P_{k+1} = P_k + a_k (x) b_k + cells_k`` with ``P_0 = 0``.

    ``a`` has shape (m, n, p), ``b`` (m, n, q) and ``cells`` (m, n, p, q);
    returns (m, n + 1, p, q).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cells = np.asarray(cells, dtype=float)
    m, n, p = a.shape
    q = b.shape[2]
    out = np.zeros((m, n + 1, p, q))
    np.cumsum(a[:, :, :, None] * b[:, :, None, :] + cells, axis=1, out=out[:, 1:])
    return out


def dyadic_sup(x, t, alpha):
    """Sup of ``|x_j - x_i| / (t_j - t_i)**alpha`` over spans ``j - i = 2**k``.

    ``x`` has shape (m, n + 1, d); returns shape (m,).
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    m, npts, _ = x.shape
    best = np.zeros(m)
    h = 1
    while h < npts:
        inc = np.sqrt(np.sum((x[:, h:] - x[:, :-h]) ** 2, axis=2))
        ratio = inc / (t[h:] - t[:-h]) ** alpha
        best = np.maximum(best, ratio.max(axis=1))
        h *= 2
    return best


def hosking_fgn(gamma, z):
    """Durbin-Levinson filter turning white noise into a stationary Gaussian
    sequence with autocovariance ``gamma[0..n-1]``.

    ``z`` has shape (m, n); returns (m, n).
    """
    gamma = np.asarray(gamma, dtype=float)
    z = np.asarray(z, dtype=float)
    m, n = z.shape
    out = np.empty((m, n))
    phi = np.zeros(n)
    v = gamma[0]
    out[:, 0] = np.sqrt(v) * z[:, 0]
    for k in range(1, n):
        prev = phi[1:k]
        kappa = (gamma[k] - prev @ gamma[k - 1:0:-1]) / v
        phi[1:k] = prev - kappa * prev[::-1]
        phi[k] = kappa
        v *= 1.0 - kappa * kappa
        # past values in reverse order: out[:, k-1], ..., out[:, 0]
        out[:, k] = out[:, k - 1::-1] @ phi[1:k + 1] + np.sqrt(v) * z[:, k]
    return out


def linear_recurrence(z0, dG, dcurl, F):
    """Step the linear equation driven by modified drivers.

    ``Z_{i+1} = Z_i + sum_k Z^k_i dG[i, k] + sum_k (Z'_i)^k . dcurl[i, k]``
    with ``Z'_i = sum_m Z^m_i F[i, m]``.  Shapes: ``z0`` (d1,), ``dG`` (n, K, d1),
    ``dcurl`` (n, K, d1, d2), ``F`` (n + 1, K, d1, d2) with ``K == d1``.
    """
    z0 = np.asarray(z0, dtype=float)
    dG = np.asarray(dG, dtype=float)
    dcurl = np.asarray(dcurl, dtype=float)
    F = np.asarray(F, dtype=float)
    n = dG.shape[0]
    out = np.empty((n + 1, z0.shape[0]))
    out[0] = z0
    z = z0.copy()
    for i in range(n):
        zp = np.einsum("m,mkl->kl", z, F[i])
        z = z + np.einsum("k,ki->i", z, dG[i]) + np.einsum("kl,kil->i", zp, dcurl[i])
        out[i + 1] = z
    return out
