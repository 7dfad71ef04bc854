"""Pure-numpy backend for the hot kernels.

Mirrors the compiled extension in ``_core.pyx``: emission table lookups and
scaled forward-backward smoothing, vectorized over units. Reductions use plain
numpy element-wise ops and ``sum``/``einsum`` without BLAS-threaded paths, so
results do not depend on the ambient thread count.
"""

import numpy as np

BACKEND_NAME = "python"


def log_emissions(y, logphi_pad, out):
    """Accumulate per-state log emission probabilities.

    y : (n, T, r) int16, missing coded as a negative value (skipped).
    logphi_pad : (r, max_c, k) log response probabilities.
    out : (n, T, k) float64, overwritten.
    """
    out[:] = 0.0
    r = y.shape[2]
    for j in range(r):
        yj = y[:, :, j]
        obs = yj >= 0
        if obs.all():
            out += logphi_pad[j, yj, :]
        else:
            out[obs] += logphi_pad[j, yj[obs], :]
    return out


def _shifted_emissions(logE):
    """Per-occasion max-shifted emissions; returns (E, shift, bad) where bad
    is the first (i, t) whose occasion is impossible under every state."""
    shift = logE.max(axis=2)
    finite = np.isfinite(shift)
    if not finite.all():
        i, t = (int(v) for v in np.argwhere(~finite)[0])
        return None, None, (i, t)
    E = np.exp(logE - shift[:, :, None])
    return E, shift, None


def _first_zero(c_t, t):
    i = int(np.argwhere(c_t <= 0.0)[0][0])
    return (i, t)


def fb_batch_shared(logE, pi, Pi):
    """Scaled forward-backward smoothing under unit-invariant chain parameters.

    Returns (b, bb, loglik, bad): smoothing probabilities (n, T, k), pairwise
    transition posteriors (n, T - 1, k, k), per-unit log-likelihoods (n,), and
    bad = None or the first degenerate (unit, occasion).
    """
    n, T, k = logE.shape
    E, shift, bad = _shifted_emissions(logE)
    if bad is not None:
        return None, None, None, bad

    alpha = np.empty((n, T, k))
    c = np.empty((n, T))
    a = pi[None, :] * E[:, 0, :]
    c[:, 0] = a.sum(axis=1)
    if np.any(c[:, 0] <= 0.0):
        return None, None, None, _first_zero(c[:, 0], 0)
    alpha[:, 0, :] = a / c[:, 0, None]
    for t in range(1, T):
        a = (alpha[:, t - 1, :] @ Pi) * E[:, t, :]
        c[:, t] = a.sum(axis=1)
        if np.any(c[:, t] <= 0.0):
            return None, None, None, _first_zero(c[:, t], t)
        alpha[:, t, :] = a / c[:, t, None]
    loglik = (np.log(c) + shift).sum(axis=1)

    beta = np.empty((n, T, k))
    beta[:, T - 1, :] = 1.0
    bb = np.empty((n, T - 1, k, k))
    for t in range(T - 1, 0, -1):
        w = E[:, t, :] * beta[:, t, :]
        bb[:, t - 1] = (alpha[:, t - 1, :, None] * Pi[None, :, :]
                        * w[:, None, :] / c[:, t, None, None])
        beta[:, t - 1, :] = (w @ Pi.T) / c[:, t, None]
    b = alpha * beta
    return b, bb, loglik, None


def fb_batch_per_unit(logE, pi2, Pi4):
    """As :func:`fb_batch_shared` with per-unit initial vectors (n, k) and
    per-unit, per-occasion transition matrices (n, T - 1, k, k)."""
    n, T, k = logE.shape
    E, shift, bad = _shifted_emissions(logE)
    if bad is not None:
        return None, None, None, bad

    alpha = np.empty((n, T, k))
    c = np.empty((n, T))
    a = pi2 * E[:, 0, :]
    c[:, 0] = a.sum(axis=1)
    if np.any(c[:, 0] <= 0.0):
        return None, None, None, _first_zero(c[:, 0], 0)
    alpha[:, 0, :] = a / c[:, 0, None]
    for t in range(1, T):
        a = np.einsum("nu,nuv->nv", alpha[:, t - 1, :], Pi4[:, t - 1]) * E[:, t, :]
        c[:, t] = a.sum(axis=1)
        if np.any(c[:, t] <= 0.0):
            return None, None, None, _first_zero(c[:, t], t)
        alpha[:, t, :] = a / c[:, t, None]
    loglik = (np.log(c) + shift).sum(axis=1)

    beta = np.empty((n, T, k))
    beta[:, T - 1, :] = 1.0
    bb = np.empty((n, T - 1, k, k))
    for t in range(T - 1, 0, -1):
        w = E[:, t, :] * beta[:, t, :]
        bb[:, t - 1] = (alpha[:, t - 1, :, None] * Pi4[:, t - 1]
                        * w[:, None, :] / c[:, t, None, None])
        beta[:, t - 1, :] = np.einsum("nuv,nv->nu", Pi4[:, t - 1], w) / c[:, t, None]
    b = alpha * beta
    return b, bb, loglik, None
