"""Pure numpy implementations of the hot kernels.

Semantics must match ``_ckernels.pyx`` entry for entry.
"""

import numpy as np

# 0.5 * ((z - d) / sigma)^2 above this is treated as an exact zero (|z - d| > 10 sigma).
EXP_CUTOFF = 50.0


def likelihood_matrix(P, A, z, inv2s2, scale):
    """``out[i, m] = scale[m] * exp(-(z[m] - |P_i - A_i|)^2 * inv2s2[m])``."""
    d = np.hypot(P[:, 0] - A[:, 0], P[:, 1] - A[:, 1])
    arg = (z[None, :] - d[:, None]) ** 2 * inv2s2[None, :]
    out = scale[None, :] * np.exp(-np.minimum(arg, EXP_CUTOFF))
    out[arg > EXP_CUTOFF] = 0.0
    return out


def da_ratio(beta, xi, eps, p_max):
    """Ratio-form loopy BP for the redundant DA model.

    Returns ``(s, t, iterations, converged)`` with ``s[m, k]`` the ratio
    nu_{m->k}(c=m) / nu_{m->k}(c!=m) and ``t[k, m]`` the ratio
    zeta_{k->m}(b=k) / zeta_{k->m}(b!=k). Exclusion sums are formed
    directly (no ``total - own`` subtraction) so saturated ratios stay exact.
    """
    K = beta.shape[0]
    M = xi.shape[0]
    b0 = beta[:, 0]
    B1 = beta[:, 1:]
    x0 = xi[:, 0]
    X1 = xi[:, 1:]
    off_m = 1.0 - np.eye(M)
    off_k = 1.0 - np.eye(K)

    with np.errstate(divide="ignore", invalid="ignore"):
        t = B1 / (b0[:, None] + B1 @ off_m)
        nu_c = np.full((K, M), 1.0 / (1.0 + M))
        nu_d = nu_c.copy()
        s = np.ones((M, K))
        converged = False
        it = 0
        while it < p_max:
            it += 1
            s = X1 / (x0[:, None] + (X1 * t.T) @ off_k)
            t = B1 / (b0[:, None] + (B1 * s.T) @ off_m)
            new_c = 1.0 / (1.0 + M / s.T)
            new_d = 1.0 / (s.T + M)
            delta = np.sqrt(np.sum((new_c - nu_c) ** 2 + M * (new_d - nu_d) ** 2))
            nu_c, nu_d = new_c, new_d
            if delta < eps:
                converged = True
                break
    return s, t, it, converged


def systematic_resample(weights, u):
    """Systematic resampling indices for normalized ``weights`` and offset ``u`` in [0, 1)."""
    n = weights.shape[0]
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    pos = (u + np.arange(n)) / n
    idx = np.searchsorted(cdf, pos, side="right")
    return np.minimum(idx, n - 1).astype(np.intp)
