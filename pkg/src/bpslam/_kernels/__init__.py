"""Kernel backend selection.

The compiled extension is used when it imports; ``BPSLAM_PURE_PYTHON=1``
forces the numpy fallback. ``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _pykernels

_force_py = os.environ.get("BPSLAM_PURE_PYTHON", "").strip() not in ("", "0")

_impl = _pykernels
BACKEND = "python"
if not _force_py:
    try:
        from . import _ckernels

        _impl = _ckernels
        BACKEND = "cython"
    except ImportError:
        pass

EXP_CUTOFF = _pykernels.EXP_CUTOFF


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def likelihood_matrix(P, A, z, inv2s2, scale):
    """(N, M) matrix ``scale[m] * exp(-(z[m] - |P_i - A_i|)^2 * inv2s2[m])``; far tails are exact zeros."""
    return _impl.likelihood_matrix(_f64(P), _f64(A), _f64(z), _f64(inv2s2), _f64(scale))


def da_ratio(beta, xi, eps, p_max):
    """Scalar-ratio DA iteration; see ``bpslam.bp_da.da_iterate`` for the public API."""
    return _impl.da_ratio(_f64(beta), _f64(xi), float(eps), int(p_max))


def systematic_resample(weights, u):
    """Systematic resampling indices for ``weights`` with offset ``u`` in [0, 1)."""
    return _impl.systematic_resample(_f64(weights), float(u))


__all__ = ["BACKEND", "EXP_CUTOFF", "likelihood_matrix", "da_ratio", "systematic_resample"]
