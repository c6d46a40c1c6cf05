"""Loopy belief propagation for feature/measurement data association.

Two association vectors describe the same event from both sides: ``c[k]``
(feature k -> measurement index, 0 = missed) and ``b[m]`` (measurement m ->
feature index, 0 = new feature or clutter). The pairwise exclusion factor
``psi`` ties them together, and BP on that graph scales as O(K M) per sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from . import _kernels

DEFAULT_EPS = 1e-7
DEFAULT_P_MAX = 1000
ENUM_LIMIT = 8


class DegenerateInputError(ValueError):
    """Raised for DA inputs without any feasible association."""


@dataclass
class DaInputs:
    """``beta`` is K x (M+1) over c in {0..M}; ``xi`` is M x (K+1) over b in {0..K}."""

    beta: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if beta.ndim != 2 or xi.ndim != 2:
            raise ValueError("beta and xi must be 2-D")
        K = beta.shape[0]
        M = xi.shape[0]
        if beta.shape[1] != M + 1 or xi.shape[1] != K + 1:
            raise ValueError(f"shape mismatch: beta {beta.shape}, xi {xi.shape}")
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(xi))):
            raise ValueError("beta and xi must be finite")
        if np.any(beta < 0) or np.any(xi < 0):
            raise ValueError("beta and xi must be nonnegative")
        if K and np.any(beta.max(axis=1) <= 0):
            raise DegenerateInputError("beta has an all-zero row")
        if M and np.any(xi.max(axis=1) <= 0):
            raise DegenerateInputError("xi has an all-zero row")
        self.beta = beta
        self.xi = xi

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    @property
    def M(self) -> int:
        return self.xi.shape[0]


@dataclass
class DaOutputs:
    """Row-normalized extrinsic messages ``eta`` (K x (M+1)) and ``sigma_out`` (M x (K+1))."""

    eta: np.ndarray
    sigma_out: np.ndarray
    iterations: int = 0
    converged: bool = True


def exclusion_psi(c: int, b: int, k: int, m: int) -> int:
    """Pairwise consistency of ``c_k`` and ``b_m`` (k, m are 1-based)."""
    if (c == m and b != k) or (b == k and c != m):
        return 0
    return 1


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    """Normalize rows to sum 1; rows containing +inf put all mass on the inf entries."""
    a = np.array(a, dtype=float)
    inf = np.isinf(a)
    rows = inf.any(axis=1)
    if rows.any():
        a[rows] = inf[rows].astype(float)
    tot = a.sum(axis=1, keepdims=True)
    return a / tot


def _trivial(inputs: DaInputs) -> DaOutputs:
    K, M = inputs.K, inputs.M
    eta = np.zeros((K, M + 1))
    eta[:, 0] = 1.0
    sig = np.zeros((M, K + 1))
    sig[:, 0] = 1.0
    return DaOutputs(eta, sig, 0, True)


def da_iterate(inputs: DaInputs, eps: float = DEFAULT_EPS, p_max: int = DEFAULT_P_MAX,
               direct: bool = False) -> DaOutputs:
    """Iterative DA messages.

    Parameters
    ----------
    inputs : DaInputs
    eps : float
        Stop once the root-sum-square change of all normalized ``nu`` messages
        falls below ``eps``.
    p_max : int
        Iteration cap.
    direct : bool
        Run the full-vector message recursion instead of the scalar-ratio
        form (slow; for cross-checking).

    Returns
    -------
    DaOutputs
        ``eta[k]`` is the product of incoming ``nu`` messages at ``c_k`` and
        ``sigma_out[m]`` the product of incoming ``zeta`` messages at ``b_m``,
        each normalized to sum 1.
    """
    if inputs.K == 0 or inputs.M == 0:
        return _trivial(inputs)
    if direct:
        return _da_direct(inputs, eps, p_max)
    K, M = inputs.K, inputs.M
    s, t, it, conv = _kernels.da_ratio(inputs.beta, inputs.xi, eps, p_max)
    if np.isnan(s).any() or np.isnan(t).any():
        raise DegenerateInputError("DA inputs admit no feasible joint association")
    eta = np.empty((K, M + 1))
    eta[:, 0] = 1.0
    eta[:, 1:] = s.T
    sig = np.empty((M, K + 1))
    sig[:, 0] = 1.0
    sig[:, 1:] = t.T
    return DaOutputs(_normalize_rows(eta), _normalize_rows(sig), int(it), bool(conv))


def _psi_matrix(K: int, M: int, k: int, m: int) -> np.ndarray:
    """(M+1) x (K+1) table of ``exclusion_psi(c, b, k, m)``."""
    out = np.empty((M + 1, K + 1))
    for c in range(M + 1):
        for b in range(K + 1):
            out[c, b] = exclusion_psi(c, b, k, m)
    return out


def _da_direct(inputs: DaInputs, eps: float, p_max: int) -> DaOutputs:
    beta, xi = inputs.beta, inputs.xi
    K, M = inputs.K, inputs.M
    psi = [[_psi_matrix(K, M, k + 1, m + 1) for m in range(M)] for k in range(K)]
    # zeta[k, m, :] over b in {0..K}; nu[m, k, :] over c in {0..M}
    zeta = np.empty((K, M, K + 1))
    for k in range(K):
        for m in range(M):
            zeta[k, m] = psi[k][m].T @ beta[k]
    zeta /= zeta.sum(axis=2, keepdims=True)
    nu = np.full((M, K, M + 1), 1.0 / (M + 1))
    converged = False
    it = 0
    while it < p_max:
        it += 1
        new_nu = np.empty_like(nu)
        for m in range(M):
            for k in range(K):
                others = np.prod(np.delete(zeta[:, m, :], k, axis=0), axis=0)
                new_nu[m, k] = psi[k][m] @ (xi[m] * others)
        new_nu /= new_nu.sum(axis=2, keepdims=True)
        for k in range(K):
            for m in range(M):
                others = np.prod(np.delete(new_nu[:, k, :], m, axis=0), axis=0)
                zeta[k, m] = psi[k][m].T @ (beta[k] * others)
        zeta /= zeta.sum(axis=2, keepdims=True)
        delta = np.sqrt(np.sum((new_nu - nu) ** 2))
        nu = new_nu
        if delta < eps:
            converged = True
            break
    eta = np.prod(nu, axis=0)
    sig = np.prod(zeta, axis=0)
    return DaOutputs(_normalize_rows(eta), _normalize_rows(sig), it, converged)


def da_marginals(inputs: DaInputs, outputs: DaOutputs) -> tuple[np.ndarray, np.ndarray]:
    """Approximate association marginals ``p(c_k)`` and ``p(b_m)`` (beliefs = local factor x extrinsic)."""
    pc = inputs.beta * outputs.eta
    pb = inputs.xi * outputs.sigma_out
    if pc.size:
        pc = pc / pc.sum(axis=1, keepdims=True)
    if pb.size:
        pb = pb / pb.sum(axis=1, keepdims=True)
    return pc, pb


def exact_da_marginals(inputs: DaInputs) -> DaOutputs:
    """Exact marginals by enumerating all feasible association maps.

    ``eta`` holds ``p(c_k)`` and ``sigma_out`` holds ``p(b_m)``. Both sizes
    are limited to ``ENUM_LIMIT``.
    """
    K, M = inputs.K, inputs.M
    if K > ENUM_LIMIT or M > ENUM_LIMIT:
        raise ValueError(f"enumeration limited to K, M <= {ENUM_LIMIT}")
    beta, xi = inputs.beta, inputs.xi
    pc = np.zeros((K, M + 1))
    pb = np.zeros((M, K + 1))
    c = [0] * K
    taken = [0] * (M + 1)  # taken[m] = feature (1-based) using measurement m
    acc = {"total": 0.0}

    def visit(k: int, w: float) -> None:
        if w == 0.0:
            return
        if k == K:
            for m in range(M):
                w_m = xi[m, taken[m + 1]]
                w *= w_m
            if w == 0.0:
                return
            acc["total"] += w
            for kk in range(K):
                pc[kk, c[kk]] += w
            for m in range(M):
                pb[m, taken[m + 1]] += w
            return
        c[k] = 0
        visit(k + 1, w * beta[k, 0])
        for m in range(1, M + 1):
            if taken[m]:
                continue
            c[k] = m
            taken[m] = k + 1
            visit(k + 1, w * beta[k, m])
            taken[m] = 0
        c[k] = 0

    visit(0, 1.0)
    total = acc["total"]
    if total <= 0.0:
        raise DegenerateInputError("no feasible association has positive weight")
    return DaOutputs(pc / total, pb / total, 0, True)
