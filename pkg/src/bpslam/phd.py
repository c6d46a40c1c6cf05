"""Zero-measurement PHD filter for the intensity of undetected features.

The intensity is a weighted particle set on the ROI disk; its total weight is
the expected number of undetected features. Only missed-detection updates
are applied, so the recursion prices how likely an unexplained measurement is
to stem from a newly detected feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import _kernels
from .geometry import FloorPlan
from .models import FeatureDynamicsParams, SensorModel

DEFAULT_PHD_PARTICLES = 10_000
# Agent particles used to average a position-dependent P_d over the agent prediction.
PD_AGENT_SAMPLES = 64


@dataclass
class UndetectedIntensity:
    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.particles.shape[0] != self.weights.shape[0]:
            raise ValueError("particles and weights differ in length")
        if np.any(self.weights < 0):
            raise ValueError("intensity weights must be nonnegative")

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return self.weights.shape[0]


@dataclass
class BirthInfo:
    """Expected number ``mu_n`` of newly detected features and their density ``f_n``.

    The density is held on a regular grid over the ROI bounding box
    (``grid[ix, iy]``, cell size ``cell``) and integrates to 1 over the grid.
    """

    mu_n: float
    grid: np.ndarray | None = None
    origin: np.ndarray | None = None
    cell: float = 1.0
    sensor: SensorModel | None = None
    pd_normalizer: float = 1.0

    def density(self, a, x=None) -> np.ndarray:
        """f_n(a | x) at positions ``a`` (..., 2)."""
        a = np.asarray(a, dtype=float)
        if self.grid is None or self.mu_n <= 0:
            return np.zeros(a.shape[:-1])
        idx = np.floor((a - self.origin) / self.cell).astype(np.int64)
        nx, ny = self.grid.shape
        ok = (idx[..., 0] >= 0) & (idx[..., 0] < nx) & (idx[..., 1] >= 0) & (idx[..., 1] < ny)
        out = np.zeros(a.shape[:-1])
        out[ok] = self.grid[idx[..., 0][ok], idx[..., 1][ok]]
        if self.sensor is not None and x is not None:
            pd = self.sensor.detection_probability(x, a)
            if np.ndim(pd) > 0:
                out = out * pd / self.pd_normalizer
        return out


def sample_uniform_disk(center, radius: float, n: int, rng) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    th = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.asarray(center, dtype=float) + np.column_stack([r * np.cos(th), r * np.sin(th)])


def phd_init(plan: FloorPlan, mu_initial: float, rng, n_particles: int = DEFAULT_PHD_PARTICLES) -> UndetectedIntensity:
    """Uniform intensity on the ROI disk with total mass ``mu_initial``."""
    if mu_initial < 0:
        raise ValueError("mu_initial must be nonnegative")
    if mu_initial == 0 or n_particles == 0:
        return UndetectedIntensity(np.empty((0, 2)), np.empty(0))
    pts = sample_uniform_disk(plan.roi_center, plan.roi_radius, n_particles, rng)
    return UndetectedIntensity(pts, np.full(n_particles, mu_initial / n_particles))


def _resample_to_budget(intensity: UndetectedIntensity, budget: int, rng) -> UndetectedIntensity:
    mass = intensity.mass
    if mass <= 0 or budget <= 0:
        return UndetectedIntensity(np.empty((0, 2)), np.empty(0))
    w = intensity.weights / mass
    # systematic draws of ``budget`` indices from the normalized weights
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    pos = (rng.random() + np.arange(budget)) / budget
    idx = np.minimum(np.searchsorted(cdf, pos, side="right"), len(w) - 1)
    return UndetectedIntensity(intensity.particles[idx].copy(), np.full(budget, mass / budget))


def phd_predict(intensity: UndetectedIntensity, dynamics: FeatureDynamicsParams, mu_birth: float,
                plan: FloorPlan, rng, n_budget: int | None = None,
                n_birth_particles: int | None = None) -> UndetectedIntensity:
    """Survival thinning, static-map jitter and uniform births of mass ``mu_birth``.

    Without births the particle set keeps its size and only the weights are
    scaled. With births the union is resampled back to ``n_budget`` particles
    (mass preserved).
    """
    if mu_birth < 0:
        raise ValueError("mu_birth must be nonnegative")
    budget = len(intensity) if n_budget is None else n_budget
    pts = intensity.particles
    if dynamics.sigma_a > 0 and len(pts):
        pts = pts + rng.normal(0.0, dynamics.sigma_a, size=pts.shape)
    out = UndetectedIntensity(pts, intensity.weights * dynamics.p_survival)
    if mu_birth == 0:
        return out
    nb = n_birth_particles or max(1, (budget or DEFAULT_PHD_PARTICLES) // 10)
    bpts = sample_uniform_disk(plan.roi_center, plan.roi_radius, nb, rng)
    merged = UndetectedIntensity(np.vstack([out.particles, bpts]),
                                 np.concatenate([out.weights, np.full(nb, mu_birth / nb)]))
    return _resample_to_budget(merged, budget or DEFAULT_PHD_PARTICLES, rng)


def _agent_samples(agent_particles, agent_weights):
    """Up to ``PD_AGENT_SAMPLES`` agent positions with weights summing to 1."""
    if agent_particles is None:
        return None, None
    X = np.asarray(agent_particles, dtype=float)
    n = X.shape[0]
    w = np.full(n, 1.0 / n) if agent_weights is None else np.asarray(agent_weights, dtype=float)
    if n <= PD_AGENT_SAMPLES:
        return X[:, :2], w / w.sum()
    idx = _kernels.systematic_resample(w / w.sum(), 0.5)
    idx = idx[:: n // PD_AGENT_SAMPLES][:PD_AGENT_SAMPLES]
    return X[idx, :2], np.full(len(idx), 1.0 / len(idx))


def mean_detection_probability(sensor: SensorModel, a, agent_particles=None, agent_weights=None):
    """P̄_d(a) = E over the agent prediction of P_d(x, a). Scalar for constant P_d."""
    xs, ws = _agent_samples(agent_particles, agent_weights)
    pd = sensor.detection_probability(None if xs is None else xs[0], a)
    if np.ndim(pd) == 0:
        return float(pd)
    if xs is None:
        return pd
    acc = 0.0
    for x, v in zip(xs, ws):
        acc = acc + v * np.asarray(sensor.detection_probability(x, a), dtype=float)
    if np.ndim(acc) == 0:
        return float(acc)
    return acc


def birth_info(intensity: UndetectedIntensity, sensor: SensorModel, plan: FloorPlan,
               agent_particles=None, agent_weights=None, cell: float = 1.0,
               smooth_cells: float = 1.0) -> BirthInfo:
    """Mean number and density of newly detected features from the predicted intensity."""
    if len(intensity) == 0 or intensity.mass <= 0:
        return BirthInfo(0.0)
    pd_bar = mean_detection_probability(sensor, intensity.particles, agent_particles, agent_weights)
    w_det = intensity.weights * pd_bar
    mu_n = float(np.sum(w_det))
    if mu_n <= 0:
        return BirthInfo(0.0)
    c = np.asarray(plan.roi_center, dtype=float)
    R = plan.roi_radius
    nb = int(np.ceil(2 * R / cell))
    origin = c - R
    edges = [origin[0] + cell * np.arange(nb + 1), origin[1] + cell * np.arange(nb + 1)]
    pts = intensity.particles
    pdconst = np.ndim(pd_bar) == 0
    # constant P_d: f_n is the normalized intensity; otherwise the grid holds
    # lambda and P_d(x, a) / Z is applied at lookup with Z taken at the agent mean.
    wts = w_det if pdconst else intensity.weights
    hist, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=edges, weights=wts)
    if smooth_cells > 0:
        hist = gaussian_filter(hist, smooth_cells, mode="constant")
    tot = hist.sum()
    if tot <= 0:
        return BirthInfo(0.0)
    grid = hist / (tot * cell * cell)
    if pdconst:
        return BirthInfo(mu_n, grid, origin, cell)
    xs, ws = _agent_samples(agent_particles, agent_weights)
    x_mean = (ws[:, None] * xs).sum(axis=0) if xs is not None else c
    centers = origin + cell * (np.stack(np.meshgrid(np.arange(nb), np.arange(nb), indexing="ij"), -1) + 0.5)
    Z = float(np.sum(grid * sensor.detection_probability(x_mean, centers)) * cell * cell)
    return BirthInfo(mu_n, grid, origin, cell, sensor=sensor, pd_normalizer=max(Z, 1e-300))


def phd_update(intensity: UndetectedIntensity, sensor: SensorModel, agent_particles=None,
               agent_weights=None) -> UndetectedIntensity:
    """Missed-detection update: weights times (1 - P̄_d)."""
    if len(intensity) == 0:
        return intensity
    pd_bar = mean_detection_probability(sensor, intensity.particles, agent_particles, agent_weights)
    return UndetectedIntensity(intensity.particles, intensity.weights * (1.0 - pd_bar))
