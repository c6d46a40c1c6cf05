"""Particle-based BP-SLAM filter.

One time step runs: prediction, measurement evaluation for legacy and new
potential features (PFs), iterative data association per PA, measurement
updates of the agent and all PFs, detection / pruning, and the undetected-
feature PHD recursion.

Particle layout
---------------
The agent belief is ``X`` (N x 4) with weights ``w``; every PF keeps N
weighted position particles. Double integrals over (x, a) are estimated from
random particle pairs. Agent particle ``i`` is matched with feature particles
drawn from the PF weights, and feature particle ``l`` with agent particles
drawn from ``w``. Each factor averages ``n_partners`` such draws, which
lowers the variance of the per-particle weights.

Resampling
----------
The agent is resampled when its effective sample size drops below
``resample_threshold * N``. PF clouds are resampled after every update by
default (``feature_resample="ess"`` uses the ESS rule instead). After
resampling, a cloud is moved by a shrinkage kernel: ``a x + (1 - a) mean +
N(0, h^2 cov)`` with ``a = sqrt(1 - h^2)``, which keeps the cloud mean and
covariance. Clouds wider than ``reg_max_spread`` are left as they are. The
kernel counters the loss of diversity from repeated resampling,
which the tiny feature process noise cannot undo. ``agent_reg`` applies the
same kernel to the agent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bp_da import DaInputs, DaOutputs, da_iterate
from .geometry import FloorPlan
from .models import (SQRT_2PI, FeatureDynamicsParams, MotionParams, SensorModel,
                     feature_transition, propagate_agent_particles)
from .phd import BirthInfo, UndetectedIntensity, birth_info, phd_init, phd_predict, phd_update
from .sim import MeasurementFrame

log = logging.getLogger(__name__)

# RNG stream purposes; streams are keyed by (step seed, PA, purpose, extra)
_AGENT, _FEATURE, _NEW, _RESAMPLE, _PHD, _AGENT_RESAMPLE, _PAIR = range(7)


class FilterDivergence(RuntimeError):
    """All agent weights vanished or became non-finite."""


@dataclass
class FilterParams:
    n_particles: int = 10_000
    p_det: float = 0.5
    p_prun: float = 1e-4
    da_eps: float = 1e-7
    da_p_max: int = 1000
    resample_threshold: float = 0.5
    motion: MotionParams = field(default_factory=MotionParams)
    dynamics: FeatureDynamicsParams = field(default_factory=FeatureDynamicsParams)
    sensor: SensorModel = field(default_factory=SensorModel)
    sensors: list | None = None
    mu_birth: float = 1e-4
    mu_initial: float = 6.0
    n_phd_particles: int = 10_000
    phd_cell: float = 1.0
    phd_smooth_cells: float = 1.0
    sigma_a1: float = 1e-3
    agent_prior_halfwidth: float = 0.5
    n_partners: int = 16
    pairing: str = "random"  # or "index": agent particle i pairs with feature particle i
    reg_bandwidth: float | None = 0.1  # None: N^(-1/6)
    reg_max_spread: float = 1.0
    feature_resample: str = "always"  # or "ess"
    common_offset: bool = False
    agent_reg: float = 0.3

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not 0 < self.p_prun <= self.p_det < 1:
            raise ValueError("need 0 < p_prun <= p_det < 1")
        if not 0 <= self.resample_threshold <= 1:
            raise ValueError("resample_threshold must lie in [0, 1]")
        if self.mu_birth < 0 or self.mu_initial < 0:
            raise ValueError("birth and initial masses must be nonnegative")
        if self.n_partners < 1:
            raise ValueError("n_partners must be >= 1")
        if self.pairing not in ("random", "index") or self.feature_resample not in ("always", "ess"):
            raise ValueError("unknown pairing or feature_resample mode")
        if not 0 <= self.agent_reg < 1 or not (self.reg_bandwidth is None or 0 <= self.reg_bandwidth < 1):
            raise ValueError("regularization bandwidths must lie in [0, 1)")

    def sensor_for(self, j: int) -> SensorModel:
        if self.sensors is not None:
            return self.sensors[j]
        return self.sensor


@dataclass
class PotentialFeature:
    feature_id: int
    particles: np.ndarray
    p_exist: float
    estimate: np.ndarray
    detected: bool = False
    weights: np.ndarray | None = None  # None means uniform

    def normalized_weights(self) -> np.ndarray:
        n = self.particles.shape[0]
        return np.full(n, 1.0 / n) if self.weights is None else self.weights


@dataclass
class FeatureEstimate:
    feature_id: int
    p_exist: float
    position: np.ndarray
    detected: bool


@dataclass
class StepReport:
    n: int
    agent_estimate: np.ndarray
    features: list[list[FeatureEstimate]]
    n_detected: list[int]
    n_pruned: list[int]
    da_iterations: list[int]
    da_converged: list[bool]
    ess: float
    resampled: bool

    def detected_positions(self, j: int) -> np.ndarray:
        pts = [f.position for f in self.features[j] if f.detected]
        return np.asarray(pts, dtype=float).reshape(-1, 2)


@dataclass
class _PaEval:
    """Per-PA quantities shared between evaluation, DA and update."""

    beta: np.ndarray
    xi: np.ndarray
    lik: list
    pairs: list
    alive: np.ndarray
    dead: np.ndarray
    new_clouds: list
    new_mass: np.ndarray
    frame: MeasurementFrame | None = None
    birth: BirthInfo | None = None
    da: DaOutputs | None = None


def _float_key(x: float) -> int:
    return int(np.float64(x).view(np.uint64))


class BPSLAMFilter:
    """Sequential BP-SLAM over ``J`` physical anchors.

    Parameters
    ----------
    params : FilterParams
    plan : FloorPlan
        Supplies the ROI for the undetected-feature intensity.
    pa_positions : sequence of 2-D points
        Prior means of the physical anchors.
    agent_start : 2-D point
        Centre of the uniform agent position prior.
    seed : int or numpy Generator
    """

    def __init__(self, params: FilterParams, plan: FloorPlan, pa_positions, agent_start, seed=0):
        self.params = params
        self.plan = plan
        self._rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.n = 0
        N = params.n_particles
        init = np.random.default_rng(self._rng.integers(2**63))
        h = params.agent_prior_halfwidth
        c = np.array([agent_start[0], agent_start[1], 0.0, 0.0])
        self.X = c + init.uniform(-h, h, size=(N, 4))
        self.w = np.full(N, 1.0 / N)
        self.w_uniform = True
        self._u_common = None
        self.features: list[list[PotentialFeature]] = []
        self.phd: list[UndetectedIntensity] = []
        self.next_id: list[int] = []
        for pa in pa_positions:
            pa = np.asarray(pa, dtype=float)
            parts = pa + init.normal(0.0, params.sigma_a1, size=(N, 2))
            self.features.append([PotentialFeature(0, parts, 1.0, parts.mean(axis=0), True)])
            self.next_id.append(1)
            self.phd.append(phd_init(plan, params.mu_initial, init, params.n_phd_particles))

    @property
    def n_pas(self) -> int:
        return len(self.features)

    # -- helpers --------------------------------------------------------
    def _stream(self, base: int, j: int, purpose: int, *extra: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([base, j, purpose, *extra]))

    def _pairing(self, weights, rng) -> np.ndarray:
        """N indices drawn from ``weights`` (None = uniform) in random order."""
        N = self.params.n_particles
        if self.params.pairing == "index":
            return np.arange(N)
        if weights is None:
            return rng.permutation(N)
        return rng.permutation(_kernels.systematic_resample(weights, rng.random()))

    def _resample_cloud(self, f: PotentialFeature, rng):
        if f.weights is None:
            return
        p = self.params
        N = len(f.weights)
        if p.feature_resample == "always" or 1.0 / np.sum(f.weights**2) < p.resample_threshold * N:
            w = f.weights
            mu = w @ f.particles
            d = f.particles - mu
            cov = (w[:, None] * d).T @ d
            u = rng.random()
            if p.common_offset and self._u_common is not None:
                u = self._u_common
            f.particles = f.particles[_kernels.systematic_resample(w, u)]
            f.weights = None
            h = p.reg_bandwidth if p.reg_bandwidth is not None else N ** (-1.0 / 6.0)
            if h > 0 and np.sqrt(max(np.linalg.eigvalsh(cov)[-1], 0.0)) < p.reg_max_spread:
                # kernel jitter with shrinkage towards the mean keeps the covariance
                a = np.sqrt(1.0 - h * h)
                f.particles = (a * f.particles + (1.0 - a) * mu
                               + rng.multivariate_normal(np.zeros(2), h * h * cov, size=N))

    def agent_mean(self) -> np.ndarray:
        return self.w @ self.X

    # -- schedule pieces ------------------------------------------------
    def predict(self, base: int):
        """Agent motion, PF survival/jitter and PHD prediction.

        Returns per-PA arrays of predicted existence and nonexistence masses.
        """
        p = self.params
        alive_all, dead_all = [], []
        if self.n == 1:
            for feats in self.features:
                e = np.array([f.p_exist for f in feats])
                alive_all.append(e)
                dead_all.append(1.0 - e)
            return alive_all, dead_all
        self.X = propagate_agent_particles(self.X, p.motion, self._stream(base, 0, _AGENT))
        for j, feats in enumerate(self.features):
            alive = np.empty(len(feats))
            dead = np.empty(len(feats))
            for k, f in enumerate(feats):
                f.particles, alive[k], dead[k] = feature_transition(
                    f.particles, f.p_exist, p.dynamics, self._stream(base, j, _FEATURE, f.feature_id))
            alive_all.append(alive)
            dead_all.append(dead)
            self.phd[j] = phd_predict(self.phd[j], p.dynamics, p.mu_birth, self.plan,
                                      self._stream(base, j, _PHD), p.n_phd_particles)
        return alive_all, dead_all

    def evaluate_legacy(self, j: int, frame: MeasurementFrame, alive, dead, base: int = 0):
        """beta (K x (M+1)), agent-side N x M likelihood-ratio matrices and pairings."""
        sensor = self.params.sensor_for(j)
        feats = self.features[j]
        K, M = len(feats), len(frame)
        pd = sensor.detection_probability(None, None)
        sig = sensor.filter_sigma(frame.sigma)
        inv2s2 = 0.5 / sig**2
        scale = pd / (SQRT_2PI * sig * sensor.clutter_intensity(frame.z))
        beta = np.empty((K, M + 1))
        lik, pairs = [], []
        P = self.X[:, :2]
        S = self.params.n_partners
        for k, f in enumerate(feats):
            rng = self._stream(base, j, _PAIR, f.feature_id)
            rho = self._pairing(f.weights, rng)
            L = _kernels.likelihood_matrix(P, f.particles[rho], frame.z, inv2s2, scale)
            for _ in range(S - 1):
                L += _kernels.likelihood_matrix(P, f.particles[self._pairing(f.weights, rng)],
                                                frame.z, inv2s2, scale)
            if S > 1:
                L /= S
            lik.append(L)
            pairs.append(rho)
            beta[k, 0] = alive[k] * (1.0 - pd) + dead[k]
            beta[k, 1:] = alive[k] * (self.w @ L)
        return beta, lik, pairs

    def evaluate_new(self, j: int, frame: MeasurementFrame, birth: BirthInfo, base: int):
        """xi (M x (K+1)), new-PF proposal clouds and their importance masses."""
        sensor = self.params.sensor_for(j)
        K, M = len(self.features[j]), len(frame)
        xi = np.ones((M, K + 1))
        clouds = []
        mass = np.zeros(M)
        sig = sensor.filter_sigma(frame.sigma)
        P = self.X[:, :2]
        N = P.shape[0]
        for m in range(M):
            z, s = float(frame.z[m]), float(sig[m])
            if birth.mu_n <= 0:
                clouds.append(None)
                continue
            rng = self._stream(base, j, _NEW, _float_key(z), _float_key(s))
            r = np.abs(rng.normal(z, s, size=N))
            th = rng.uniform(0.0, 2.0 * np.pi, size=N)
            A = P + np.column_stack([r * np.cos(th), r * np.sin(th)])
            lam = birth.mu_n * birth.density(A, P)
            # N(z; r, s) / folded-normal proposal density of r; r = |A - P| by construction
            ratio = 1.0 / (1.0 + np.exp(-2.0 * r * z / (s * s)))
            iw = self.w * lam * 2.0 * np.pi * r * ratio / float(sensor.clutter_intensity(z))
            mass[m] = float(iw.sum())
            xi[m, 0] = 1.0 + mass[m]
            clouds.append((A, iw))
        return xi, clouds, mass

    def update(self, evals: list[_PaEval], base: int):
        """Measurement updates of the agent and of all legacy and new PFs."""
        p = self.params
        w_pred = self.w
        P = self.X[:, :2]
        logw = np.log(np.maximum(w_pred, 0.0))
        pruned = [0] * self.n_pas
        with np.errstate(divide="ignore"):
            for j, ev in enumerate(evals):
                sensor = p.sensor_for(j)
                pd = sensor.detection_probability(None, None)
                eta = ev.da.eta
                frame = ev.frame
                sg = sensor.filter_sigma(frame.sigma)
                scale = pd / (SQRT_2PI * sg * sensor.clutter_intensity(frame.z))
                new_feats = []
                for k, f in enumerate(self.features[j]):
                    G = eta[k, 0] * (1.0 - pd) + ev.lik[k] @ eta[k, 1:]
                    logw += np.log(ev.alive[k] * G + eta[k, 0] * ev.dead[k])
                    rng = self._stream(base, j, _RESAMPLE, f.feature_id)
                    if p.pairing == "index":
                        GF = G
                    elif self.w_uniform and f.weights is None and p.n_partners == 1:
                        # both clouds uniform: the agent-side pairs serve the feature side too
                        GF = np.empty_like(G)
                        GF[ev.pairs[k]] = G
                    else:
                        LF = 0.0
                        for _ in range(p.n_partners):
                            pi = self._pairing(None if self.w_uniform else w_pred, rng)
                            LF = LF + _kernels.likelihood_matrix(P[pi], f.particles, frame.z,
                                                                 0.5 / sg**2, scale)
                        GF = eta[k, 0] * (1.0 - pd) + (LF / p.n_partners) @ eta[k, 1:]
                    om = f.normalized_weights() * GF
                    tot = float(om.sum())
                    mass1 = ev.alive[k] * tot
                    mass0 = ev.dead[k] * eta[k, 0]
                    f.p_exist = float(mass1 / (mass1 + mass0)) if mass1 + mass0 > 0 else 0.0
                    if tot > 0:
                        f.weights = om / tot
                        f.estimate = f.weights @ f.particles
                        self._resample_cloud(f, rng)
                    new_feats.append(f)
                sig = ev.da.sigma_out
                for m, cloud in enumerate(ev.new_clouds):
                    fid = self.next_id[j]
                    self.next_id[j] += 1
                    I = ev.new_mass[m]
                    e1 = sig[m, 0] * I
                    pe = float(e1 / (e1 + sig[m].sum())) if e1 > 0 else 0.0
                    if pe <= p.p_prun or cloud is None:
                        pruned[j] += 1
                        continue
                    A, iw = cloud
                    om = iw / iw.sum()
                    f = PotentialFeature(fid, A, pe, om @ A, weights=om)
                    self._resample_cloud(f, self._stream(base, j, _RESAMPLE, fid))
                    new_feats.append(f)
                self.features[j] = new_feats
        if not np.any(np.isfinite(logw)):
            raise FilterDivergence(f"all agent weights vanished at step {self.n}")
        logw = np.where(np.isnan(logw), -np.inf, logw)
        w = np.exp(logw - logw.max())
        self.w = w / w.sum()
        self.w_uniform = False
        return pruned

    def detect_prune(self, pruned: list[int]):
        p = self.params
        for j, feats in enumerate(self.features):
            keep = []
            for f in feats:
                if f.p_exist <= p.p_prun:
                    pruned[j] += 1
                    continue
                f.detected = f.p_exist > p.p_det
                keep.append(f)
            self.features[j] = keep
        return pruned

    def _resample_agent(self, base: int) -> tuple[float, bool]:
        N = len(self.w)
        ess = float(1.0 / np.sum(self.w**2))
        if ess < self.params.resample_threshold * N:
            h = self.params.agent_reg
            if h > 0:
                mean = self.w @ self.X
                d = self.X - mean
                cov = (self.w[:, None] * d).T @ d
            idx = _kernels.systematic_resample(self.w, self._u_common)
            self.X = self.X[idx]
            if h > 0:
                # kernel jitter with shrinkage towards the mean keeps the covariance
                rng = self._stream(base, 0, _AGENT_RESAMPLE, 1)
                a = np.sqrt(1.0 - h * h)
                self.X = a * self.X + (1.0 - a) * mean + rng.multivariate_normal(np.zeros(4), h * h * cov, size=N)
            self.w = np.full(N, 1.0 / N)
            self.w_uniform = True
            return ess, True
        return ess, False

    def step(self, frames: list[MeasurementFrame], *, keep_evals: bool = False) -> StepReport:
        """Advance one time step with one frame per PA."""
        if len(frames) != self.n_pas:
            raise ValueError(f"expected {self.n_pas} frames, got {len(frames)}")
        p = self.params
        self.n += 1
        base = int(self._rng.integers(2**63))
        self._u_common = self._stream(base, 0, _AGENT_RESAMPLE).random()
        alive, dead = self.predict(base)
        X_pred, w_pred = self.X, self.w
        evals = []
        for j, frame in enumerate(frames):
            sensor = p.sensor_for(j)
            birth = birth_info(self.phd[j], sensor, self.plan, X_pred, w_pred,
                               p.phd_cell, p.phd_smooth_cells)
            beta, lik, pairs = self.evaluate_legacy(j, frame, alive[j], dead[j], base)
            xi, clouds, mass = self.evaluate_new(j, frame, birth, base)
            ev = _PaEval(beta, xi, lik, pairs, alive[j], dead[j], clouds, mass, frame, birth)
            ev.da = da_iterate(DaInputs(beta, xi), p.da_eps, p.da_p_max)
            if not ev.da.converged:
                log.warning("DA for PA %d did not converge at step %d", j, self.n)
            evals.append(ev)
        pruned = self.update(evals, base)
        for j in range(self.n_pas):
            self.phd[j] = phd_update(self.phd[j], p.sensor_for(j), X_pred, w_pred)
        x_hat = self.agent_mean()
        pruned = self.detect_prune(pruned)
        ess, resampled = self._resample_agent(base)
        self.last_evals = evals if keep_evals else None
        feats = [[FeatureEstimate(f.feature_id, f.p_exist, np.array(f.estimate), f.detected) for f in fs]
                 for fs in self.features]
        return StepReport(
            n=self.n,
            agent_estimate=x_hat,
            features=feats,
            n_detected=[sum(f.detected for f in fs) for fs in self.features],
            n_pruned=pruned,
            da_iterations=[ev.da.iterations for ev in evals],
            da_converged=[ev.da.converged for ev in evals],
            ess=ess,
            resampled=resampled,
        )
