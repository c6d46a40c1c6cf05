"""Motion, feature-dynamics and measurement models plus the factors g and h."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT_2PI = np.sqrt(2.0 * np.pi)
# Floor on mu_FA * f_FA(z); keeps the likelihood ratios finite.
CLUTTER_FLOOR = 1e-12


@dataclass
class AgentState:
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v))):
            raise ValueError("agent state must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])

    @classmethod
    def from_vector(cls, x) -> "AgentState":
        x = np.asarray(x, dtype=float)
        return cls(x[:2].copy(), x[2:4].copy())


@dataclass(frozen=True)
class MotionParams:
    dt: float = 1.0
    sigma_w: float = 0.01

    def __post_init__(self):
        if self.dt <= 0 or self.sigma_w < 0:
            raise ValueError("need dt > 0 and sigma_w >= 0")

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Transition matrix F (4x4) and noise gain Gamma (4x2)."""
        dt = self.dt
        F = np.eye(4)
        F[0, 2] = F[1, 3] = dt
        G = np.array([[dt * dt / 2, 0.0], [0.0, dt * dt / 2], [dt, 0.0], [0.0, dt]])
        return F, G


@dataclass(frozen=True)
class FeatureDynamicsParams:
    p_survival: float = 0.999
    sigma_a: float = 1e-4

    def __post_init__(self):
        if not 0 < self.p_survival <= 1 or self.sigma_a < 0:
            raise ValueError("need 0 < p_survival <= 1 and sigma_a >= 0")


@dataclass(frozen=True)
class SensorModel:
    """Detection / clutter model of one PA.

    ``sigma_meas`` is the range std the filter assumes; ``None`` means use the
    per-measurement std carried by each record.
    """

    p_detect: float = 0.95
    mu_fa: float = 1.0
    fa_range_max: float = 30.0
    sigma_meas: float | None = 0.15

    def __post_init__(self):
        if not 0 <= self.p_detect <= 1:
            raise ValueError("p_detect must lie in [0, 1]")
        if self.mu_fa < 0 or self.fa_range_max <= 0:
            raise ValueError("need mu_fa >= 0 and fa_range_max > 0")
        if self.sigma_meas is not None and self.sigma_meas <= 0:
            raise ValueError("sigma_meas must be positive")

    def detection_probability(self, agent_pos=None, feature_pos=None):
        """P_d(x, a). Constant over the ROI; the arguments keep the hook open."""
        return self.p_detect

    def fa_density(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z >= 0.0) & (z <= self.fa_range_max)
        return np.where(inside, 1.0 / self.fa_range_max, 0.0)

    def clutter_intensity(self, z):
        """mu_FA * f_FA(z), floored at ``CLUTTER_FLOOR``."""
        return np.maximum(self.mu_fa * self.fa_density(z), CLUTTER_FLOOR)

    def filter_sigma(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if self.sigma_meas is None:
            return sigma
        return np.full_like(sigma, self.sigma_meas)


@dataclass(frozen=True)
class Measurement:
    z: float
    sigma: float

    def __post_init__(self):
        if self.z < 0 or self.sigma <= 0:
            raise ValueError("need z >= 0 and sigma > 0")


def motion_transition_sample(x: AgentState, params: MotionParams, rng, w=None) -> AgentState:
    """Near constant-velocity step ``x' = F x + Gamma w``.

    ``w`` may be passed explicitly (deterministic use); otherwise it is drawn
    from N(0, sigma_w^2 I).
    """
    F, G = params.matrices()
    if w is None:
        w = rng.normal(0.0, params.sigma_w, size=2) if params.sigma_w > 0 else np.zeros(2)
    return AgentState.from_vector(F @ x.as_vector() + G @ np.asarray(w, dtype=float))


def propagate_agent_particles(X: np.ndarray, params: MotionParams, rng) -> np.ndarray:
    """Vectorized ``motion_transition_sample`` for an (N, 4) particle array."""
    dt = params.dt
    out = X.copy()
    out[:, 0:2] += dt * X[:, 2:4]
    if params.sigma_w > 0:
        w = rng.normal(0.0, params.sigma_w, size=(X.shape[0], 2))
        out[:, 0:2] += 0.5 * dt * dt * w
        out[:, 2:4] += dt * w
    return out


def feature_transition(particles: np.ndarray, exist_mass: float, params: FeatureDynamicsParams, rng):
    """Predict one legacy PF.

    Returns ``(particles, predicted existence mass, predicted nonexistence
    mass)``; the nonexistence part is ``(1 - P_s) * exist + (1 - exist)``.
    """
    out = particles
    if params.sigma_a > 0:
        out = particles + rng.normal(0.0, params.sigma_a, size=particles.shape)
    alive = params.p_survival * exist_mass
    dead = (1.0 - params.p_survival) * exist_mass + (1.0 - exist_mass)
    return out, alive, dead


def range_likelihood(z, sigma, p, a):
    """Gaussian range density N(z; ||p - a||, sigma^2); broadcasts over arrays."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    d = np.linalg.norm(p - a, axis=-1)
    sigma = np.asarray(sigma, dtype=float)
    return np.exp(-0.5 * ((np.asarray(z) - d) / sigma) ** 2) / (sigma * SQRT_2PI)


def g_factor(x: AgentState, a, r: int, c: int, frame, sensor: SensorModel) -> float:
    """Legacy-PF factor for association value ``c`` (0 = missed detection).

    ``frame`` is a sequence of :class:`Measurement` (1-based in ``c``).
    """
    if r == 0:
        return 1.0 if c == 0 else 0.0
    pd = sensor.detection_probability(x.p, a)
    if c == 0:
        return 1.0 - pd
    m = frame[c - 1]
    sig = float(sensor.filter_sigma(m.sigma))
    f = range_likelihood(m.z, sig, x.p, a)
    return float(pd * f / sensor.clutter_intensity(m.z))


def h_factor(x: AgentState, a, r: int, b: int, z_m: Measurement, sensor: SensorModel, birth) -> float:
    """New-PF factor for association value ``b`` (0 = not a legacy PF).

    ``birth`` is a callable ``(a, x) -> mu_n * f_n(a | x)``. The ``r = 0``
    branch carries no function of ``a``; its scalar mass is 1.
    """
    if r == 0:
        return 1.0
    if b != 0:
        return 0.0
    lam = float(birth(a, x))
    if lam == 0.0:
        return 0.0
    sig = float(sensor.filter_sigma(z_m.sigma))
    f = range_likelihood(z_m.z, sig, x.p, a)
    return float(lam * f / sensor.clutter_intensity(z_m.z))
