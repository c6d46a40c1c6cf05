"""Synthetic range measurements: Bernoulli detections, Gaussian noise, Poisson clutter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import AnchorMap, FloorPlan, build_anchor_map, generate_trajectory, round_corners
from .models import Measurement, SensorModel


@dataclass
class MeasurementFrame:
    """Range measurements of PA ``j`` (0-based) at step ``n`` (1-based)."""

    n: int
    j: int
    z: np.ndarray = field(default_factory=lambda: np.empty(0))
    sigma: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_clipped: int = 0

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).reshape(-1)
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if self.z.shape != self.sigma.shape:
            raise ValueError("z and sigma differ in length")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")
        if np.any(self.z < 0):
            raise ValueError("ranges must be nonnegative")

    def __len__(self):
        return self.z.shape[0]

    @property
    def measurements(self) -> list[Measurement]:
        return [Measurement(float(z), float(s)) for z, s in zip(self.z, self.sigma)]


@dataclass
class Scenario:
    """Ground truth plus generator sensor.

    ``noise_sigma`` overrides the std of the range noise actually drawn (0
    gives exact ranges); records always carry ``sensor.sigma_meas``.
    """

    plan: FloorPlan
    anchors: AnchorMap
    trajectory: np.ndarray
    sensor: SensorModel
    seed: int = 0
    noise_sigma: float | None = None

    def __post_init__(self):
        self.trajectory = np.asarray(self.trajectory, dtype=float).reshape(-1, 2)
        if len(self.trajectory) == 0:
            raise ValueError("trajectory must be nonempty")
        if self.sensor.sigma_meas is None:
            raise ValueError("generator sensor needs a true sigma")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def n_steps(self) -> int:
        return len(self.trajectory)

    @property
    def true_velocity(self) -> np.ndarray:
        """Finite-difference velocity per step (first step takes the first difference)."""
        d = np.diff(self.trajectory, axis=0)
        return np.vstack([d[:1], d]) if len(d) else np.zeros((1, 2))


def generate_frame(scenario: Scenario, n: int, rng) -> list[MeasurementFrame]:
    """One frame per PA at step ``n`` (1-based)."""
    if not 1 <= n <= scenario.n_steps:
        raise IndexError(f"step {n} outside 1..{scenario.n_steps}")
    p = scenario.trajectory[n - 1]
    s = scenario.sensor
    sigma = float(s.sigma_meas)
    noise = sigma if scenario.noise_sigma is None else float(scenario.noise_sigma)
    frames = []
    for j in range(scenario.anchors.n_pas):
        feats = scenario.anchors.features(j)
        det = rng.random(len(feats)) < s.p_detect
        d = np.linalg.norm(feats[det] - p, axis=1)
        z = d + rng.normal(0.0, noise, size=d.shape) if noise > 0 else d
        clipped = int(np.sum(z < 0))
        z = np.maximum(z, 0.0)
        n_fa = rng.poisson(s.mu_fa) if s.mu_fa > 0 else 0
        z_fa = rng.uniform(0.0, s.fa_range_max, size=n_fa)
        allz = np.concatenate([z, z_fa])[rng.permutation(len(z) + n_fa)]
        frames.append(MeasurementFrame(n, j, allz, np.full(len(allz), sigma), clipped))
    return frames


def generate_run(scenario: Scenario, rng) -> list[list[MeasurementFrame]]:
    """Frames for every step of the trajectory."""
    return [generate_frame(scenario, n, rng) for n in range(1, scenario.n_steps + 1)]


def ellipse_waypoints(center, semi_axes, start_angle: float = 0.0, turns: float = 1.0,
                      n_points: int = 720) -> np.ndarray:
    """Counter-clockwise polyline approximation of an axis-aligned ellipse."""
    phi = start_angle + 2.0 * np.pi * turns * np.linspace(0.0, 1.0, n_points + 1)
    c = np.asarray(center, dtype=float)
    return c + np.column_stack([semi_axes[0] * np.cos(phi), semi_axes[1] * np.sin(phi)])


def scenario_from_config(cfg: dict, seed: int = 0) -> Scenario:
    """Build a :class:`Scenario` from the ``scenario`` block of a run config."""
    plan = FloorPlan.from_segments(cfg["walls"], cfg.get("roi_center"), cfg.get("roi_radius", 30.0))
    anchors = build_anchor_map(cfg["pas"], plan)
    tr = cfg["trajectory"]
    if tr.get("type", "polyline") == "ellipse":
        wp = ellipse_waypoints(tr["center"], tr["semi_axes"], tr.get("start_angle", 0.0),
                               tr.get("turns", 1.0), tr.get("arc_points", 720))
    else:
        wp = round_corners(tr["waypoints"], tr.get("corner_radius", 0.0), tr.get("arc_points", 16))
    traj = generate_trajectory(wp, tr["step_length"], keep_vertices=tr.get("keep_vertices", False))
    n_steps = tr.get("n_steps")
    if n_steps is not None:
        if len(traj) < n_steps:
            raise ValueError(f"trajectory has {len(traj)} points, fewer than n_steps={n_steps}")
        traj = traj[:n_steps]
    g = cfg.get("generator", {})
    sensor = SensorModel(p_detect=g.get("p_detect", 0.95), mu_fa=g.get("mu_fa", 1.0),
                         fa_range_max=g.get("fa_range_max", 30.0), sigma_meas=g.get("sigma", 0.1))
    return Scenario(plan, anchors, traj, sensor, seed, g.get("noise_sigma"))
