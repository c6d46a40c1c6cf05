"""Floor plans, virtual-anchor construction and synthetic trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEDUP_TOL = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate walls or waypoint lists."""


@dataclass(frozen=True)
class WallSegment:
    p_start: tuple[float, float]
    p_end: tuple[float, float]

    def __post_init__(self):
        if np.hypot(self.p_end[0] - self.p_start[0], self.p_end[1] - self.p_start[1]) == 0.0:
            raise GeometryError(f"zero-length wall at {self.p_start}")

    @property
    def length(self) -> float:
        return float(np.hypot(self.p_end[0] - self.p_start[0], self.p_end[1] - self.p_start[1]))


@dataclass
class FloorPlan:
    walls: list[WallSegment]
    roi_center: tuple[float, float]
    roi_radius: float = 30.0

    def __post_init__(self):
        if self.roi_radius <= 0:
            raise GeometryError("roi_radius must be positive")
        c = np.asarray(self.roi_center, dtype=float)
        for w in self.walls:
            for p in (w.p_start, w.p_end):
                if np.linalg.norm(np.asarray(p) - c) > self.roi_radius:
                    raise GeometryError(f"wall endpoint {p} outside the ROI disk")

    @classmethod
    def from_segments(cls, segments, roi_center=None, roi_radius=30.0) -> "FloorPlan":
        walls = [WallSegment(tuple(map(float, a)), tuple(map(float, b))) for a, b in segments]
        if roi_center is None:
            pts = np.array([p for w in walls for p in (w.p_start, w.p_end)])
            roi_center = tuple((pts.min(axis=0) + pts.max(axis=0)) / 2.0)
        return cls(walls, tuple(float(v) for v in roi_center), float(roi_radius))

    @property
    def roi_area(self) -> float:
        return float(np.pi * self.roi_radius**2)


@dataclass
class AnchorMap:
    """Ground-truth feature positions: one PA plus its VAs per index ``j``."""

    pa_positions: list[np.ndarray]
    va_positions: list[list[np.ndarray]] = field(default_factory=list)

    @property
    def n_pas(self) -> int:
        return len(self.pa_positions)

    def features(self, j: int) -> np.ndarray:
        """All features (PA first, then VAs) of PA ``j`` as an (L, 2) array."""
        rows = [self.pa_positions[j], *self.va_positions[j]]
        return np.asarray(rows, dtype=float).reshape(-1, 2)


def mirror_across_segment(point, wall: WallSegment) -> np.ndarray:
    """Reflect ``point`` across the infinite line supporting ``wall``."""
    p = np.asarray(point, dtype=float)
    a = np.asarray(wall.p_start, dtype=float)
    d = np.asarray(wall.p_end, dtype=float) - a
    dd = d @ d
    if dd == 0.0:
        raise GeometryError("degenerate wall")
    foot = a + ((p - a) @ d) / dd * d
    return 2.0 * foot - p


def build_anchor_map(pas, plan: FloorPlan, tol: float = DEDUP_TOL) -> AnchorMap:
    """First-order image sources of every PA across every wall of ``plan``.

    Images that coincide with the PA itself or with an earlier image (within
    ``tol``) are dropped.
    """
    pas = [np.asarray(p, dtype=float) for p in pas]
    if not pas:
        raise GeometryError("at least one PA is required")
    vas = []
    for pa in pas:
        kept: list[np.ndarray] = []
        for wall in plan.walls:
            va = mirror_across_segment(pa, wall)
            if np.linalg.norm(va - pa) <= tol:
                continue
            if any(np.linalg.norm(va - q) <= tol for q in kept):
                continue
            kept.append(va)
        vas.append(kept)
    return AnchorMap(pas, vas)


def generate_trajectory(waypoints, step_length: float, keep_vertices: bool = True) -> np.ndarray:
    """Resample a waypoint polyline at uniform arc-length spacing.

    With ``keep_vertices`` every waypoint is kept and each leg is cut into
    ``ceil(len/step)`` pieces of equal length, so corners are hit exactly (the
    spacing equals ``step_length`` when a leg length is an integer multiple of
    it). Otherwise points are placed every ``step_length`` of arc length along
    the whole polyline, which suits finely chorded curves.
    """
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[0] < 2 or wp.shape[1] != 2:
        raise GeometryError("need at least two 2-D waypoints")
    if step_length <= 0:
        raise GeometryError("step_length must be positive")
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    if np.any(seg == 0.0):
        i = int(np.argmin(seg))
        raise GeometryError(f"coincident consecutive waypoints at {wp[i]}")
    if not keep_vertices:
        s = np.concatenate([[0.0], np.cumsum(seg)])
        t = np.arange(0.0, s[-1] + 1e-9, step_length)
        return np.column_stack([np.interp(t, s, wp[:, 0]), np.interp(t, s, wp[:, 1])])
    out = [wp[0]]
    for a, b in zip(wp[:-1], wp[1:]):
        length = float(np.linalg.norm(b - a))
        n = max(1, int(np.ceil(length / step_length - 1e-9)))
        t = np.arange(1, n + 1) / n
        out.extend(a + t[:, None] * (b - a))
    return np.asarray(out)


def round_corners(waypoints, radius: float, arc_points: int = 16) -> np.ndarray:
    """Replace interior corners of a polyline by circular fillets of ``radius``.

    Each fillet is approximated by ``arc_points`` chords. Legs must be long
    enough to hold the tangent points of both adjacent fillets.
    """
    wp = np.asarray(waypoints, dtype=float)
    if radius <= 0 or len(wp) < 3:
        return wp.copy()
    out = [wp[0]]
    for a, b, c in zip(wp[:-2], wp[1:-1], wp[2:]):
        u = (a - b) / np.linalg.norm(a - b)
        v = (c - b) / np.linalg.norm(c - b)
        cosang = np.clip(u @ v, -1.0, 1.0)
        ang = np.arccos(cosang)
        if ang < 1e-9 or abs(np.pi - ang) < 1e-9:
            out.append(b)
            continue
        t = radius / np.tan(ang / 2.0)
        if t > min(np.linalg.norm(a - b), np.linalg.norm(c - b)) / 2.0 + 1e-12:
            raise GeometryError(f"fillet radius {radius} too large at corner {b}")
        p0, p1 = b + t * u, b + t * v
        bis = (u + v) / np.linalg.norm(u + v)
        centre = b + bis * radius / np.sin(ang / 2.0)
        a0 = np.arctan2(*(p0 - centre)[::-1])
        a1 = np.arctan2(*(p1 - centre)[::-1])
        sweep = (a1 - a0 + np.pi) % (2.0 * np.pi) - np.pi
        phis = a0 + sweep * np.linspace(0.0, 1.0, arc_points + 1)
        out.extend(centre + radius * np.column_stack([np.cos(phis), np.sin(phis)]))
    out.append(wp[-1])
    return np.asarray(out)
