import numpy as np
import pytest
from scipy import stats

from bpslam.geometry import FloorPlan
from bpslam.models import FeatureDynamicsParams, SensorModel
from bpslam.phd import (UndetectedIntensity, birth_info, phd_init, phd_predict, phd_update,
                        sample_uniform_disk)

PLAN = FloorPlan([], (0.0, 0.0), 30.0)


class SplitSensor(SensorModel):
    """P_d 0.9 left of x = 0, 0.3 right of it."""

    def detection_probability(self, agent_pos=None, feature_pos=None):
        a = np.asarray(feature_pos, dtype=float)
        return np.where(a[..., 0] < 0.0, 0.9, 0.3)


def test_init_mass_and_empty(rng):
    lam = phd_init(PLAN, 6.0, rng)
    assert abs(lam.mass - 6.0) <= 1e-12
    assert len(phd_init(PLAN, 0.0, rng)) == 0
    with pytest.raises(ValueError):
        phd_init(PLAN, -1.0, rng)


def test_init_is_uniform_on_disk(rng):
    lam = phd_init(FloorPlan([], (3.0, -2.0), 30.0), 6.0, rng, n_particles=10**6)
    d = lam.particles - (3.0, -2.0)
    assert np.all(np.hypot(d[:, 0], d[:, 1]) <= 30.0)
    # uniform on the disk iff (r^2 / R^2, theta / 2 pi) is uniform on the unit square
    u = np.sum(d**2, axis=1) / 900.0
    v = (np.arctan2(d[:, 1], d[:, 0]) + np.pi) / (2 * np.pi)
    counts, _, _ = np.histogram2d(u, v, bins=10, range=[[0, 1], [0, 1]])
    assert stats.chisquare(counts.ravel()).pvalue > 0.01


def test_predict_examples(rng):
    lam = phd_init(PLAN, 6.0, rng, n_particles=2000)
    same = phd_predict(lam, FeatureDynamicsParams(1.0, 0.0), 0.0, PLAN, rng)
    assert same.mass == pytest.approx(6.0, abs=1e-12)
    pred = phd_predict(lam, FeatureDynamicsParams(0.999, 1e-4), 1e-4, PLAN, rng)
    assert pred.mass == pytest.approx(5.9941, abs=1e-12)
    assert len(pred) == 2000
    with pytest.raises(ValueError):
        phd_predict(lam, FeatureDynamicsParams(), -1.0, PLAN, rng)


def test_birth_info_constant_pd(rng):
    lam = phd_init(PLAN, 6.0, rng, n_particles=5000)
    b = birth_info(lam, SensorModel(p_detect=0.95), PLAN)
    assert b.mu_n == pytest.approx(5.7, abs=1e-12)
    assert np.sum(b.grid) * b.cell**2 == pytest.approx(1.0, abs=1e-12)
    # quadrature on a fine grid over the ROI bounding box
    h = 0.25
    xs = np.arange(-30 + h / 2, 30, h)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    dens = b.density(np.stack([gx, gy], -1))
    assert np.sum(dens) * h * h == pytest.approx(1.0, abs=1e-3)
    assert birth_info(lam, SensorModel(p_detect=0.0), PLAN).mu_n == 0.0
    assert birth_info(UndetectedIntensity(np.empty((0, 2)), np.empty(0)), SensorModel(), PLAN).mu_n == 0.0


def test_birth_info_two_regions():
    pts = np.array([[-5, 0], [-4, 1], [-3, 2], [5, 0], [6, 1.0]])
    lam = UndetectedIntensity(pts, [1.0, 1.0, 1.0, 1.5, 1.5])
    b = birth_info(lam, SplitSensor(), PLAN, agent_particles=np.zeros((10, 4)))
    assert b.mu_n == pytest.approx(3 * 0.9 + 3 * 0.3, abs=1e-12)


def test_update_examples(rng):
    lam = phd_init(PLAN, 6.0, rng, n_particles=1000)
    assert phd_update(lam, SensorModel(p_detect=0.95)).mass == pytest.approx(0.3, abs=1e-12)
    assert phd_update(lam, SensorModel(p_detect=0.0)).mass == pytest.approx(6.0, abs=1e-12)
    s = SensorModel(p_detect=0.5)
    dyn = FeatureDynamicsParams(1.0, 0.0)
    m = lam
    for _ in range(2):
        m = phd_update(phd_predict(m, dyn, 0.0, PLAN, rng), s)
    assert m.mass == pytest.approx(1.5, abs=1e-12)


def test_update_two_regions():
    pts = np.array([[-1.0, 0.0], [1.0, 0.0]])
    out = phd_update(UndetectedIntensity(pts, [2.0, 2.0]), SplitSensor(), np.zeros((5, 4)))
    assert np.allclose(out.weights, [0.2, 1.4], atol=1e-12)


def test_mass_law_and_nonnegativity(rng):
    ps, pd = 0.999, 0.95
    lam = phd_init(PLAN, 6.0, rng, n_particles=1000)
    dyn = FeatureDynamicsParams(ps, 1e-4)
    s = SensorModel(p_detect=pd)
    for n in range(1, 51):
        lam = phd_update(phd_predict(lam, dyn, 0.0, PLAN, rng), s)
        assert np.all(lam.weights >= 0)
        assert abs(lam.mass - 6.0 * (ps * (1 - pd)) ** n) <= 1e-9


def test_births_keep_budget_and_mass(rng):
    lam = phd_init(PLAN, 6.0, rng, n_particles=1000)
    for _ in range(20):
        expect = lam.mass * 0.999 + 1e-4
        lam = phd_predict(lam, FeatureDynamicsParams(0.999, 1e-4), 1e-4, PLAN, rng)
        assert len(lam) == 1000 and lam.mass == pytest.approx(expect, rel=1e-12)
        assert np.all(lam.weights >= 0)


def test_support_stays_near_roi(rng):
    sig = 0.05
    lam = phd_init(PLAN, 6.0, rng, n_particles=10000)
    dyn = FeatureDynamicsParams(1.0, sig)
    for n in range(1, 101):
        lam = phd_predict(lam, dyn, 0.0, PLAN, rng)
        r = np.hypot(lam.particles[:, 0], lam.particles[:, 1])
        assert r.max() <= 30.0 + 3 * sig * n


def test_sample_uniform_disk_radius(rng):
    p = sample_uniform_disk((1, 1), 2.0, 1000, rng)
    assert np.all(np.hypot(*(p - 1).T) <= 2.0)


def test_intensity_validation():
    with pytest.raises(ValueError):
        UndetectedIntensity(np.zeros((2, 2)), [1.0])
    with pytest.raises(ValueError):
        UndetectedIntensity(np.zeros((1, 2)), [-1.0])
