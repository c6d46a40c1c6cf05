import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from bpslam.models import (AgentState, FeatureDynamicsParams, Measurement, MotionParams, SensorModel,
                           feature_transition, g_factor, h_factor, motion_transition_sample,
                           propagate_agent_particles, range_likelihood)

PEAK = 1.0 / (0.1 * np.sqrt(2 * np.pi))


def test_motion_examples():
    x = AgentState((0, 0), (1, 0))
    y = motion_transition_sample(x, MotionParams(sigma_w=0.0), None)
    assert np.allclose(y.p, (1, 0)) and np.allclose(y.v, (1, 0))
    y = motion_transition_sample(AgentState((0, 0), (0, 0)), MotionParams(), None, w=(0.02, 0))
    assert np.allclose(y.p, (0.01, 0)) and np.allclose(y.v, (0.02, 0))


def test_motion_zero_noise_is_linear(rng):
    F, _ = MotionParams(dt=0.7, sigma_w=0.0).matrices()
    X = rng.normal(size=(50, 4))
    Y = propagate_agent_particles(X, MotionParams(dt=0.7, sigma_w=0.0), rng)
    assert np.allclose(Y, X @ F.T)
    a, b = rng.normal(size=4), rng.normal(size=4)
    f = lambda v: motion_transition_sample(AgentState.from_vector(v), MotionParams(dt=0.7, sigma_w=0.0), None).as_vector()
    assert np.allclose(f(2 * a + 3 * b), 2 * f(a) + 3 * f(b))


def test_motion_covariance_monte_carlo():
    rng = np.random.default_rng(3)
    X = np.zeros((1_000_000, 4))
    Y = propagate_agent_particles(X, MotionParams(sigma_w=0.01), rng)
    assert abs(Y[:, 0].var() / 2.5e-5 - 1) < 0.02
    assert abs(Y[:, 2].var() / 1e-4 - 1) < 0.02
    assert abs(np.mean(Y[:, 0] * Y[:, 2]) / 5e-5 - 1) < 0.02


def test_feature_transition_examples(rng):
    parts = rng.normal(size=(10, 2))
    out, alive, dead = feature_transition(parts, 1.0, FeatureDynamicsParams(0.999, 0.0), rng)
    assert np.array_equal(out, parts)
    assert alive == pytest.approx(0.999) and dead == pytest.approx(0.001)
    _, alive, dead = feature_transition(parts, 0.5, FeatureDynamicsParams(0.999, 1e-4), rng)
    assert dead == pytest.approx(0.5005)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(1e-6, 1))
def test_feature_transition_mass_conserved(e, ps):
    _, alive, dead = feature_transition(np.zeros((1, 2)), e, FeatureDynamicsParams(ps, 0.0), None)
    assert abs(alive + dead - 1.0) <= 1e-12


def test_range_likelihood_examples():
    assert range_likelihood(5.0, 0.1, (0, 0), (3, 4)) == pytest.approx(3.9894, abs=1e-4)
    assert range_likelihood(5.1, 0.1, (0, 0), (3, 4)) == pytest.approx(PEAK * np.exp(-0.5), rel=1e-12)
    assert range_likelihood(5.1, 0.1, (0, 0), (3, 4)) == pytest.approx(2.4197, abs=1e-4)


@pytest.mark.parametrize("d,s", [(5.0, 0.1), (12.3, 0.15), (0.4, 0.2)])
def test_range_likelihood_integrates_to_one(d, s):
    f = lambda z: range_likelihood(z, s, (0, 0), (d, 0))
    val = quad(f, -np.inf, d)[0] + quad(f, d, np.inf)[0]
    assert abs(val - 1) < 1e-6
    inner, _ = quad(lambda z: range_likelihood(z, s, (0, 0), (d, 0)), d - 12 * s, d + 12 * s)
    assert abs(inner - 1) < 1e-6


def _frame():
    return [Measurement(5.0, 0.1), Measurement(2.0, 0.1)]


def test_g_factor_branches():
    x = AgentState((0, 0), (0, 0))
    s = SensorModel(0.95, 1.0, 30.0, None)
    assert g_factor(x, (3, 4), 0, 0, _frame(), s) == 1.0
    assert g_factor(x, (3, 4), 0, 1, _frame(), s) == 0.0
    assert g_factor(x, (3, 4), 1, 0, _frame(), s) == pytest.approx(0.05, abs=1e-15)
    assert g_factor(x, (3, 4), 1, 1, _frame(), s) == pytest.approx(0.95 * PEAK * 30, rel=1e-12)
    assert g_factor(x, (3, 4), 1, 1, _frame(), s) == pytest.approx(113.70, abs=0.01)


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 30), st.floats(0.01, 0.99))
def test_g_missed_branch_constant(ax, ay, z, pd):
    s = SensorModel(pd, 1.0, 30.0, 0.15)
    x = AgentState((1, 2), (0, 0))
    assert g_factor(x, (ax, ay), 1, 0, [Measurement(z, 0.1)], s) == 1.0 - pd


def test_h_factor_branches():
    x = AgentState((0, 0), (0, 0))
    s = SensorModel(0.95, 1.0, 30.0, None)
    z = Measurement(5.0, 0.1)
    assert h_factor(x, (3, 4), 1, 2, z, s, lambda a, x: 0.01) == 0.0
    assert h_factor(x, (3, 4), 1, 0, z, s, lambda a, x: 0.0) == 0.0
    assert h_factor(x, (3, 4), 1, 0, z, s, lambda a, x: 0.01) == pytest.approx(1.1968, abs=1e-4)
    assert h_factor(x, (3, 4), 0, 0, z, s, lambda a, x: 0.01) == 1.0


def test_sensor_validation_and_clutter():
    with pytest.raises(ValueError):
        SensorModel(p_detect=1.5)
    with pytest.raises(ValueError):
        SensorModel(mu_fa=-1)
    s = SensorModel(0.9, 2.0, 30.0)
    assert s.clutter_intensity(10.0) == pytest.approx(2 / 30)
    assert s.clutter_intensity(31.0) > 0
    assert np.all(s.filter_sigma([0.1, 0.2]) == 0.15)
    assert np.allclose(SensorModel(sigma_meas=None).filter_sigma([0.1, 0.2]), [0.1, 0.2])


def test_measurement_validation():
    with pytest.raises(ValueError):
        Measurement(-1.0, 0.1)
    with pytest.raises(ValueError):
        Measurement(1.0, 0.0)
    with pytest.raises(ValueError):
        AgentState((np.nan, 0), (0, 0))
