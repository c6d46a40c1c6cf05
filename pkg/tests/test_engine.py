import numpy as np
import pytest

from bpslam.bp_da import DaInputs, da_iterate
from bpslam.cli import default_config
from bpslam.engine import BPSLAMFilter, FilterDivergence, FilterParams, PotentialFeature
from bpslam.geometry import FloorPlan
from bpslam.models import SQRT_2PI, FeatureDynamicsParams, MotionParams, SensorModel
from bpslam.phd import BirthInfo
from bpslam.sim import MeasurementFrame, generate_frame, scenario_from_config

PLAN = FloorPlan([], (0.0, 0.0), 30.0)
SCEN = scenario_from_config(default_config()["scenario"])


def make_filter(N=300, seed=0, **kw):
    params = FilterParams(n_particles=N, n_phd_particles=2000, **kw)
    return BPSLAMFilter(params, SCEN.plan, SCEN.anchors.pa_positions, SCEN.trajectory[0], seed)


def sim_frames(n_steps, seed=1):
    rng = np.random.default_rng(seed)
    return [generate_frame(SCEN, n, rng) for n in range(1, n_steps + 1)]


def empty(n, J=2):
    return [MeasurementFrame(n, j) for j in range(J)]


def test_params_validation():
    with pytest.raises(ValueError):
        FilterParams(p_det=0.1, p_prun=0.2)
    with pytest.raises(ValueError):
        FilterParams(n_particles=0)
    with pytest.raises(ValueError):
        FilterParams(resample_threshold=1.5)
    for bad in [dict(n_partners=0), dict(pairing="x"), dict(feature_resample="never"),
                dict(agent_reg=1.0), dict(reg_bandwidth=-0.1)]:
        with pytest.raises(ValueError):
            FilterParams(**bad)


def test_detect_prune_examples():
    filt = make_filter(N=10)
    feats = [PotentialFeature(i, np.zeros((10, 2)), p, np.zeros(2)) for i, p in enumerate([0.9, 5e-5, 0.3])]
    filt.features = [feats, []]
    pruned = filt.detect_prune([0, 0])
    assert pruned == [1, 0]
    kept = {f.feature_id: f.detected for f in filt.features[0]}
    assert kept == {0: True, 2: False}


def test_predict_existence_mass():
    filt = make_filter(N=50)
    filt.n = 2
    alive, dead = filt.predict(123)
    assert alive[0][0] == pytest.approx(0.999, abs=1e-15)
    assert alive[0][0] + dead[0][0] == pytest.approx(1.0, abs=1e-12)


def test_predict_is_deterministic_without_noise():
    params = FilterParams(n_particles=20, motion=MotionParams(sigma_w=0.0),
                          dynamics=FeatureDynamicsParams(1.0, 0.0))
    filt = BPSLAMFilter(params, PLAN, [(1.0, 1.0)], (0.0, 0.0), 0)
    X0 = filt.X.copy()
    A0 = filt.features[0][0].particles.copy()
    filt.n = 2
    alive, _ = filt.predict(5)
    assert np.allclose(filt.X[:, :2], X0[:, :2] + X0[:, 2:], atol=1e-15)
    assert np.array_equal(filt.X[:, 2:], X0[:, 2:])
    assert np.array_equal(filt.features[0][0].particles, A0)
    assert alive[0][0] == 1.0


def test_step_invariants():
    filt = make_filter()
    ids_seen = [set(), set()]
    for frames in sim_frames(25):
        K_prev = [len(fs) for fs in filt.features]
        rep = filt.step(frames)
        assert abs(filt.w.sum() - 1.0) < 1e-9
        N = filt.params.n_particles
        assert rep.resampled == (rep.ess < N / 2)
        if rep.resampled:
            assert np.all(filt.w == 1.0 / N)
        for j, fs in enumerate(filt.features):
            assert len(fs) + rep.n_pruned[j] == K_prev[j] + len(frames[j])
            for f in fs:
                assert 0.0 <= f.p_exist <= 1.0
                assert abs(f.normalized_weights().sum() - 1.0) < 1e-9
            new = {f.feature_id for f in fs} - ids_seen[j]
            if ids_seen[j]:
                assert not new or min(new) > max(ids_seen[j])
            ids_seen[j] |= new
            assert rep.n_detected[j] == sum(f.detected for f in rep.features[j])


def test_determinism_under_seed():
    frames = sim_frames(15)
    reps = []
    for _ in range(2):
        filt = make_filter(seed=42)
        reps.append([filt.step(f) for f in frames])
    for a, b in zip(*reps):
        assert np.array_equal(a.agent_estimate, b.agent_estimate)
        assert a.n_detected == b.n_detected and a.ess == b.ess
        for fa, fb in zip(a.features, b.features):
            assert [f.feature_id for f in fa] == [f.feature_id for f in fb]
            assert all(np.array_equal(x.position, y.position) and x.p_exist == y.p_exist
                       for x, y in zip(fa, fb))


def test_no_measurements_no_births():
    filt = make_filter(mu_birth=0.0, mu_initial=0.0)
    prev = [f.p_exist for fs in filt.features for f in fs]
    detected_ever = False
    for n in range(1, 60):
        w0 = filt.w.copy()
        rep = filt.step(empty(n))
        assert np.allclose(filt.w, w0, atol=1e-15)
        cur = [f.p_exist for fs in filt.features for f in fs]
        assert all(f.feature_id == 0 for fs in filt.features for f in fs)
        assert len(cur) <= len(prev)
        assert all(c < p if n > 1 else c <= p for c, p in zip(cur, prev))
        prev = cur
        if n > 5:
            detected_ever |= any(rep.n_detected)
    assert not detected_ever
    assert all(len(fs) == 0 for fs in filt.features)


def test_beta_for_empty_frame_and_far_cloud():
    filt = make_filter(N=200)
    alive, dead = np.array([0.7]), np.array([0.3])
    beta, _, _ = filt.evaluate_legacy(0, MeasurementFrame(1, 0), alive, dead)
    assert beta.shape == (1, 1)
    assert beta[0, 0] == pytest.approx(0.7 * 0.05 + 0.3)
    # the PA sits about 3.2 m from the agent; rings at 20 m are > 10 sigma away
    far = MeasurementFrame(1, 0, [20.0, 25.0], [0.15, 0.15])
    beta, _, _ = filt.evaluate_legacy(0, far, alive, dead)
    assert np.all(beta[0, 1:] < 1e-12 * beta[0, 0])


def test_beta_dominates_at_true_range():
    params = FilterParams(n_particles=500, sensor=SensorModel(0.999, 1.0, 30.0, 0.01), sigma_a1=1e-6,
                          agent_prior_halfwidth=1e-6)
    filt = BPSLAMFilter(params, PLAN, [(3.0, 4.0)], (0.0, 0.0), 0)
    beta, _, _ = filt.evaluate_legacy(0, MeasurementFrame(1, 0, [5.0], [0.01]), np.ones(1), np.zeros(1))
    assert beta[0, 1] > 1e3 * beta[0, 0] > 0


def test_xi_without_births_is_one():
    filt = make_filter(N=100)
    xi, clouds, mass = filt.evaluate_new(0, MeasurementFrame(1, 0, [3.0, 7.0], [0.15, 0.15]),
                                         BirthInfo(0.0), 0)
    assert np.array_equal(xi, np.ones((2, 2)))
    assert np.all(mass == 0)


def test_xi_matches_ring_quadrature():
    sensor = SensorModel(0.95, 1.0, 30.0, 0.15)
    params = FilterParams(n_particles=20000, sensor=sensor, agent_prior_halfwidth=1e-9)
    filt = BPSLAMFilter(params, PLAN, [(3.0, 4.0)], (0.0, 0.0), 0)
    cell = 1.0
    nb = 60
    grid = np.full((nb, nb), 1.0 / (nb * nb * cell * cell))
    birth = BirthInfo(5.7, grid, np.array([-30.0, -30.0]), cell)
    z, s = 6.0, 0.15
    xi, _, _ = filt.evaluate_new(0, MeasurementFrame(1, 0, [z], [s]), birth, 7)
    h = 0.01
    xs = np.arange(-8, 8, h) + h / 2
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    r = np.hypot(gx, gy)
    ring = np.sum(np.exp(-0.5 * ((z - r) / s) ** 2) / (SQRT_2PI * s)) * h * h
    expect = 1.0 + 5.7 * ring * grid[0, 0] / (1.0 / 30.0)
    assert xi[0, 0] == pytest.approx(expect, rel=0.01)
    assert np.all(xi[0, 1:] == 1.0)


def test_existence_matches_grid_oracle():
    pd, mu_fa, sa, h = 0.5, 2.0, 0.3, 0.5
    sensor = SensorModel(pd, mu_fa, 30.0, 0.15)
    params = FilterParams(n_particles=100_000, sensor=sensor, sigma_a1=sa, agent_prior_halfwidth=h,
                          mu_initial=0.0, mu_birth=0.0)
    filt = BPSLAMFilter(params, PLAN, [(3.0, 0.0)], (0.0, 0.0), 3)
    filt.features[0][0].p_exist = 0.6
    z, s = 3.1, 0.15
    filt.step([MeasurementFrame(1, 0, [z], [s])])
    # 4-D midpoint quadrature: uniform agent box times Gaussian feature prior
    g = 40
    u = (np.arange(g) + 0.5) / g * 2 * h - h
    ax = np.arange(-4 * sa, 4 * sa, 8 * sa / g) + 4 * sa / g
    px, py = np.meshgrid(u, u, indexing="ij")
    fx, fy = np.meshgrid(3.0 + ax, ax, indexing="ij")
    wa = np.exp(-0.5 * ((fx - 3.0) ** 2 + fy**2) / sa**2)
    wa /= wa.sum()
    d = np.hypot(px.ravel()[:, None] - fx.ravel()[None], py.ravel()[:, None] - fy.ravel()[None])
    lik = np.exp(-0.5 * ((z - d) / s) ** 2) / (SQRT_2PI * s)
    I = pd * np.mean(lik @ wa.ravel()) / (mu_fa / 30.0)
    eta0 = eta1 = 0.5  # xi = (1, 1) without births
    a = 0.6 * ((1 - pd) * eta0 + I * eta1)
    expect = a / (a + 0.4 * eta0)
    assert filt.features[0][0].p_exist == pytest.approx(expect, rel=0.05)


def test_existence_tends_to_one_with_sure_detection():
    sensor = SensorModel(1.0, 1e-9, 30.0, 0.15)
    params = FilterParams(n_particles=2000, sensor=sensor, mu_initial=0.0, mu_birth=0.0)
    filt = BPSLAMFilter(params, PLAN, [(3.0, 4.0)], (0.0, 0.0), 0)
    filt.features[0][0].p_exist = 0.5
    filt.step([MeasurementFrame(1, 0, [5.0], [0.15])])
    assert filt.features[0][0].p_exist > 1 - 1e-6


def test_measurement_permutation_invariance():
    frames = sim_frames(6)
    a, b = make_filter(seed=9), make_filter(seed=9)
    for f in frames[:-1]:
        a.step(f)
        b.step(f)
    last = frames[-1]
    perms = [np.random.default_rng(j).permutation(len(fr)) for j, fr in enumerate(last)]
    shuffled = [MeasurementFrame(fr.n, fr.j, fr.z[p], fr.sigma[p]) for fr, p in zip(last, perms)]
    a.step(last, keep_evals=True)
    b.step(shuffled, keep_evals=True)
    for ea, eb, p in zip(a.last_evals, b.last_evals, perms):
        assert len(p) > 1
        cols = np.concatenate([[0], p + 1])
        assert np.max(np.abs(ea.beta[:, cols] - eb.beta)) <= 1e-12 * np.abs(ea.beta).max()
        assert np.max(np.abs(ea.xi[p] - eb.xi)) <= 1e-12 * np.abs(ea.xi).max()
        assert np.max(np.abs(ea.da.eta[:, cols] - eb.da.eta)) <= 1e-12
        assert np.max(np.abs(ea.da.sigma_out[p] - eb.da.sigma_out)) <= 1e-12


def test_frame_count_mismatch():
    with pytest.raises(ValueError):
        make_filter(N=50).step(empty(1, J=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    filt = make_filter(N=50)
    filt.w[:] = 0.0
    with pytest.raises(FilterDivergence):
        filt.step(empty(1))
