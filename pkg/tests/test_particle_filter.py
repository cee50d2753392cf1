import math
import warnings

import numpy as np
import pytest

from conftest import pose_close
from uwbrelloc.particle_filter import (
    FilterDivergence,
    FilterParams,
    MultiRobotTracker,
    ParticleSet,
    estimate,
    likelihood,
    predict,
    resample,
    squared_distance,
    update,
)
from uwbrelloc.se2 import IDENTITY, OdometryDelta, Pose2D, compose, inverse, relative_pose

QUIET = FilterParams(sigma_d=0.0, sigma_theta=0.0)


def one(state, rng=None):
    return ParticleSet(0, np.array([state], dtype=float), rng=rng or np.random.default_rng(0))


def test_predict_examples():
    p = one([0, 0, 0])
    predict(p, OdometryDelta(1, 0, 0), QUIET)
    assert np.allclose(p.states[0], [1, 0, 0])
    p = one([0, 0, math.pi / 2])
    predict(p, OdometryDelta(1, 0, 0), QUIET)
    assert np.allclose(p.states[0], [0, 1, math.pi / 2])


def test_predict_reverse_keeps_sign():
    p = one([0, 0, 0])
    predict(p, OdometryDelta(-0.5, 0, 0), QUIET)
    assert np.allclose(p.states[0], [-0.5, 0, 0])


def test_predict_noise_law():
    ps = ParticleSet(0, np.zeros((10_000, 3)), rng=np.random.default_rng(42))
    predict(ps, OdometryDelta(0, 0, 0), FilterParams(sigma_d=0.1, sigma_theta=0.05))
    assert abs(ps.states[:, 0].std() - 0.1) < 0.005
    assert abs(ps.states[:, 2].std() - 0.05) < 0.0025


def test_likelihood_at_zero_distance():
    assert float(likelihood(0.0, FilterParams(lambda_d=1.0, lambda_theta=0.1))) == pytest.approx(3.9894, abs=1e-3)


def test_likelihood_is_positive_and_finite():
    d2 = np.array([0.0, 1.0, 1e3, 1e6, np.finfo(float).max])
    v = likelihood(d2, FilterParams())
    assert not np.any(np.isnan(v))
    assert np.all(v[:3] > 0)


def test_squared_distance_is_verbatim_and_flag_squares():
    meas = Pose2D(1.0, 0.0, 0.0)
    implied = np.array([[0.0, 0.0, 0.1]])
    p = FilterParams(lambda_d=0.5, lambda_theta=0.1)
    assert squared_distance(implied, meas, p)[0] == pytest.approx(1.0 / 0.5 + 0.01 / 0.1)
    q = FilterParams(lambda_d=0.5, lambda_theta=0.1, squared_lambda=True)
    assert squared_distance(implied, meas, q)[0] == pytest.approx(1.0 / 0.25 + 0.01 / 0.01)


def test_update_two_particle_weights():
    ref = Pose2D(2.0, 0.0, 0.0)
    meas = Pose2D(2.0, 0.0, 0.0)
    # second particle displaced along x so d2 = dx^2 / lambda_d = 2
    ps = ParticleSet(0, np.array([[0.0, 0.0, 0.0], [-math.sqrt(2.0), 0.0, 0.0]]), rng=np.random.default_rng(0))
    update(ps, ref, meas, FilterParams(lambda_d=1.0, lambda_theta=0.1))
    assert np.allclose(ps.weights, [0.731, 0.269], atol=5e-4)
    assert ps.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_update_symmetric_keeps_uniform():
    ref = Pose2D(1.0, -2.0, 0.7)
    meas = Pose2D(0.5, 0.2, 0.1)
    # implied relative poses all offset from the measurement by the same distance
    offsets = [(0.3, 0, 0), (-0.3, 0, 0), (0, 0.3, 0), (0, -0.3, 0)]
    implied = [Pose2D(meas.x + a, meas.y + b, meas.theta + c) for a, b, c in offsets]
    states = np.array([compose(ref, inverse(t)).as_vector() for t in implied])
    ps = ParticleSet(0, states, rng=np.random.default_rng(0))
    update(ps, ref, meas, FilterParams())
    assert np.allclose(ps.weights, 0.25, atol=1e-12)


def test_underflow_resets_with_warning():
    ps = ParticleSet(0, np.zeros((5, 3)), rng=np.random.default_rng(0))
    with pytest.warns(FilterDivergence):
        ok = update(ps, IDENTITY, Pose2D(1e4, 0, 0), FilterParams(lambda_d=1e-3))
    assert not ok
    assert np.allclose(ps.weights, 0.2)


def test_resample_gating_and_degenerate_mass():
    ps = ParticleSet(0, np.arange(30, dtype=float).reshape(10, 3), rng=np.random.default_rng(0))
    assert not resample(ps, FilterParams(resample_threshold=0.5))
    w = np.zeros(10)
    w[3] = 1.0
    ps.weights = w
    assert resample(ps, FilterParams())
    assert np.all(ps.states == [9.0, 10.0, 11.0])
    assert len(ps) == 10


def test_resample_systematic_count_bound():
    for seed in range(20):
        n = 101
        states = np.arange(n * 3, dtype=float).reshape(n, 3)
        w = np.zeros(n)
        w[:2] = 0.5
        ps = ParticleSet(0, states, w, rng=np.random.default_rng(seed))
        resample(ps, FilterParams())
        c0 = int(np.sum(ps.states[:, 0] == 0.0))
        c1 = int(np.sum(ps.states[:, 0] == 3.0))
        assert c0 + c1 == n and abs(c0 - c1) <= 1
        assert ps.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_estimate_examples():
    ps = ParticleSet(0, np.tile([1.0, 2.0, 0.3], (5, 1)), rng=np.random.default_rng(0))
    assert pose_close(estimate(ps), Pose2D(1, 2, 0.3), 1e-12)
    ps = ParticleSet(0, np.array([[0, 0, math.radians(170)], [0, 0, math.radians(-170)]]), rng=np.random.default_rng(0))
    assert abs(abs(estimate(ps).theta) - math.pi) < 1e-12
    ps = ParticleSet(0, np.array([[1.0, 1.0, 0.5], [5.0, -3.0, -2.0]]), np.array([1.0, 0.0]), rng=np.random.default_rng(0))
    assert pose_close(estimate(ps), Pose2D(1, 1, 0.5), 1e-12)


def test_estimate_zero_weight_errors():
    ps = ParticleSet(0, np.zeros((3, 3)), rng=np.random.default_rng(0))
    ps.weights = np.zeros(3)
    with pytest.raises(ValueError):
        estimate(ps)


def _exact_stream(n=200, seed=3):
    rng = np.random.default_rng(seed)
    poses = {0: [IDENTITY], 1: [Pose2D(2.0, 1.0, 0.5)], 2: [Pose2D(-1.0, 3.0, -1.0)]}
    odo = []
    for _ in range(n):
        step = {}
        for r in poses:
            d = OdometryDelta(rng.uniform(0, 0.05), 0.0, rng.uniform(-0.05, 0.05))
            poses[r].append(compose(poses[r][-1], Pose2D(d.dx, d.dy, d.dtheta)))
            step[r] = d
        odo.append(step)
    return poses, odo


def test_laws_over_a_run():
    poses, odo = _exact_stream()
    params = FilterParams()
    tr = MultiRobotTracker([0, 1, 2], params, seed=9)
    for k, step in enumerate(odo, start=1):
        obs = {(i, j): relative_pose(poses[i][k], poses[j][k]) for i, j in ((0, 1), (0, 2), (1, 2))}
        tr.step_relative(step, obs)
        for s in tr.sets.values():
            assert len(s) == params.num_particles
            assert abs(s.weights.sum() - 1.0) <= 1e-9


def test_determinism():
    poses, odo = _exact_stream(80)

    def run():
        tr = MultiRobotTracker([0, 1, 2], FilterParams(), seed=5)
        out = []
        for k, step in enumerate(odo, start=1):
            obs = {(0, 1): relative_pose(poses[0][k], poses[1][k]), (1, 2): relative_pose(poses[1][k], poses[2][k])}
            tr.step_relative(step, obs)
            out.append(np.concatenate([s.states.ravel() for s in tr.sets.values()]))
        return np.array(out)

    assert np.array_equal(run(), run())


def test_noise_free_tracking():
    poses, odo = _exact_stream(300)
    params = FilterParams(sigma_d=0.0, sigma_theta=0.0, init_std=(0.0, 0.0, 0.0))
    tr = MultiRobotTracker([0, 1, 2], params, seed=1)
    for k, step in enumerate(odo, start=1):
        obs = {(0, 1): relative_pose(poses[0][k], poses[1][k]), (0, 2): relative_pose(poses[0][k], poses[2][k])}
        est = tr.step_relative(step, obs)
        for r in (0, 1, 2):
            assert pose_close(est[r], poses[r][k], 1e-6)


def test_params_validation():
    with pytest.raises(ValueError):
        FilterParams(num_particles=0)
    with pytest.raises(ValueError):
        FilterParams(lambda_d=0.0)
    with pytest.raises(ValueError):
        FilterParams(resample_threshold=1.5)
    with pytest.raises(ValueError):
        FilterParams(init_std=(0.1, 0.1))
