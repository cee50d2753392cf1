import math

import numpy as np
import pytest

from uwbrelloc.ranging import RangeNoiseModel
from uwbrelloc.se2 import normalize_angles
from uwbrelloc.simulator import (
    MotionProfile,
    OdomNoiseModel,
    PathSpec,
    RobotSpec,
    Scenario,
    ScenarioError,
    dead_reckon,
    derive_odometry,
    generate_ground_truth,
    preset,
    quantize,
    run_scenario,
)


def test_square_lap_duration_and_closure():
    motion = MotionProfile(speed=0.2, turn_rate=0.5)
    times, poses = generate_ground_truth(PathSpec("square", 4.0, 4.0, laps=1), motion, 10.0)
    # 16 m of driving plus four 90 degree turns at 0.5 rad/s
    expected = 16.0 / 0.2 + 4 * (math.pi / 2) / 0.5
    assert times[-1] == pytest.approx(expected, abs=0.1)
    assert np.allclose(poses[-1, :2], poses[0, :2], atol=1e-9)
    assert abs(normalize_angles(poses[-1, 2] - poses[0, 2])) < 1e-9


def test_rectangle_bounding_box():
    _, poses = generate_ground_truth(PathSpec("rectangle", 7.0, 6.0, laps=1), MotionProfile(), 10.0)
    assert poses[:, 0].max() - poses[:, 0].min() == pytest.approx(7.0, abs=1e-9)
    assert poses[:, 1].max() - poses[:, 1].min() == pytest.approx(6.0, abs=1e-9)


def test_heading_tangent_while_driving():
    _, poses = generate_ground_truth(PathSpec("rectangle", 7.0, 6.0, laps=1), MotionProfile(), 10.0)
    step = np.diff(poses[:, :2], axis=0)
    moving = np.hypot(step[:, 0], step[:, 1]) > 1e-6
    bearing = np.arctan2(step[moving, 1], step[moving, 0])
    # a step that straddles a corner is not on a straight segment; most are
    err = np.abs(normalize_angles(bearing - poses[:-1][moving, 2]))
    assert np.mean(err < 1e-9) > 0.95


def test_stationary_waypoint_is_constant():
    _, poses = generate_ground_truth(PathSpec("waypoints", waypoints=((1.0, 2.0),)), MotionProfile(), 10.0, duration=5.0)
    assert np.all(poses == poses[0])


def test_zero_length_path_rejected():
    with pytest.raises(ScenarioError):
        generate_ground_truth(PathSpec("waypoints", waypoints=((1.0, 2.0), (1.0, 2.0))), MotionProfile(), 10.0)


def test_invalid_specs_rejected():
    with pytest.raises(ScenarioError):
        PathSpec("rectangle", -1.0, 2.0)
    with pytest.raises(ScenarioError):
        PathSpec("circle")
    with pytest.raises(ScenarioError):
        MotionProfile(speed=0.0)
    with pytest.raises(ScenarioError):
        OdomNoiseModel(-0.1, 0.0, 0.0)


def test_noiseless_odometry_reconstructs_truth():
    _, gt = generate_ground_truth(PathSpec("t_shape", 6.0, 12.0, laps=1), MotionProfile(), 10.0)
    odo = derive_odometry(gt, OdomNoiseModel.noiseless(), np.random.default_rng(0))
    dr = dead_reckon(gt[0], odo)
    assert np.allclose(dr[:, :2], gt[:, :2], atol=1e-9)
    assert np.max(np.abs(normalize_angles(dr[:, 2] - gt[:, 2]))) < 1e-9


def test_static_robot_gets_zero_odometry_under_noise():
    gt = np.tile([1.0, 2.0, 0.3], (50, 1))
    odo = derive_odometry(gt, OdomNoiseModel(0.5, 0.5, 0.5), np.random.default_rng(0))
    assert np.all(odo == 0.0)


def test_dead_reckoning_error_grows_with_distance():
    _, gt = generate_ground_truth(PathSpec("rectangle", 7.0, 6.0, laps=3), MotionProfile(), 10.0)
    errs = []
    for seed in range(10):
        dr = dead_reckon(gt[0], derive_odometry(gt, OdomNoiseModel(), np.random.default_rng(seed)))
        errs.append(np.hypot(*(dr[:, :2] - gt[:, :2]).T))
    mean = np.mean(errs, axis=0)
    thirds = [mean[: len(mean) // 3].mean(), mean[len(mean) // 3 : 2 * len(mean) // 3].mean(), mean[2 * len(mean) // 3 :].mean()]
    assert thirds[0] < thirds[1] < thirds[2]


def test_presets_match_described_layout():
    sc = preset("test-case-1")
    assert len(sc.robots) == 2
    assert sc.robots[1].static_pose is not None
    assert sc.robots[0].path.kind == "rectangle" and (sc.robots[0].path.width, sc.robots[0].path.height) == (7.0, 6.0)
    sc2 = preset("test-case-2")
    kinds = sorted((r.path.kind, r.path.width, r.path.height) for r in sc2.robots)
    assert kinds == [("square", 5.0, 5.0), ("square", 5.0, 5.0), ("t_shape", 6.0, 12.0)]
    with pytest.raises(ScenarioError):
        preset("test-case-9")


def test_preset_default_laps_is_three():
    assert preset("test-case-1").robots[0].path.laps == 3


def test_dataset_alignment_and_determinism(short_noisy_dataset):
    sc, ds = short_noisy_dataset
    n = len(ds.times)
    for r in ds.robots:
        assert ds.ground_truth[r].shape == (n, 3)
        assert ds.odometry[r].shape == (n, 3)
    assert np.all(ds.odometry[0][0] == 0.0)
    assert len(ds.ranges) == n
    # every tick has at most one range block per pair, tagged with that tick's time
    for k in range(1, n):
        for pair, rs in ds.ranges[k].items():
            assert pair in ds.pairs and rs.timestamp == ds.times[k]
    assert run_scenario(sc) == ds


def test_different_seed_changes_data(short_noisy_dataset):
    sc, ds = short_noisy_dataset
    other = run_scenario(Scenario(sc.robots, seed=sc.seed + 1))
    assert other != ds


def test_exact_dataset_composes_to_truth(short_exact_dataset):
    _, ds = short_exact_dataset
    for r in ds.robots:
        dr = dead_reckon(ds.ground_truth[r][0], ds.odometry[r][1:])
        assert np.allclose(dr[:, :2], ds.ground_truth[r][:, :2], atol=1e-6)


def test_max_range_drops_far_pairs():
    robots = (
        RobotSpec(0, PathSpec("waypoints", waypoints=((0.0, 0.0),)), static_pose=(0.0, 0.0, 0.0)),
        RobotSpec(1, PathSpec("waypoints", waypoints=((50.0, 0.0),)), static_pose=(50.0, 0.0, 0.0)),
    )
    ds = run_scenario(Scenario(robots, range_noise=RangeNoiseModel.noiseless(), max_range=10.0, duration=1.0))
    assert all(not block for block in ds.ranges)


def test_scenario_validation():
    r = RobotSpec(0, PathSpec("square", 2.0, 2.0))
    with pytest.raises(ScenarioError):
        Scenario((r,))
    with pytest.raises(ScenarioError):
        Scenario((r, r))


def test_quantize_is_idempotent():
    v = np.random.default_rng(0).normal(size=100) * 1e3
    q = quantize(v)
    assert np.array_equal(quantize(q), q)
    assert np.all(np.abs(q - v) <= 1e-8 * np.abs(v) + 1e-300)
