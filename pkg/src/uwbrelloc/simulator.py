"""Ground-truth trajectories and synthetic sensor streams.

Sensors are generated at their native rates (odometry 20 Hz, UWB 50 Hz by
default) and then aligned onto a common tick clock: odometry increments are
composed over each tick interval and the newest range block per pair inside
the interval is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ranging import NodeLayout, RangeNoiseModel, RangeSet, synthesize_range_set
from .se2 import Pose2D, compose_arrays, normalize_angle, normalize_angles, relative_arrays

PATH_KINDS = ("rectangle", "square", "t_shape", "waypoints")
TURN_MODELS = ("stop-and-turn", "arc")
SIGNIFICANT_DIGITS = 9


class ScenarioError(ValueError):
    pass


def quantize(values: np.ndarray | float) -> np.ndarray:
    """Round to the precision the CSV format carries, so datasets round-trip exactly."""
    arr = np.asarray(values, dtype=float)
    flat = [float(f"{v:.{SIGNIFICANT_DIGITS}g}") for v in arr.ravel()]
    return np.array(flat).reshape(arr.shape)


@dataclass(frozen=True)
class PathSpec:
    """A closed path (or a single point) in the world frame.

    ``width`` runs along the initial heading, ``height`` to its left. For a
    T-shape the stem has length ``height`` and the bar ``width``.
    """

    kind: str = "rectangle"
    width: float = 7.0
    height: float = 6.0
    origin: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0
    laps: int = 3
    waypoints: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in PATH_KINDS:
            raise ScenarioError(f"path.kind: unknown kind {self.kind!r}")
        if self.laps < 1:
            raise ScenarioError("path.laps: must be >= 1")
        if self.kind == "waypoints":
            if len(self.waypoints) < 1:
                raise ScenarioError("path.waypoints: need at least one point")
        elif not (self.width > 0 and self.height > 0):
            raise ScenarioError("path dimensions must be > 0")

    def polyline(self) -> np.ndarray:
        w, h = self.width, self.height
        if self.kind == "rectangle":
            local = [(0, 0), (w, 0), (w, h), (0, h), (0, 0)]
        elif self.kind == "square":
            local = [(0, 0), (w, 0), (w, w), (0, w), (0, 0)]
        elif self.kind == "t_shape":
            local = [(0, 0), (h, 0), (h, w / 2), (h, -w / 2), (h, 0), (0, 0)]
        else:
            return np.array(self.waypoints, dtype=float).reshape(-1, 2)
        pts = np.array(local, dtype=float)
        c, s = math.cos(self.heading), math.sin(self.heading)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T + np.asarray(self.origin, dtype=float)

    def is_static(self) -> bool:
        pts = self.polyline()
        return bool(np.all(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0.0)) if len(pts) > 1 else True


@dataclass(frozen=True)
class MotionProfile:
    speed: float = 0.2
    odom_rate: float = 20.0
    uwb_rate: float = 50.0
    turn_model: str = "stop-and-turn"
    turn_rate: float = 0.5
    turn_radius: float = 0.5

    def __post_init__(self) -> None:
        if not (self.speed > 0 and self.odom_rate > 0 and self.uwb_rate > 0 and self.turn_rate > 0):
            raise ScenarioError("motion: speed, rates and turn_rate must be > 0")
        if self.turn_model not in TURN_MODELS:
            raise ScenarioError(f"motion.turn_model: unknown model {self.turn_model!r}")


@dataclass(frozen=True)
class OdomNoiseModel:
    """Odometry noise whose variance grows with distance travelled and angle turned."""

    sigma_trans_per_meter: float = 0.05
    sigma_rot_per_rad: float = 0.05
    sigma_rot_per_meter: float = 0.02
    bias_drift: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if min(self.sigma_trans_per_meter, self.sigma_rot_per_rad, self.sigma_rot_per_meter) < 0:
            raise ScenarioError("odometry noise must be >= 0")

    @classmethod
    def noiseless(cls) -> OdomNoiseModel:
        return cls(0.0, 0.0, 0.0)


# -- trajectories ---------------------------------------------------------


@dataclass(frozen=True)
class _Segment:
    kind: str  # "line", "turn" or "arc"
    start: tuple[float, float, float]
    duration: float
    length: float = 0.0  # line/arc: metres travelled
    angle: float = 0.0  # turn/arc: signed heading change

    def pose_at(self, tau: float) -> np.ndarray:
        x, y, h = self.start
        frac = 0.0 if self.duration == 0 else min(max(tau / self.duration, 0.0), 1.0)
        if self.kind == "line":
            d = frac * self.length
            return np.array([x + d * math.cos(h), y + d * math.sin(h), h])
        if self.kind == "turn":
            return np.array([x, y, h + frac * self.angle])
        s = frac * self.length
        k = self.angle / self.length
        h1 = h + k * s
        return np.array([x + (math.sin(h1) - math.sin(h)) / k, y - (math.cos(h1) - math.cos(h)) / k, h1])

    def end(self) -> tuple[float, float, float]:
        x, y, h = self.pose_at(self.duration) if self.duration > 0 else np.array(self.start)
        return (float(x), float(y), float(h))


class Trajectory:
    """Constant-speed traversal of a path as a function of time."""

    def __init__(
        self,
        segments: list[_Segment],
        start: tuple[float, float, float],
        final: tuple[float, float, float] | None = None,
    ):
        self.segments = segments
        self.start = start
        self._final = final if final is not None else (segments[-1].end() if segments else start)
        self._t0 = np.cumsum([0.0] + [s.duration for s in segments])

    @property
    def duration(self) -> float:
        return float(self._t0[-1])

    def pose_at(self, t: float) -> np.ndarray:
        if not self.segments or t <= 0:
            out = np.array(self.start, dtype=float)
        elif t >= self.duration:
            # exact closing pose, free of accumulated round-off
            out = np.array(self._final, dtype=float)
        else:
            k = int(np.searchsorted(self._t0, t, side="right")) - 1
            out = self.segments[k].pose_at(t - self._t0[k])
        out[2] = normalize_angle(float(out[2]))
        return out

    def sample(self, times: np.ndarray) -> np.ndarray:
        return np.array([self.pose_at(float(t)) for t in times]).reshape(-1, 3)

    @classmethod
    def from_path(cls, path: PathSpec, motion: MotionProfile) -> Trajectory:
        pts = path.polyline()
        keep = [0] + [k for k in range(1, len(pts)) if np.linalg.norm(pts[k] - pts[k - 1]) > 0]
        pts = pts[keep]
        if len(pts) < 2:
            start = (float(pts[0, 0]), float(pts[0, 1]), float(path.heading))
            return cls([], start)

        headings = [math.atan2(b[1] - a[1], b[0] - a[0]) for a, b in zip(pts[:-1], pts[1:])]
        lengths = [float(np.linalg.norm(b - a)) for a, b in zip(pts[:-1], pts[1:])]
        closed = bool(np.allclose(pts[0], pts[-1]))
        start = (float(pts[0, 0]), float(pts[0, 1]), headings[0])
        segments: list[_Segment] = []
        for _ in range(path.laps):
            segments.extend(cls._lap(pts, headings, lengths, motion, (start if closed else None)))
            if not closed:
                break
        if closed:
            return cls(segments, start, start)
        return cls(segments, start, (float(pts[-1, 0]), float(pts[-1, 1]), headings[-1]))

    @staticmethod
    def _lap(pts, headings, lengths, motion, start) -> list[_Segment]:
        n = len(headings)
        turns = [normalize_angle(headings[k + 1] - headings[k]) for k in range(n - 1)]
        # distance cut from each end of each segment by arc fillets
        cut = [0.0] * (n + 1)
        use_arc = [False] * (n - 1)
        if motion.turn_model == "arc":
            for k, phi in enumerate(turns):
                if phi == 0.0 or abs(phi) > 2 * math.pi / 3:
                    continue
                tangent = motion.turn_radius * math.tan(abs(phi) / 2)
                limit = 0.5 * min(lengths[k], lengths[k + 1])
                if tangent <= limit:
                    use_arc[k] = True
                    cut[k + 1] = tangent
        segs: list[_Segment] = []
        x, y = float(pts[0, 0]), float(pts[0, 1])
        h = headings[0]
        for k in range(n):
            straight = lengths[k] - cut[k] - cut[k + 1]
            if straight > 0:
                seg = _Segment("line", (x, y, h), straight / motion.speed, straight)
                segs.append(seg)
                x, y, _ = seg.end()
            if k < n - 1:
                phi = turns[k]
                if use_arc[k]:
                    arc_len = motion.turn_radius * abs(phi)
                    seg = _Segment("arc", (x, y, h), arc_len / motion.speed, arc_len, phi)
                    segs.append(seg)
                    x, y, _ = seg.end()
                elif phi != 0.0:
                    segs.append(_Segment("turn", (x, y, h), abs(phi) / motion.turn_rate, angle=phi))
                # snap to the exact corner geometry to avoid drift
                h = headings[k + 1]
                if not use_arc[k]:
                    x, y = float(pts[k + 1, 0]), float(pts[k + 1, 1])
        if start is not None:
            phi = normalize_angle(start[2] - h)
            if phi != 0.0:
                segs.append(_Segment("turn", (float(pts[-1, 0]), float(pts[-1, 1]), h), abs(phi) / motion.turn_rate, angle=phi))
        return segs


def generate_ground_truth(path: PathSpec, motion: MotionProfile, tick_rate: float, duration: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample a path at ``tick_rate``; returns ``(times, poses)``.

    Sampling runs until the path is finished (or for ``duration`` seconds),
    holding the final pose afterwards.
    """
    if tick_rate <= 0:
        raise ScenarioError("tick_rate must be > 0")
    if len(path.polyline()) > 1 and path.is_static():
        raise ScenarioError("zero-length path")
    traj = Trajectory.from_path(path, motion)
    total = traj.duration if duration is None else duration
    n = int(math.ceil(total * tick_rate - 1e-9)) + 1
    times = np.arange(n) / tick_rate
    return times, traj.sample(times)


def derive_odometry(gt: np.ndarray, noise: OdomNoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Noisy per-step odometry (N-1, 3) from a ground-truth pose sequence (N, 3).

    Translation noise std is ``sigma_trans_per_meter * sqrt(distance)``;
    rotation noise variance adds ``sigma_rot_per_rad**2 * |turn|`` and
    ``sigma_rot_per_meter**2 * distance``. A robot that does not move gets
    exactly zero odometry.
    """
    gt = np.asarray(gt, dtype=float)
    if gt.shape[0] < 2:
        raise ScenarioError("need at least two poses to derive odometry")
    true = relative_arrays(gt[:-1], gt[1:])
    dist = np.hypot(true[:, 0], true[:, 1])
    rot = np.abs(true[:, 2])
    std_t = noise.sigma_trans_per_meter * np.sqrt(dist)
    std_r = np.sqrt(noise.sigma_rot_per_rad**2 * rot + noise.sigma_rot_per_meter**2 * dist)
    draws = rng.normal(0.0, 1.0, true.shape)
    out = true + draws * np.column_stack([std_t, std_t, std_r]) + np.outer(dist, noise.bias_drift)
    out[:, 2] = normalize_angles(out[:, 2])
    return out


def dead_reckon(start: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Compose odometry deltas from a start pose; returns (N+1, 3)."""
    poses = [np.asarray(start, dtype=float)]
    for d in deltas:
        poses.append(compose_arrays(poses[-1], d))
    return np.array(poses)


# -- scenarios ------------------------------------------------------------


@dataclass(frozen=True)
class RobotSpec:
    id: int
    path: PathSpec
    layout: NodeLayout = field(default_factory=lambda: NodeLayout.square(0.5))
    static_pose: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class Scenario:
    robots: tuple[RobotSpec, ...]
    motion: MotionProfile = MotionProfile()
    range_noise: RangeNoiseModel = RangeNoiseModel()
    odom_noise: OdomNoiseModel = OdomNoiseModel()
    tick_rate: float = 10.0
    max_range: float = 100.0
    seed: int = 0
    duration: float | None = None

    def __post_init__(self) -> None:
        if len(self.robots) < 2:
            raise ScenarioError("robots: need at least two robots")
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise ScenarioError("robots: ids must be unique")
        if not (self.tick_rate > 0 and self.max_range > 0):
            raise ScenarioError("tick_rate and max_range must be > 0")

    @property
    def layouts(self) -> dict[int, NodeLayout]:
        return {r.id: r.layout for r in self.robots}


@dataclass
class Dataset:
    """Tick-aligned streams.

    ``odometry[r][k]`` is the motion from tick k-1 to tick k (zero at k=0);
    ``ranges[k]`` maps an ordered pair ``(i, j)`` to its range block.
    """

    times: np.ndarray
    robots: list[int]
    ground_truth: dict[int, np.ndarray]
    odometry: dict[int, np.ndarray]
    ranges: list[dict[tuple[int, int], RangeSet]]
    layouts: dict[int, NodeLayout] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(a, b) for k, a in enumerate(self.robots) for b in self.robots[k + 1 :]]

    def true_relative(self, i: int, j: int) -> np.ndarray:
        return relative_arrays(self.ground_truth[i], self.ground_truth[j])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.robots != other.robots or not np.array_equal(self.times, other.times):
            return False
        for r in self.robots:
            if not np.array_equal(self.ground_truth[r], other.ground_truth[r]):
                return False
            if not np.array_equal(self.odometry[r], other.odometry[r]):
                return False
        if len(self.ranges) != len(other.ranges) or self.layouts != other.layouts:
            return False
        return all(a.keys() == b.keys() and all(a[k] == b[k] for k in a) for a, b in zip(self.ranges, other.ranges))


@dataclass
class RawStreams:
    """Sensor streams at their native rates, before tick alignment."""

    robots: list[int]
    trajectories: dict[int, Trajectory]
    odom_times: np.ndarray
    odometry: dict[int, np.ndarray]  # (len(odom_times), 3); row n = motion over (t[n-1], t[n]]
    uwb_times: np.ndarray
    ranges: list[dict[tuple[int, int], RangeSet]]
    duration: float


def _trajectory(robot: RobotSpec, motion: MotionProfile) -> Trajectory:
    if robot.static_pose is not None:
        x, y, h = robot.static_pose
        return Trajectory([], (float(x), float(y), float(h)))
    return Trajectory.from_path(robot.path, motion)


def _grid(duration: float, rate: float) -> np.ndarray:
    n = int(math.floor(duration * rate + 1e-9))
    return np.arange(n + 1) / rate


def simulate_raw(scenario: Scenario) -> RawStreams:
    motion = scenario.motion
    robots = [r.id for r in scenario.robots]
    trajs = {r.id: _trajectory(r, motion) for r in scenario.robots}
    dur = scenario.duration if scenario.duration is not None else max(t.duration for t in trajs.values())
    if dur <= 0:
        dur = 1.0
    # extend so the last tick interval is fully covered
    dur = math.ceil(dur * scenario.tick_rate - 1e-9) / scenario.tick_rate
    seeds = np.random.SeedSequence(scenario.seed)
    odo_seq, uwb_seq = seeds.spawn(2)
    odo_rngs = [np.random.default_rng(s) for s in odo_seq.spawn(len(robots))]

    odom_times = _grid(dur, motion.odom_rate)
    odometry = {}
    for rid, rng in zip(robots, odo_rngs):
        gt = trajs[rid].sample(odom_times)
        deltas = derive_odometry(gt, scenario.odom_noise, rng) if len(gt) > 1 else np.zeros((0, 3))
        odometry[rid] = np.vstack([np.zeros((1, 3)), deltas])

    uwb_times = _grid(dur, motion.uwb_rate)
    uwb_rng = np.random.default_rng(uwb_seq)
    layouts = scenario.layouts
    poses = {rid: trajs[rid].sample(uwb_times) for rid in robots}
    pairs = [(a, b) for k, a in enumerate(robots) for b in robots[k + 1 :]]
    ranges: list[dict[tuple[int, int], RangeSet]] = []
    for n, t in enumerate(uwb_times):
        block = {}
        for i, j in pairs:
            pi, pj = Pose2D.from_vector(poses[i][n]), Pose2D.from_vector(poses[j][n])
            if math.hypot(pj.x - pi.x, pj.y - pi.y) > scenario.max_range:
                continue
            rs = synthesize_range_set(
                pi, pj, layouts[i], layouts[j], scenario.range_noise, uwb_rng, robot_i=i, robot_j=j, timestamp=float(t)
            )
            if rs.num_valid:
                block[(i, j)] = rs
        ranges.append(block)
    return RawStreams(robots, trajs, odom_times, odometry, uwb_times, ranges, dur)


def _tick_of(times: np.ndarray, rate: float, tick_rate: float) -> np.ndarray:
    """Tick index k with t in (t_{k-1}, t_k] for each sample time."""
    return np.ceil(np.round(times * tick_rate, 9)).astype(int)


def align_streams(raw: RawStreams, tick_rate: float) -> Dataset:
    """Resample native-rate streams onto a common tick clock."""
    n_ticks = int(round(raw.duration * tick_rate)) + 1
    times = np.arange(n_ticks) / tick_rate
    gt = {r: raw.trajectories[r].sample(times) for r in raw.robots}

    odo_tick = _tick_of(raw.odom_times, 0.0, tick_rate)
    odometry = {}
    for r in raw.robots:
        acc = np.zeros((n_ticks, 3))
        deltas = raw.odometry[r]
        for n in range(1, len(deltas)):
            k = odo_tick[n]
            if k < n_ticks:
                acc[k] = compose_arrays(acc[k], deltas[n])
        odometry[r] = acc

    uwb_tick = _tick_of(raw.uwb_times, 0.0, tick_rate)
    ranges: list[dict[tuple[int, int], RangeSet]] = [dict() for _ in range(n_ticks)]
    for n, block in enumerate(raw.ranges):
        k = uwb_tick[n]
        if k >= n_ticks:
            continue
        for pair, rs in block.items():
            ranges[k][pair] = RangeSet(pair[0], pair[1], float(times[k]), rs.ranges, rs.mask)
    return _quantized(Dataset(times, list(raw.robots), gt, odometry, ranges))


def _quantized(ds: Dataset) -> Dataset:
    gt = {}
    for r, v in ds.ground_truth.items():
        q = quantize(v)
        q[:, 2] = [normalize_angle(a) for a in q[:, 2]]
        gt[r] = quantize(q)
    odo = {}
    for r, v in ds.odometry.items():
        q = quantize(v)
        q[:, 2] = [normalize_angle(a) for a in q[:, 2]]
        odo[r] = quantize(q)
    times = quantize(ds.times)
    ranges = []
    for k, block in enumerate(ds.ranges):
        ranges.append(
            {
                p: RangeSet(rs.robot_i, rs.robot_j, float(times[k]), np.where(rs.mask, quantize(rs.ranges), np.nan), rs.mask)
                for p, rs in block.items()
            }
        )
    return Dataset(times, ds.robots, gt, odo, ranges)


def run_scenario(scenario: Scenario) -> Dataset:
    """Simulate a scenario and align it to ``scenario.tick_rate``; a pure function of the scenario."""
    ds = align_streams(simulate_raw(scenario), scenario.tick_rate)
    ds.layouts = dict(scenario.layouts)
    return ds


# -- presets --------------------------------------------------------------


def first_test_case(noise_free: bool = False, spacing: float = 0.5, laps: int = 3, seed: int = 0) -> Scenario:
    """One robot on a 7 m x 6 m rectangle, a second standing still inside it."""
    layout = NodeLayout.square(spacing)
    robots = (
        RobotSpec(0, PathSpec("rectangle", 7.0, 6.0, (0.0, 0.0), 0.0, laps), layout),
        RobotSpec(1, PathSpec("waypoints", waypoints=((3.5, 3.0),)), layout, static_pose=(3.5, 3.0, 0.0)),
    )
    return _preset(robots, noise_free, seed)


def second_test_case(noise_free: bool = False, spacing: float = 0.5, laps: int = 3, seed: int = 0) -> Scenario:
    """Three robots moving together: one T-shaped path (6 m x 12 m) and two 5 m squares."""
    layout = NodeLayout.square(spacing)
    robots = (
        RobotSpec(0, PathSpec("t_shape", 6.0, 12.0, (0.0, 0.0), math.pi / 2, laps), layout),
        RobotSpec(1, PathSpec("square", 5.0, 5.0, (1.0, 2.0), 0.0, laps), layout),
        RobotSpec(2, PathSpec("square", 5.0, 5.0, (-6.0, 4.0), 0.0, laps), layout),
    )
    return _preset(robots, noise_free, seed)


def _preset(robots: Sequence[RobotSpec], noise_free: bool, seed: int) -> Scenario:
    if noise_free:
        return Scenario(tuple(robots), range_noise=RangeNoiseModel.noiseless(), odom_noise=OdomNoiseModel.noiseless(), seed=seed)
    return Scenario(tuple(robots), seed=seed)


PRESETS = {"test-case-1": first_test_case, "test-case-2": second_test_case}


def preset(name: str, **kwargs) -> Scenario:
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
