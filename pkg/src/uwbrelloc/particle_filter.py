"""Per-robot particle filters fusing odometry with relative-pose observations.

Particles are stored as an (S, 3) array of poses plus an (S,) weight vector.
Each robot has its own filter; the observation model for robot i compares
the relative pose implied by a particle and robot j's current point estimate
with an externally supplied relative-pose measurement.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ranging import NodeLayout, RangeSet
from .se2 import OdometryDelta, Pose2D, compose, inverse, normalize_angles
from .solver import PoseEstimate

log = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)


class FilterDivergence(RuntimeWarning):
    """Every particle weight underflowed; the set was reset to uniform weights."""


@dataclass(frozen=True)
class FilterParams:
    """Motion noise, observation spread and resampling policy.

    ``sigma_d`` / ``sigma_theta`` may be zero for noise-free runs.
    """

    num_particles: int = 500
    sigma_d: float = 0.1
    sigma_theta: float = 0.05
    lambda_d: float = 1.0
    lambda_theta: float = 0.1
    resample_threshold: float = 0.5
    resample_every_tick: bool = False
    squared_lambda: bool = False
    init_std: tuple[float, float, float] = (0.5, 0.5, 0.3)
    range_sigma: float = 0.3

    def __post_init__(self) -> None:
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        if self.sigma_d < 0 or self.sigma_theta < 0:
            raise ValueError("motion noise must be >= 0")
        if not (self.lambda_d > 0 and self.lambda_theta > 0 and self.range_sigma > 0):
            raise ValueError("lambda_d, lambda_theta and range_sigma must be > 0")
        if not 0.0 < self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must lie in (0, 1]")
        object.__setattr__(self, "init_std", tuple(float(v) for v in self.init_std))
        if len(self.init_std) != 3 or min(self.init_std) < 0:
            raise ValueError("init_std must be three non-negative values")


@dataclass(frozen=True)
class Particle:
    pose: Pose2D
    weight: float


@dataclass
class ParticleSet:
    robot: int
    states: np.ndarray
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)

    def __post_init__(self) -> None:
        self.states = np.array(self.states, dtype=float).reshape(-1, 3)
        n = self.states.shape[0]
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            self.weights = np.array(self.weights, dtype=float)
            if self.weights.shape != (n,) or np.any(self.weights < 0):
                raise ValueError("weights must be non-negative, one per particle")
            self.weights = self.weights / self.weights.sum()

    @classmethod
    def gaussian(
        cls,
        robot: int,
        mean: Pose2D,
        std: Sequence[float],
        size: int,
        rng: np.random.Generator,
    ) -> ParticleSet:
        states = mean.as_vector() + rng.normal(0.0, 1.0, (size, 3)) * np.asarray(std, dtype=float)
        states[:, 2] = normalize_angles(states[:, 2])
        return cls(robot, states, rng=rng)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def particles(self) -> list[Particle]:
        return [Particle(Pose2D.from_vector(s), float(w)) for s, w in zip(self.states, self.weights)]

    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


def predict(pset: ParticleSet, odom: OdometryDelta, params: FilterParams) -> None:
    """Move every particle by the odometry step plus Gaussian noise.

    The travelled distance is signed by the forward component ``dx`` so that
    reversing is preserved.
    """
    n = len(pset)
    dist = math.hypot(odom.dx, odom.dy)
    if odom.dx < 0.0:
        dist = -dist
    noise = pset.rng.normal(0.0, 1.0, (n, 3))
    theta = pset.states[:, 2]
    pset.states[:, 0] += dist * np.cos(theta) + params.sigma_d * noise[:, 0]
    pset.states[:, 1] += dist * np.sin(theta) + params.sigma_d * noise[:, 1]
    pset.states[:, 2] = normalize_angles(theta + odom.dtheta + params.sigma_theta * noise[:, 2])


def squared_distance(implied: np.ndarray, measured: Pose2D, params: FilterParams) -> np.ndarray:
    """Weighted squared discrepancy between implied relative poses (S, 3) and the measurement."""
    ld, lt = params.lambda_d, params.lambda_theta
    if params.squared_lambda:
        ld, lt = ld * ld, lt * lt
    dth = normalize_angles(measured.theta - implied[:, 2])
    return ((measured.x - implied[:, 0]) ** 2 + (measured.y - implied[:, 1]) ** 2) / ld + dth**2 / lt


def likelihood(d2: np.ndarray | float, params: FilterParams) -> np.ndarray:
    norm = 1.0 / (SQRT_2PI * params.lambda_d * params.lambda_theta)
    return norm * np.exp(-0.5 * np.asarray(d2, dtype=float))


def _implied_relative(states: np.ndarray, reference: Pose2D) -> np.ndarray:
    c, s = np.cos(states[:, 2]), np.sin(states[:, 2])
    dx = reference.x - states[:, 0]
    dy = reference.y - states[:, 1]
    out = np.empty_like(states)
    out[:, 0] = c * dx + s * dy
    out[:, 1] = -s * dx + c * dy
    out[:, 2] = normalize_angles(reference.theta - states[:, 2])
    return out


def _normalize(pset: ParticleSet, weights: np.ndarray) -> bool:
    total = weights.sum()
    if not total > 0 or not math.isfinite(total):
        warnings.warn(f"robot {pset.robot}: all particle weights vanished, resetting", FilterDivergence, stacklevel=3)
        pset.weights = np.full(len(pset), 1.0 / len(pset))
        return False
    pset.weights = weights / total
    return True


def update(
    pset: ParticleSet,
    reference_pose: Pose2D,
    measurement: PoseEstimate | Pose2D,
    params: FilterParams,
) -> bool:
    """Reweight robot i's particles by the likelihood of the measured pose of j.

    ``reference_pose`` is robot j's current estimate in the common frame and
    ``measurement`` the pose of j in i's frame. Returns False if the weights
    had to be reset.
    """
    rel = measurement.pose if isinstance(measurement, PoseEstimate) else measurement
    d2 = squared_distance(_implied_relative(pset.states, reference_pose), rel, params)
    return _normalize(pset, pset.weights * likelihood(d2, params))


def update_with_ranges(
    pset: ParticleSet,
    reference_pose: Pose2D,
    ranges: RangeSet,
    layout_i: NodeLayout,
    layout_j: NodeLayout,
    params: FilterParams,
) -> bool:
    """Reweight by raw node-to-node ranges instead of a relative pose.

    ``ranges`` must be oriented from this robot (rows) to the reference robot (columns).
    """
    ranges.check_layouts(layout_i, layout_j)
    rel = _implied_relative(pset.states, reference_pose)
    k, l = np.nonzero(ranges.mask)
    if k.size == 0:
        return True
    ci, cj = layout_i.offsets[k], layout_j.offsets[l]
    c, s = np.cos(rel[:, 2])[:, None], np.sin(rel[:, 2])[:, None]
    px = rel[:, 0][:, None] + c * cj[:, 0] - s * cj[:, 1] - ci[:, 0]
    py = rel[:, 1][:, None] + s * cj[:, 0] + c * cj[:, 1] - ci[:, 1]
    res = ranges.ranges[k, l] - np.hypot(px, py)
    loglik = -0.5 * np.sum(res**2, axis=1) / params.range_sigma**2
    # shift before exponentiating; the constant cancels in normalization
    return _normalize(pset, pset.weights * np.exp(loglik - loglik.max()))


def resample(pset: ParticleSet, params: FilterParams | None = None, force: bool = False) -> bool:
    """Systematic resampling, gated by the effective sample size.

    Runs when ``ESS / S`` drops below ``params.resample_threshold``, always
    when ``params.resample_every_tick`` or ``force`` is set. Returns whether
    it ran.
    """
    params = params or FilterParams()
    n = len(pset)
    if not (force or params.resample_every_tick) and pset.effective_sample_size() / n >= params.resample_threshold:
        return False
    cumulative = np.cumsum(pset.weights)
    cumulative[-1] = 1.0
    positions = (pset.rng.random() + np.arange(n)) / n
    idx = np.searchsorted(cumulative, positions, side="right")
    pset.states = pset.states[np.minimum(idx, n - 1)].copy()
    pset.weights = np.full(n, 1.0 / n)
    return True


def estimate(pset: ParticleSet) -> Pose2D:
    """Weighted mean position and circular mean heading."""
    w = pset.weights
    total = w.sum()
    if not total > 0:
        raise ValueError(f"robot {pset.robot}: zero total weight")
    w = w / total
    x = float(w @ pset.states[:, 0])
    y = float(w @ pset.states[:, 1])
    theta = math.atan2(float(w @ np.sin(pset.states[:, 2])), float(w @ np.cos(pset.states[:, 2])))
    return Pose2D(x, y, theta)


class MultiRobotTracker:
    """One particle filter per robot, updated round-robin each tick.

    The common frame is the first robot's starting pose. Other robots are
    seeded the first time a relative pose links them to a tracked robot.
    """

    def __init__(self, robots: Sequence[int], params: FilterParams | None = None, seed: int = 0):
        self.robots = list(robots)
        self.params = params or FilterParams()
        streams = np.random.SeedSequence(seed).spawn(len(self.robots))
        self._rngs = {r: np.random.default_rng(s) for r, s in zip(self.robots, streams)}
        first = self.robots[0]
        self.sets: dict[int, ParticleSet | None] = {r: None for r in self.robots}
        self.sets[first] = ParticleSet(
            first, np.zeros((self.params.num_particles, 3)), rng=self._rngs[first]
        )
        self.resets = 0

    def initialized(self, robot: int) -> bool:
        return self.sets[robot] is not None

    def estimates(self) -> dict[int, Pose2D]:
        return {r: estimate(s) for r, s in self.sets.items() if s is not None}

    def predict(self, odometry: Mapping[int, OdometryDelta | None]) -> None:
        for r in self.robots:
            pset, odom = self.sets[r], odometry.get(r)
            if pset is not None and odom is not None:
                predict(pset, odom, self.params)

    def _seed(self, observations: Mapping[tuple[int, int], Pose2D]) -> None:
        changed = True
        while changed:
            changed = False
            for (i, j), rel in observations.items():
                for a, b, t in ((i, j, rel), (j, i, None)):
                    if self.sets[a] is not None and self.sets[b] is None:
                        t = rel if t is not None else inverse(rel)
                        mean = compose(estimate(self.sets[a]), t)
                        self.sets[b] = ParticleSet.gaussian(
                            b, mean, self.params.init_std, self.params.num_particles, self._rngs[b]
                        )
                        changed = True

    def step_relative(self, odometry: Mapping[int, OdometryDelta | None], observations: Mapping[tuple[int, int], PoseEstimate | Pose2D]) -> dict[int, Pose2D]:
        """Predict every robot, then update each against every observed neighbour and resample."""
        rel = {k: (v.pose if isinstance(v, PoseEstimate) else v) for k, v in observations.items()}
        self.predict(odometry)
        self._seed(rel)
        for i in self.robots:
            pset = self.sets[i]
            if pset is None:
                continue
            touched = False
            for j in self.robots:
                if j == i or self.sets[j] is None:
                    continue
                if (i, j) in rel:
                    meas = rel[(i, j)]
                elif (j, i) in rel:
                    meas = inverse(rel[(j, i)])
                else:
                    continue
                if not update(pset, estimate(self.sets[j]), meas, self.params):
                    self.resets += 1
                touched = True
            if touched:
                resample(pset, self.params)
        return self.estimates()

    def step_ranges(
        self,
        odometry: Mapping[int, OdometryDelta | None],
        ranges: Mapping[tuple[int, int], RangeSet],
        layouts: Mapping[int, NodeLayout],
        seed_observations: Mapping[tuple[int, int], PoseEstimate | Pose2D] | None = None,
    ) -> dict[int, Pose2D]:
        """Same cycle, with range likelihoods in place of relative poses.

        Robots are seeded from ``seed_observations`` (typically per-frame
        range solutions) since ranges alone do not give a pose to seed from.
        """
        self.predict(odometry)
        if seed_observations:
            self._seed({k: (v.pose if isinstance(v, PoseEstimate) else v) for k, v in seed_observations.items()})
        for i in self.robots:
            pset = self.sets[i]
            if pset is None:
                continue
            touched = False
            for j in self.robots:
                if j == i or self.sets[j] is None:
                    continue
                if (i, j) in ranges:
                    rs = ranges[(i, j)]
                elif (j, i) in ranges:
                    rs = ranges[(j, i)].transposed()
                else:
                    continue
                if not update_with_ranges(pset, estimate(self.sets[j]), rs, layouts[i], layouts[j], self.params):
                    self.resets += 1
                touched = True
            if touched:
                resample(pset, self.params)
        return self.estimates()
