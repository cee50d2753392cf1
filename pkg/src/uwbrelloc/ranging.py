"""UWB node layouts, range prediction and synthetic range measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .se2 import Pose2D, relative_pose

MIN_RANGE = 1e-6


@dataclass(frozen=True)
class NodeLayout:
    """Body-frame positions of the UWB nodes on one robot.

    Row ``k`` of ``offsets`` is node ``k``; that order is the row (or column)
    order of every :class:`RangeSet` involving the robot.
    """

    offsets: np.ndarray

    def __post_init__(self) -> None:
        offsets = np.array(self.offsets, dtype=float).reshape(-1, 2)
        if offsets.shape[0] < 1:
            raise ValueError("a node layout needs at least one node")
        if not np.all(np.isfinite(offsets)):
            raise ValueError("node offsets must be finite")
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def square(cls, side: float) -> NodeLayout:
        """Four nodes at (±side/2, ±side/2), counter-clockwise from the front-left."""
        if not side > 0:
            raise ValueError(f"square side must be > 0, got {side}")
        h = side / 2.0
        return cls(np.array([[h, h], [-h, h], [-h, -h], [h, -h]]))

    @classmethod
    def single(cls) -> NodeLayout:
        return cls(np.zeros((1, 2)))

    def __len__(self) -> int:
        return self.offsets.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NodeLayout) and np.array_equal(self.offsets, other.offsets)

    def __hash__(self) -> int:
        return hash(self.offsets.tobytes())


@dataclass
class RangeSet:
    """The K x L block of ranges from robot ``robot_i``'s nodes to ``robot_j``'s."""

    robot_i: int
    robot_j: int
    timestamp: float
    ranges: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.ranges = np.array(self.ranges, dtype=float, ndmin=2)
        if self.mask is None:
            self.mask = np.isfinite(self.ranges)
        self.mask = np.array(self.mask, dtype=bool, ndmin=2)
        if self.mask.shape != self.ranges.shape:
            raise ValueError("range mask shape does not match ranges")
        valid = self.ranges[self.mask]
        if np.any(~np.isfinite(valid)) or np.any(valid <= 0):
            raise ValueError("valid ranges must be finite and > 0")

    @property
    def shape(self) -> tuple[int, int]:
        return self.ranges.shape  # type: ignore[return-value]

    @property
    def num_valid(self) -> int:
        return int(self.mask.sum())

    def transposed(self) -> RangeSet:
        """The same measurements seen from robot ``robot_j``."""
        return RangeSet(self.robot_j, self.robot_i, self.timestamp, self.ranges.T.copy(), self.mask.T.copy())

    def check_layouts(self, layout_i: NodeLayout, layout_j: NodeLayout) -> None:
        if self.shape != (len(layout_i), len(layout_j)):
            raise ValueError(
                f"range block {self.shape} does not match layouts ({len(layout_i)}, {len(layout_j)})"
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RangeSet):
            return NotImplemented
        return (
            self.robot_i == other.robot_i
            and self.robot_j == other.robot_j
            and self.timestamp == other.timestamp
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.ranges[self.mask], other.ranges[other.mask])
        )


@dataclass(frozen=True)
class RangeNoiseModel:
    """Gaussian noise, occasional positive NLOS bias, and random dropouts."""

    sigma_r: float = 0.1
    nlos_probability: float = 0.05
    nlos_bias_max: float = 0.5
    dropout_probability: float = 0.02

    def __post_init__(self) -> None:
        if self.sigma_r < 0 or self.nlos_bias_max < 0:
            raise ValueError("sigma_r and nlos_bias_max must be >= 0")
        for name in ("nlos_probability", "dropout_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")

    @classmethod
    def noiseless(cls) -> RangeNoiseModel:
        return cls(0.0, 0.0, 0.0, 0.0)


def node_world_position(pose: Pose2D, offset: Sequence[float]) -> np.ndarray:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ox, oy = float(offset[0]), float(offset[1])
    return np.array([pose.x + c * ox - s * oy, pose.y + s * ox + c * oy])


def predicted_range(rel_pose: Pose2D, offset_i: Sequence[float], offset_j: Sequence[float]) -> float:
    """Distance from node ``offset_i`` on robot i (at the origin) to node ``offset_j`` on robot j."""
    pj = node_world_position(rel_pose, offset_j)
    return float(math.hypot(pj[0] - offset_i[0], pj[1] - offset_i[1]))


def predicted_ranges(rel_pose: Pose2D, layout_i: NodeLayout, layout_j: NodeLayout) -> np.ndarray:
    """All K x L node-to-node distances for robot j at ``rel_pose`` in robot i's frame."""
    c, s = math.cos(rel_pose.theta), math.sin(rel_pose.theta)
    oj = layout_j.offsets
    wj = np.column_stack([rel_pose.x + c * oj[:, 0] - s * oj[:, 1], rel_pose.y + s * oj[:, 0] + c * oj[:, 1]])
    diff = wj[None, :, :] - layout_i.offsets[:, None, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def synthesize_range_set(
    pose_i: Pose2D,
    pose_j: Pose2D,
    layout_i: NodeLayout,
    layout_j: NodeLayout,
    noise: RangeNoiseModel,
    rng: np.random.Generator,
    *,
    robot_i: int = 0,
    robot_j: int = 1,
    timestamp: float = 0.0,
) -> RangeSet:
    """Noisy ranges between two robots given their world poses.

    Draw order per call is fixed (gaussian, nlos flag, nlos bias, dropout),
    so results are reproducible for a given generator state.
    """
    true = predicted_ranges(relative_pose(pose_i, pose_j), layout_i, layout_j)
    shape = true.shape
    gauss = rng.normal(0.0, 1.0, shape) * noise.sigma_r
    nlos = rng.random(shape) < noise.nlos_probability
    bias = rng.uniform(0.0, 1.0, shape) * noise.nlos_bias_max
    dropped = rng.random(shape) < noise.dropout_probability
    measured = np.maximum(true + gauss + np.where(nlos, bias, 0.0), MIN_RANGE)
    return RangeSet(robot_i, robot_j, timestamp, measured, ~dropped)
