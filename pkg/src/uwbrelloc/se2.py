"""Planar rigid-body poses.

Angles live in the half-open interval (-pi, pi]. Every constructor and
operation wraps its output into that range, so round-trips are unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

TWO_PI = 2.0 * math.pi


class InvalidMeasurement(ValueError):
    """Raised for NaN/Inf inputs that cannot be a physical measurement."""


def normalize_angle(theta: float) -> float:
    """Wrap ``theta`` into (-pi, pi]."""
    if not math.isfinite(theta):
        raise InvalidMeasurement(f"non-finite angle: {theta!r}")
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped > math.pi:
        wrapped -= TWO_PI
    elif wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def normalize_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`normalize_angle` (no finiteness check)."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.fmod(theta, TWO_PI)
    wrapped = np.where(wrapped > math.pi, wrapped - TWO_PI, wrapped)
    return np.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)


def angle_diff(a: float, b: float) -> float:
    return normalize_angle(a - b)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidMeasurement(f"non-finite position: ({self.x!r}, {self.y!r})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> Pose2D:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_vector(cls, vec: Iterable[float]) -> Pose2D:
        x, y, theta = vec
        return cls(float(x), float(y), float(theta))

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def compose(self, other: Pose2D) -> Pose2D:
        return compose(self, other)

    def inverse(self) -> Pose2D:
        return inverse(self)

    def between(self, other: Pose2D) -> Pose2D:
        return relative_pose(self, other)

    def __matmul__(self, other: Pose2D) -> Pose2D:
        return compose(self, other)


@dataclass(frozen=True)
class OdometryDelta:
    """Per-step motion expressed in the robot frame at the start of the step."""

    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise InvalidMeasurement(f"non-finite odometry: ({self.dx!r}, {self.dy!r})")
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "dtheta", normalize_angle(float(self.dtheta)))

    @classmethod
    def from_vector(cls, vec: Iterable[float]) -> OdometryDelta:
        dx, dy, dtheta = vec
        return cls(float(dx), float(dy), float(dtheta))

    @classmethod
    def from_pose(cls, pose: Pose2D) -> OdometryDelta:
        return cls(pose.x, pose.y, pose.theta)

    def as_pose(self) -> Pose2D:
        return Pose2D(self.dx, self.dy, self.dtheta)

    def as_vector(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta])


IDENTITY = Pose2D()


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Group product ``a ⊕ b``: ``b`` expressed in ``a``'s frame, lifted to ``a``'s parent."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2D(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def inverse(p: Pose2D) -> Pose2D:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2D(-(c * p.x + s * p.y), s * p.x - c * p.y, -p.theta)


def relative_pose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose of ``b`` in the frame of ``a``; ``compose(a, relative_pose(a, b)) == b``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    dx, dy = b.x - a.x, b.y - a.y
    return Pose2D(c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta)


def pose_error(estimate: Pose2D, reference: Pose2D) -> np.ndarray:
    """3-vector ``estimate ⊖ reference`` with a wrapped angle component."""
    return np.array(
        [estimate.x - reference.x, estimate.y - reference.y, angle_diff(estimate.theta, reference.theta)]
    )


# Array forms, shape (..., 3). Used by the vectorized solvers and the filter.


def compose_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 0] + c * b[..., 0] - s * b[..., 1]
    out[..., 1] = a[..., 1] + s * b[..., 0] + c * b[..., 1]
    out[..., 2] = normalize_angles(a[..., 2] + b[..., 2])
    return out


def relative_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    dx = b[..., 0] - a[..., 0]
    dy = b[..., 1] - a[..., 1]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    out[..., 2] = normalize_angles(b[..., 2] - a[..., 2])
    return out


def inverse_arrays(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    c, s = np.cos(p[..., 2]), np.sin(p[..., 2])
    out = np.empty(p.shape)
    out[..., 0] = -(c * p[..., 0] + s * p[..., 1])
    out[..., 1] = s * p[..., 0] - c * p[..., 1]
    out[..., 2] = normalize_angles(-p[..., 2])
    return out
