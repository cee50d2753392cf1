"""Sliding-window pose graph over all robots.

Each frame adds one node per robot. Consecutive nodes of a robot are tied by
odometry edges; nodes of different robots at the same frame are tied by the
relative poses recovered from ranging. Only the newest ``window_size`` frames
are kept: older frames are dropped together with their edges (no prior is
carried forward).
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
from numba import njit

from .se2 import OdometryDelta, Pose2D, compose_arrays, inverse_arrays, normalize_angles, relative_arrays
from .solver import PoseEstimate

log = logging.getLogger(__name__)

INFO_FLOOR = 1e-6


class UnobservableError(RuntimeError):
    """No inter-robot constraint links the robots in question."""


@dataclass(frozen=True)
class GraphNode:
    robot: int
    time_index: int
    pose: Pose2D


@dataclass(frozen=True)
class OdometryEdge:
    robot: int
    from_time: int
    to_time: int
    measurement: OdometryDelta
    information: np.ndarray


@dataclass(frozen=True)
class InterRobotEdge:
    """Measured pose of ``robot_j`` in ``robot_i``'s frame at one frame."""

    robot_i: int
    robot_j: int
    measurement: Pose2D
    information: np.ndarray
    time_index: int | None = None

    def __post_init__(self) -> None:
        if self.robot_i == self.robot_j:
            raise ValueError("inter-robot edge needs two distinct robots")
        info = np.asarray(self.information, dtype=float).reshape(3, 3)
        object.__setattr__(self, "information", 0.5 * (info + info.T))

    @classmethod
    def from_estimate(
        cls, robot_i: int, robot_j: int, estimate: PoseEstimate, nonconverged_scale: float = 0.01
    ) -> InterRobotEdge:
        info = estimate.information if estimate.converged else estimate.information * nonconverged_scale
        return cls(robot_i, robot_j, estimate.pose, info)


@dataclass(frozen=True)
class WindowConfig:
    window_size: int = 30
    anchor_policy: str = "first-robot-first-frame"
    odom_sigma_d: float = 0.1
    odom_sigma_theta: float = 0.05
    exact_marginals: bool = False
    max_iterations: int = 20
    cost_tolerance: float = 1e-10
    step_tolerance: float = 1e-10
    nonconverged_scale: float = 0.01

    def __post_init__(self) -> None:
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if self.anchor_policy != "first-robot-first-frame":
            raise ValueError(f"unknown anchor policy {self.anchor_policy!r}")
        if not (self.odom_sigma_d > 0 and self.odom_sigma_theta > 0):
            raise ValueError("odometry sigmas must be > 0")

    def odometry_information(self) -> np.ndarray:
        return np.diag([self.odom_sigma_d**-2, self.odom_sigma_d**-2, self.odom_sigma_theta**-2])


@dataclass
class _Frame:
    time_index: int
    poses: np.ndarray  # (R, 3), row order = robot order of the window
    odometry: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    constraints: list[tuple[int, int, np.ndarray, np.ndarray]] = field(default_factory=list)
    chain_broken: set[int] = field(default_factory=set)


def _edge_terms(xa: np.ndarray, xb: np.ndarray, meas: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Errors (E, 3) and Jacobians (E, 3, 3) w.r.t. both endpoints.

    The error is ``relative_pose(a, b) - meas`` with the angle wrapped.
    """
    c, s = np.cos(xa[:, 2]), np.sin(xa[:, 2])
    dx = xb[:, 0] - xa[:, 0]
    dy = xb[:, 1] - xa[:, 1]
    err = np.empty_like(meas)
    err[:, 0] = c * dx + s * dy - meas[:, 0]
    err[:, 1] = -s * dx + c * dy - meas[:, 1]
    err[:, 2] = normalize_angles(xb[:, 2] - xa[:, 2] - meas[:, 2])
    n = xa.shape[0]
    ja = np.zeros((n, 3, 3))
    jb = np.zeros((n, 3, 3))
    ja[:, 0, 0], ja[:, 0, 1], ja[:, 0, 2] = -c, -s, -s * dx + c * dy
    ja[:, 1, 0], ja[:, 1, 1], ja[:, 1, 2] = s, -c, -c * dx - s * dy
    ja[:, 2, 2] = -1.0
    jb[:, 0, 0], jb[:, 0, 1] = c, s
    jb[:, 1, 0], jb[:, 1, 1] = -s, c
    jb[:, 2, 2] = 1.0
    return err, ja, jb


@njit(cache=True)
def _wrap(t: float) -> float:
    r = np.fmod(t, 2.0 * math.pi)
    if r > math.pi:
        r -= 2.0 * math.pi
    elif r <= -math.pi:
        r += 2.0 * math.pi
    return r


@njit(cache=True)
def _graph_cost(x, a, b, meas, info):
    total = 0.0
    e = np.empty(3)
    for k in range(a.shape[0]):
        pa, pb = x[a[k]], x[b[k]]
        c, s = math.cos(pa[2]), math.sin(pa[2])
        dx, dy = pb[0] - pa[0], pb[1] - pa[1]
        e[0] = c * dx + s * dy - meas[k, 0]
        e[1] = -s * dx + c * dy - meas[k, 1]
        e[2] = _wrap(pb[2] - pa[2] - meas[k, 2])
        for i in range(3):
            for j in range(3):
                total += e[i] * info[k, i, j] * e[j]
    return total


@njit(cache=True)
def _banded_system(x, a, b, meas, info, u, skip):
    """Gauss-Newton system in LAPACK upper banded storage, first ``skip`` variables removed."""
    m = 3 * x.shape[0] - skip
    ab = np.zeros((u + 1, m))
    g = np.zeros(m)
    ja = np.zeros((3, 3))
    jb = np.zeros((3, 3))
    e = np.empty(3)
    for k in range(a.shape[0]):
        pa, pb = x[a[k]], x[b[k]]
        c, s = math.cos(pa[2]), math.sin(pa[2])
        dx, dy = pb[0] - pa[0], pb[1] - pa[1]
        e[0] = c * dx + s * dy - meas[k, 0]
        e[1] = -s * dx + c * dy - meas[k, 1]
        e[2] = _wrap(pb[2] - pa[2] - meas[k, 2])
        ja[0, 0], ja[0, 1], ja[0, 2] = -c, -s, -s * dx + c * dy
        ja[1, 0], ja[1, 1], ja[1, 2] = s, -c, -c * dx - s * dy
        ja[2, 2] = -1.0
        jb[0, 0], jb[0, 1] = c, s
        jb[1, 0], jb[1, 1] = -s, c
        jb[2, 2] = 1.0
        om = info[k]
        nodes = (a[k], b[k])
        for p in range(2):
            jp = ja if p == 0 else jb
            rp = 3 * nodes[p] - skip
            oe = om @ e
            for r in range(3):
                if rp + r >= 0:
                    acc = 0.0
                    for t in range(3):
                        acc += jp[t, r] * oe[t]
                    g[rp + r] += acc
            for q in range(2):
                ojq = om @ (ja if q == 0 else jb)
                rq = 3 * nodes[q] - skip
                for r in range(3):
                    i = rp + r
                    if i < 0:
                        continue
                    for cc in range(3):
                        j = rq + cc
                        if j < i:
                            continue
                        acc = 0.0
                        for t in range(3):
                            acc += jp[t, r] * ojq[t, cc]
                        ab[u + i - j, j] += acc
    return ab, g


def _floor_information(info: np.ndarray, floor: float = INFO_FLOOR) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (info + info.T))
    return (vecs * np.maximum(vals, floor)) @ vecs.T


class SlidingWindowOptimizer:
    """Pose graph over the newest ``window_size`` frames of every robot.

    Not thread-safe: ``push_frame`` and ``optimize`` must be serialized.
    """

    def __init__(
        self,
        robots: Sequence[int],
        config: WindowConfig | None = None,
        on_evict: Callable[[list[GraphNode]], None] | None = None,
    ):
        if len(robots) < 1 or len(set(robots)) != len(robots):
            raise ValueError("robots must be a non-empty list of distinct ids")
        self.robots = list(robots)
        self.config = config or WindowConfig()
        self._index = {r: k for k, r in enumerate(self.robots)}
        self._frames: deque[_Frame] = deque()
        self._next_time = 0
        self._odom_info = self.config.odometry_information()
        self._ever_constrained: set[int] = {self.robots[0]}
        self.on_evict = on_evict
        self.last_objective: tuple[float, float] | None = None
        self.unobservable: set[tuple[int, int]] = set()

    # -- construction -------------------------------------------------

    def __len__(self) -> int:
        return len(self._frames)

    @property
    def num_nodes(self) -> int:
        return len(self._frames) * len(self.robots)

    @property
    def newest_time(self) -> int:
        if not self._frames:
            raise IndexError("window is empty")
        return self._frames[-1].time_index

    def _robot_index(self, robot: int) -> int:
        try:
            return self._index[robot]
        except KeyError:
            raise ValueError(f"unknown robot {robot!r}") from None

    def push_frame(
        self,
        odometry: Mapping[int, OdometryDelta | None],
        pose_constraints: Iterable[InterRobotEdge] = (),
    ) -> int:
        """Append one frame; returns its time index.

        A robot missing from ``odometry`` (or mapped to None) keeps its last
        pose and gets no odometry edge for this step.
        """
        for robot in odometry:
            self._robot_index(robot)
        constraints = []
        for edge in pose_constraints:
            ki, kj = self._robot_index(edge.robot_i), self._robot_index(edge.robot_j)
            constraints.append((ki, kj, edge.measurement.as_vector(), np.array(edge.information)))

        n = len(self.robots)
        frame = _Frame(self._next_time, np.zeros((n, 3)))
        if self._frames:
            prev = self._frames[-1].poses
            for r, k in self._index.items():
                delta = odometry.get(r)
                if delta is None:
                    frame.poses[k] = prev[k]
                    frame.chain_broken.add(r)
                    log.debug("robot %s: no odometry at frame %d, chain broken", r, frame.time_index)
                else:
                    vec = delta.as_vector()
                    frame.poses[k] = compose_arrays(prev[k], vec)
                    frame.odometry[k] = (vec, self._odom_info)
        frame.constraints = constraints
        self._seed_from_constraints(frame)
        self._frames.append(frame)
        self._next_time += 1

        while len(self._frames) > self.config.window_size:
            old = self._frames.popleft()
            frozen = [GraphNode(r, old.time_index, Pose2D.from_vector(old.poses[k])) for r, k in self._index.items()]
            log.debug("evicted frame %d", old.time_index)
            if self.on_evict is not None:
                self.on_evict(frozen)
        return frame.time_index

    def _seed_from_constraints(self, frame: _Frame) -> None:
        """Place robots that have never been constrained using this frame's edges."""
        if len(self._ever_constrained) == len(self.robots):
            return
        changed = True
        while changed:
            changed = False
            for ki, kj, meas, info in frame.constraints:
                if not np.any(info):
                    continue
                ri, rj = self.robots[ki], self.robots[kj]
                if ri in self._ever_constrained and rj not in self._ever_constrained:
                    target = compose_arrays(frame.poses[ki], meas)
                    self._rigidly_move(kj, frame, target)
                    self._ever_constrained.add(rj)
                    changed = True
                elif rj in self._ever_constrained and ri not in self._ever_constrained:
                    target = compose_arrays(frame.poses[kj], inverse_arrays(meas))
                    self._rigidly_move(ki, frame, target)
                    self._ever_constrained.add(ri)
                    changed = True

    def _rigidly_move(self, k: int, frame: _Frame, target: np.ndarray) -> None:
        # correction T with T ⊕ current = target, applied to the whole in-window chain
        current = frame.poses[k]
        corr = compose_arrays(target, inverse_arrays(current))
        frame.poses[k] = target
        for old in self._frames:
            old.poses[k] = compose_arrays(corr, old.poses[k])

    # -- access -------------------------------------------------------

    def nodes(self) -> list[GraphNode]:
        return [
            GraphNode(r, f.time_index, Pose2D.from_vector(f.poses[k])) for f in self._frames for r, k in self._index.items()
        ]

    def pose(self, robot: int, time_index: int | None = None) -> Pose2D:
        k = self._robot_index(robot)
        frame = self._frame(time_index)
        return Pose2D.from_vector(frame.poses[k])

    def set_pose(self, robot: int, time_index: int, pose: Pose2D) -> None:
        self._frame(time_index).poses[self._robot_index(robot)] = pose.as_vector()

    def trajectory(self, robot: int) -> np.ndarray:
        k = self._robot_index(robot)
        return np.array([f.poses[k] for f in self._frames])

    def chain_broken(self, robot: int, time_index: int) -> bool:
        return robot in self._frame(time_index).chain_broken

    def odometry_edges(self) -> list[OdometryEdge]:
        out = []
        for f in list(self._frames)[1:]:
            for k, (meas, info) in f.odometry.items():
                out.append(OdometryEdge(self.robots[k], f.time_index - 1, f.time_index, OdometryDelta.from_vector(meas), info))
        return out

    def inter_robot_edges(self) -> list[InterRobotEdge]:
        return [
            InterRobotEdge(self.robots[ki], self.robots[kj], Pose2D.from_vector(meas), info, f.time_index)
            for f in self._frames
            for ki, kj, meas, info in f.constraints
        ]

    def _frame(self, time_index: int | None) -> _Frame:
        if not self._frames:
            raise IndexError("window is empty")
        if time_index is None:
            return self._frames[-1]
        offset = time_index - self._frames[0].time_index
        if not 0 <= offset < len(self._frames):
            raise IndexError(f"time index {time_index} is outside the window")
        return self._frames[offset]

    # -- optimization -------------------------------------------------

    def _edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, list[tuple[int, int, int]]]:
        n = len(self.robots)
        a, b, meas, info = [], [], [], []
        inter = []  # (edge row, ki, kj) for newest-frame inter-robot edges
        last = len(self._frames) - 1
        for f, frame in enumerate(self._frames):
            if f > 0:
                for k, (m, om) in frame.odometry.items():
                    a.append((f - 1) * n + k)
                    b.append(f * n + k)
                    meas.append(m)
                    info.append(om)
            for ki, kj, m, om in frame.constraints:
                if f == last:
                    inter.append((len(a), ki, kj))
                a.append(f * n + ki)
                b.append(f * n + kj)
                meas.append(m)
                info.append(om)
        if not a:
            return np.zeros(0, int), np.zeros(0, int), np.zeros((0, 3)), np.zeros((0, 3, 3)), inter
        return np.array(a), np.array(b), np.array(meas, dtype=float), np.array(info, dtype=float), inter

    def _stacked_poses(self) -> np.ndarray:
        return np.concatenate([f.poses for f in self._frames], axis=0)

    def objective(self) -> float:
        """Current value of the windowed objective (sum of weighted squared edge errors)."""
        a, b, meas, info, _ = self._edges()
        if a.size == 0:
            return 0.0
        return float(_graph_cost(self._stacked_poses(), a, b, meas, info))

    def _normal_equations(self, x, a, b, meas, info):
        num = x.shape[0]
        err, ja, jb = _edge_terms(x[a], x[b], meas)
        oja = np.einsum("eij,ejk->eik", info, ja)
        ojb = np.einsum("eij,ejk->eik", info, jb)
        h = np.zeros((num, num, 3, 3))
        np.add.at(h, (a, a), np.einsum("eji,ejk->eik", ja, oja))
        np.add.at(h, (a, b), np.einsum("eji,ejk->eik", ja, ojb))
        np.add.at(h, (b, a), np.einsum("eji,ejk->eik", jb, oja))
        np.add.at(h, (b, b), np.einsum("eji,ejk->eik", jb, ojb))
        g = np.zeros((num, 3))
        oe = np.einsum("eij,ej->ei", info, err)
        np.add.at(g, a, np.einsum("eji,ej->ei", ja, oe))
        np.add.at(g, b, np.einsum("eji,ej->ei", jb, oe))
        hess = h.transpose(0, 2, 1, 3).reshape(3 * num, 3 * num)
        return hess, g.reshape(-1)

    def optimize(self) -> dict[tuple[int, int], PoseEstimate]:
        """Minimize the windowed objective; return newest-frame relative poses.

        The first robot's oldest in-window node is held fixed. Keys are
        ordered pairs ``(i, j)`` with i before j in robot order, restricted
        to robots linked by inter-robot constraints.
        """
        a, b, meas, info, newest_inter = self._edges()
        if a.size == 0:
            raise UnobservableError("graph has no edges")
        x = self._stacked_poses()
        num = x.shape[0]
        free = np.ones(3 * num, dtype=bool)
        free[0:3] = False  # anchor: robot 0, oldest frame
        u = 3 * int(np.max(np.abs(a - b))) + 2

        cost = _graph_cost(x, a, b, meas, info)
        start_cost = cost
        damping = 0.0
        for _ in range(self.config.max_iterations):
            if cost == 0.0:
                break
            ab, grad = _banded_system(x, a, b, meas, info, u, 3)
            diag = np.maximum(ab[u], 1e-9)
            stop = False
            while True:
                lhs = ab.copy()
                lhs[u] += (damping if damping > 0.0 else 1e-12) * diag
                try:
                    step = scipy.linalg.solveh_banded(lhs, -grad, check_finite=False)
                except np.linalg.LinAlgError:
                    damping = max(damping * 10.0, 1e-6)
                    continue
                if np.linalg.norm(step) < self.config.step_tolerance:
                    stop = True
                    break
                x_new = x.copy()
                x_new.reshape(-1)[3:] += step
                x_new[:, 2] = normalize_angles(x_new[:, 2])
                cost_new = _graph_cost(x_new, a, b, meas, info)
                if cost_new <= cost:
                    decrease = (cost - cost_new) / max(cost, 1e-300)
                    x, cost = x_new, cost_new
                    damping = damping / 10.0 if damping > 1e-9 else 0.0
                    stop = decrease < self.config.cost_tolerance
                    break
                damping = max(damping * 10.0, 1e-6)
                if damping > 1e12:
                    stop = True
                    break
            if stop:
                break

        n = len(self.robots)
        for f, frame in enumerate(self._frames):
            frame.poses[:] = x[f * n : (f + 1) * n]
        self.last_objective = (start_cost, cost)

        hess = self._normal_equations(x, a, b, meas, info)[0] if self.config.exact_marginals else None
        return self._report(x, a, b, info, newest_inter, free, hess)

    def _components(self) -> list[int]:
        """Connected-component label per robot index, via inter-robot edges in the window."""
        n = len(self.robots)
        parent = list(range(n))

        def find(k: int) -> int:
            while parent[k] != k:
                parent[k] = parent[parent[k]]
                k = parent[k]
            return k

        for frame in self._frames:
            for ki, kj, _, om in frame.constraints:
                if np.any(om):
                    parent[find(ki)] = find(kj)
        return [find(k) for k in range(n)]

    def _report(self, x, a, b, info, newest_inter, free, hess) -> dict[tuple[int, int], PoseEstimate]:
        n = len(self.robots)
        base = (len(self._frames) - 1) * n
        comp = self._components()
        out: dict[tuple[int, int], PoseEstimate] = {}
        self.unobservable = set()
        cov = None
        if self.config.exact_marginals and hess is not None:
            cov = self._marginal_covariance(hess, free)
        for ki in range(n):
            for kj in range(ki + 1, n):
                pair = (self.robots[ki], self.robots[kj])
                if comp[ki] != comp[kj]:
                    self.unobservable.add(pair)
                    continue
                xi, xj = x[base + ki], x[base + kj]
                rel = relative_arrays(xi, xj)
                if cov is not None:
                    om = self._exact_information(cov, base + ki, base + kj, xi, xj)
                else:
                    om = self._incident_information(newest_inter, a, b, info, base + ki, base + kj, ki, kj)
                out[pair] = PoseEstimate(Pose2D.from_vector(rel), om, converged=True)
        if not out and n > 1:
            raise UnobservableError("no inter-robot constraints link any pair of robots")
        return out

    def _incident_information(self, newest_inter, a, b, info, ni, nj, ki, kj) -> np.ndarray:
        total = np.zeros((3, 3))
        for row, ei, ej in newest_inter:
            if {ei, ej} == {ki, kj}:
                total += info[row]
        # odometry edges arriving at either newest node
        n = len(self.robots)
        odo = ((b == ni) | (b == nj)) & (a // n != b // n)
        total += info[odo].sum(axis=0)
        return _floor_information(total)

    def _marginal_covariance(self, hess: np.ndarray, free: np.ndarray) -> np.ndarray:
        full = np.zeros_like(hess)
        hf = hess[np.ix_(free, free)]
        try:
            inv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(hf), np.eye(hf.shape[0]))
        except np.linalg.LinAlgError:
            inv = np.linalg.pinv(hf)
        full[np.ix_(free, free)] = inv
        return full

    @staticmethod
    def _exact_information(cov, ni, nj, xi, xj) -> np.ndarray:
        idx = np.r_[3 * ni : 3 * ni + 3, 3 * nj : 3 * nj + 3]
        sigma = cov[np.ix_(idx, idx)]
        _, ja, jb = _edge_terms(xi[None], xj[None], np.zeros((1, 3)))
        jac = np.concatenate([ja[0], jb[0]], axis=1)
        rel_cov = jac @ sigma @ jac.T
        vals, vecs = np.linalg.eigh(0.5 * (rel_cov + rel_cov.T))
        vals = np.maximum(vals, 1.0 / 1e12)
        return _floor_information((vecs / vals) @ vecs.T)
