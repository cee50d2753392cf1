"""Relative pose of one robot in another's frame from node-to-node ranges.

The problem is a small nonlinear least-squares fit over (x, y, theta). A
square node layout makes the cost landscape multi-modal, so when no initial
guess is given a coarse sweep of seeds is scored and the best few are refined
with Levenberg-Marquardt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .ranging import NodeLayout, RangeSet
from .se2 import Pose2D

DEGENERATE_RANGE = 1e-6
SIGMA_FLOOR = 0.01
NUM_SEED_BEARINGS = 8
NUM_SEED_HEADINGS = 4


class SolverError(ValueError):
    pass


class NoMeasurementsError(SolverError):
    pass


class UnderdeterminedError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    cost_tolerance: float = 1e-9
    step_tolerance: float = 1e-10
    initial_damping: float = 1e-3
    num_restarts: int = 4

    def __post_init__(self) -> None:
        for name in ("max_iterations", "cost_tolerance", "step_tolerance", "initial_damping", "num_restarts"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolverConfig.{name} must be positive")


@dataclass
class PoseEstimate:
    """A relative pose with a 3x3 information matrix over (x, y, theta)."""

    pose: Pose2D
    information: np.ndarray
    residual_rms: float = 0.0
    converged: bool = True
    iterations: int = 0
    cost: float = 0.0
    degenerate: bool = False

    def __post_init__(self) -> None:
        info = np.asarray(self.information, dtype=float).reshape(3, 3)
        self.information = 0.5 * (info + info.T)


@dataclass
class _Problem:
    """Valid measurements flattened into index arrays."""

    ci: np.ndarray  # (n, 2) node offsets on robot i
    cj: np.ndarray  # (n, 2) node offsets on robot j
    r: np.ndarray  # (n,)
    pairs: list[tuple[int, int]] = field(default_factory=list)

    @classmethod
    def build(cls, ranges: RangeSet, layout_i: NodeLayout, layout_j: NodeLayout) -> _Problem:
        ranges.check_layouts(layout_i, layout_j)
        k, l = np.nonzero(ranges.mask)
        if k.size == 0:
            raise NoMeasurementsError("no measurements")
        return cls(layout_i.offsets[k], layout_j.offsets[l], ranges.ranges[k, l], list(zip(k.tolist(), l.tolist())))

    def __len__(self) -> int:
        return self.r.size

    def node_positions(self, x: np.ndarray) -> np.ndarray:
        """World positions of robot j's nodes; ``x`` has shape (..., 3)."""
        c = np.cos(x[..., 2])[..., None]
        s = np.sin(x[..., 2])[..., None]
        px = x[..., 0][..., None] + c * self.cj[:, 0] - s * self.cj[:, 1]
        py = x[..., 1][..., None] + s * self.cj[:, 0] + c * self.cj[:, 1]
        return np.stack([px, py], axis=-1)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        d = self.node_positions(x) - self.ci
        return self.r - np.hypot(d[..., 0], d[..., 1])

    def costs(self, x: np.ndarray) -> np.ndarray:
        res = self.residuals(x)
        return np.einsum("...i,...i->...", res, res)

    def jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Residual Jacobian (..., n, 3) and a mask of coincident-node rows."""
        c = np.cos(x[..., 2])[..., None]
        s = np.sin(x[..., 2])[..., None]
        diff = self.node_positions(x) - self.ci
        dist = np.hypot(diff[..., 0], diff[..., 1])
        bad = dist < DEGENERATE_RANGE
        u = diff / np.where(bad, 1.0, dist)[..., None]
        # derivative of R(theta) @ cj
        drx = -s * self.cj[:, 0] - c * self.cj[:, 1]
        dry = c * self.cj[:, 0] - s * self.cj[:, 1]
        jac = -np.stack([u[..., 0], u[..., 1], u[..., 0] * drx + u[..., 1] * dry], axis=-1)
        jac[bad] = 0.0
        return jac, bad


def range_residuals(
    pose: Pose2D, ranges: RangeSet, layout_i: NodeLayout, layout_j: NodeLayout
) -> np.ndarray:
    """Measured minus predicted range for every valid (k, l) entry, row-major order."""
    return _Problem.build(ranges, layout_i, layout_j).residuals(pose.as_vector())


def residual_jacobian(
    pose: Pose2D, ranges: RangeSet, layout_i: NodeLayout, layout_j: NodeLayout
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobian of :func:`range_residuals` w.r.t. (x, y, theta).

    Returns ``(jacobian, degenerate_rows)``. Rows whose predicted range is
    below 1e-6 m have an undefined gradient; they are zeroed and flagged.
    """
    return _Problem.build(ranges, layout_i, layout_j).jacobian(pose.as_vector())


@numba.njit(cache=True)
def _residuals_into(ci, cj, r, x, y, th, out):
    c, s = math.cos(th), math.sin(th)
    total = 0.0
    for n in range(r.size):
        dx = x + c * cj[n, 0] - s * cj[n, 1] - ci[n, 0]
        dy = y + s * cj[n, 0] + c * cj[n, 1] - ci[n, 1]
        e = r[n] - math.sqrt(dx * dx + dy * dy)
        out[n] = e
        total += e * e
    return total


@numba.njit(cache=True)
def _lm_kernel(ci, cj, r, x0, max_iterations, cost_tolerance, step_tolerance, initial_damping):
    nb = x0.shape[0]
    n = r.size
    xs = x0.copy()
    costs = np.empty(nb)
    converged = np.zeros(nb, dtype=np.bool_)
    iterations = np.zeros(nb, dtype=np.int64)
    res = np.empty(n)
    res_new = np.empty(n)
    a = np.empty((3, 3))
    g = np.empty(3)
    for b in range(nb):
        x, y, th = xs[b, 0], xs[b, 1], xs[b, 2]
        cost = _residuals_into(ci, cj, r, x, y, th, res)
        damping = initial_damping
        done = cost == 0.0
        it = 0
        while not done and it < max_iterations:
            it += 1
            c, s = math.cos(th), math.sin(th)
            a[:, :] = 0.0
            g[:] = 0.0
            for k in range(n):
                dx = x + c * cj[k, 0] - s * cj[k, 1] - ci[k, 0]
                dy = y + s * cj[k, 0] + c * cj[k, 1] - ci[k, 1]
                d = math.sqrt(dx * dx + dy * dy)
                if d < DEGENERATE_RANGE:
                    continue
                ux, uy = dx / d, dy / d
                j0 = -ux
                j1 = -uy
                j2 = -(ux * (-s * cj[k, 0] - c * cj[k, 1]) + uy * (c * cj[k, 0] - s * cj[k, 1]))
                a[0, 0] += j0 * j0
                a[0, 1] += j0 * j1
                a[0, 2] += j0 * j2
                a[1, 1] += j1 * j1
                a[1, 2] += j1 * j2
                a[2, 2] += j2 * j2
                g[0] += j0 * res[k]
                g[1] += j1 * res[k]
                g[2] += j2 * res[k]
            a[1, 0] = a[0, 1]
            a[2, 0] = a[0, 2]
            a[2, 1] = a[1, 2]
            d0 = max(a[0, 0], 1e-12)
            d1 = max(a[1, 1], 1e-12)
            d2 = max(a[2, 2], 1e-12)
            lhs = a.copy()
            lhs[0, 0] += damping * d0
            lhs[1, 1] += damping * d1
            lhs[2, 2] += damping * d2
            step = np.linalg.solve(lhs, -g)
            if math.sqrt(step[0] ** 2 + step[1] ** 2 + step[2] ** 2) < step_tolerance:
                converged[b] = True
                break
            cost_new = _residuals_into(ci, cj, r, x + step[0], y + step[1], th + step[2], res_new)
            if cost_new <= cost:
                decrease = (cost - cost_new) / max(cost, 1e-300)
                x += step[0]
                y += step[1]
                th += step[2]
                res[:] = res_new
                cost = cost_new
                damping = max(damping / 10.0, 1e-15)
                if decrease < cost_tolerance or cost == 0.0:
                    done = True
            else:
                damping *= 10.0
                if damping > 1e16:
                    done = True
        if done:
            converged[b] = True
        xs[b, 0], xs[b, 1], xs[b, 2] = x, y, th
        costs[b] = cost
        iterations[b] = it
    return xs, costs, converged, iterations


def _levenberg_marquardt(
    problem: _Problem, x0: np.ndarray, config: SolverConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Independent LM runs from each row of ``x0`` (B, 3).

    Marquardt-scaled damping: x10 on a rejected step, /10 on an accepted one.
    Returns final states, costs, converged flags and per-run iteration counts.
    """
    return _lm_kernel(
        np.ascontiguousarray(problem.ci),
        np.ascontiguousarray(problem.cj),
        np.ascontiguousarray(problem.r),
        np.ascontiguousarray(x0, dtype=float),
        config.max_iterations,
        config.cost_tolerance,
        config.step_tolerance,
        config.initial_damping,
    )


def seed_poses(ranges: RangeSet, layout_i: NodeLayout, layout_j: NodeLayout) -> np.ndarray:
    """The 8 bearings x 4 headings sweep at the mean measured range, shape (32, 3)."""
    valid = ranges.ranges[ranges.mask]
    radius = float(valid.mean())
    bearings = np.arange(NUM_SEED_BEARINGS) * (2 * math.pi / NUM_SEED_BEARINGS)
    headings = np.arange(NUM_SEED_HEADINGS) * (2 * math.pi / NUM_SEED_HEADINGS)
    b, h = np.meshgrid(bearings, headings, indexing="ij")
    b, h = b.ravel(), h.ravel()
    return np.column_stack([radius * np.cos(b), radius * np.sin(b), h])


def _information(problem: _Problem, x: np.ndarray, cost: float) -> tuple[np.ndarray, float, bool]:
    jac, bad = problem.jacobian(x)
    rms = math.sqrt(cost / len(problem))
    sigma2 = max(rms * rms, SIGMA_FLOOR**2)
    return jac.T @ jac / sigma2, rms, bool(bad.any())


def solve_relative_pose(
    ranges: RangeSet,
    layout_i: NodeLayout,
    layout_j: NodeLayout,
    init: Pose2D | None = None,
    config: SolverConfig | None = None,
) -> PoseEstimate:
    """Least-squares pose of robot j in robot i's frame.

    With ``init`` the fit starts there; otherwise the best ``num_restarts``
    seeds of :func:`seed_poses` are refined and the lowest-cost converged
    result wins (lowest-cost overall if none converged).
    """
    config = config or SolverConfig()
    problem = _Problem.build(ranges, layout_i, layout_j)
    if len(problem) < 3:
        raise UnderdeterminedError(f"underdetermined: {len(problem)} valid ranges, need at least 3")

    if init is not None:
        starts = init.as_vector()[None, :]
    else:
        seeds = seed_poses(ranges, layout_i, layout_j)
        order = np.argsort(problem.costs(seeds), kind="stable")
        starts = seeds[order[: config.num_restarts]]

    xs, costs, converged_flags, iterations = _levenberg_marquardt(problem, starts, config)
    # converged runs first, then lowest cost
    pick = int(np.lexsort((costs, ~converged_flags))[0])
    x, cost, converged = xs[pick], float(costs[pick]), bool(converged_flags[pick])
    total_iterations = int(iterations.sum())
    info, rms, degenerate = _information(problem, x, cost)
    return PoseEstimate(
        pose=Pose2D.from_vector(x),
        information=info,
        residual_rms=rms,
        converged=converged,
        iterations=total_iterations,
        cost=cost,
        degenerate=degenerate,
    )
