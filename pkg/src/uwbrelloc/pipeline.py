"""Per-tick relative localization: range solve, windowed refinement, particle filter.

Every tick runs, in order: a relative-pose solve for each pair with ranges,
a sliding-window pose-graph update over all robots, and a particle filter
cycle per robot. The estimator variants report the output of different
stages of that one chain, so a single pass can produce all of them.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .metrics import MetricsReport, compute_metrics
from .particle_filter import FilterParams, MultiRobotTracker
from .ranging import NodeLayout
from .se2 import OdometryDelta, Pose2D, compose, compose_arrays, inverse, relative_arrays, relative_pose
from .simulator import Dataset
from .solver import PoseEstimate, SolverConfig, SolverError, solve_relative_pose
from .window import InterRobotEdge, SlidingWindowOptimizer, UnobservableError, WindowConfig

log = logging.getLogger(__name__)

ESTIMATORS = ("odometry_only", "ranging_only", "window_optimized", "pf_ranging", "pf_optimized")
STAGES = ("ranging", "window", "pf_optimized", "pf_ranging")

Pair = tuple[int, int]


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineParams:
    solver: SolverConfig = SolverConfig()
    window: WindowConfig = WindowConfig()
    filter: FilterParams = FilterParams()
    seed: int = 0
    burn_in: int | None = None  # default: 2 * window_size

    @property
    def burn_in_ticks(self) -> int:
        return 2 * self.window.window_size if self.burn_in is None else self.burn_in


@dataclass
class PipelineResult:
    times: np.ndarray
    estimates: dict[str, dict[Pair, np.ndarray]]
    flags: dict[str, np.ndarray]
    timings_ms: dict[str, np.ndarray]
    reports: dict[str, MetricsReport] = field(default_factory=dict)

    def report(self, estimator: str) -> MetricsReport:
        return self.reports[estimator]


def _needed_stages(estimators: Iterable[str]) -> set[str]:
    needs = {
        "odometry_only": set(),
        "ranging_only": {"ranging"},
        "window_optimized": {"ranging", "window"},
        "pf_optimized": {"ranging", "window", "pf_optimized"},
        "pf_ranging": {"ranging", "pf_ranging"},
    }
    out: set[str] = set()
    for e in estimators:
        if e not in needs:
            raise PipelineError(f"unknown estimator {e!r}; choose from {ESTIMATORS}")
        out |= needs[e]
    return out


def check_alignment(dataset: Dataset) -> None:
    n = len(dataset.times)
    if n == 0:
        raise PipelineError("dataset is empty")
    if np.any(np.diff(dataset.times) < 0):
        bad = int(np.argmax(np.diff(dataset.times) < 0)) + 1
        raise PipelineError(f"stream misalignment at tick {bad}: non-monotone timestamps")
    for r in dataset.robots:
        for name, stream in (("ground truth", dataset.ground_truth), ("odometry", dataset.odometry)):
            if r not in stream or len(stream[r]) != n:
                got = len(stream.get(r, ()))
                raise PipelineError(f"stream misalignment at tick {min(got, n)}: {name} for robot {r} has {got} of {n} ticks")
    if len(dataset.ranges) != n:
        raise PipelineError(f"stream misalignment at tick {min(len(dataset.ranges), n)}: range stream length {len(dataset.ranges)} != {n}")


def _bridge(prev: np.ndarray, odo_i: np.ndarray, odo_j: np.ndarray) -> np.ndarray:
    """Carry a relative pose forward by both robots' odometry."""
    if not np.all(np.isfinite(prev)):
        return prev
    p = Pose2D.from_vector(prev)
    moved = compose(compose(inverse(Pose2D.from_vector(odo_i)), p), Pose2D.from_vector(odo_j))
    return moved.as_vector()


def run_pipeline(
    dataset: Dataset,
    layouts: Mapping[int, NodeLayout],
    params: PipelineParams | None = None,
    estimators: Iterable[str] = ("pf_optimized",),
) -> PipelineResult:
    """Run the chain over a tick-aligned dataset and score the requested estimators."""
    params = params or PipelineParams()
    estimators = tuple(estimators)
    stages = _needed_stages(estimators)
    check_alignment(dataset)
    robots = list(dataset.robots)
    for r in robots:
        if r not in layouts:
            raise PipelineError(f"no node layout for robot {r}")
    pairs = dataset.pairs
    n = len(dataset.times)

    est = {e: {p: np.full((n, 3), np.nan) for p in pairs} for e in estimators}
    flags = {e: np.zeros(n, dtype=bool) for e in estimators}
    timings = {s: np.zeros(n) for s in STAGES if s in stages}

    window = SlidingWindowOptimizer(robots, params.window) if "window" in stages else None
    seeds = np.random.SeedSequence(params.seed).spawn(2)
    pf = MultiRobotTracker(robots, params.filter, seed=int(seeds[0].generate_state(1)[0])) if "pf_optimized" in stages else None
    pf_r = MultiRobotTracker(robots, params.filter, seed=int(seeds[1].generate_state(1)[0])) if "pf_ranging" in stages else None

    dead = {r: dataset.ground_truth[r][0].copy() for r in robots}

    for k in range(n):
        odo_vec = {r: dataset.odometry[r][k] for r in robots}
        odo = {r: OdometryDelta.from_vector(v) for r, v in odo_vec.items()}

        if "odometry_only" in est:
            if k > 0:
                for r in robots:
                    dead[r] = compose_arrays(dead[r], odo_vec[r])
            for i, j in pairs:
                est["odometry_only"][(i, j)][k] = relative_arrays(dead[i], dead[j])

        tbar: dict[Pair, PoseEstimate] = {}
        if "ranging" in stages:
            t0 = time.perf_counter()
            for pair in pairs:
                rs = dataset.ranges[k].get(pair)
                if rs is None:
                    continue
                try:
                    tbar[pair] = solve_relative_pose(rs, layouts[pair[0]], layouts[pair[1]], config=params.solver)
                except SolverError as exc:
                    log.debug("tick %d pair %s: %s", k, pair, exc)
            timings["ranging"][k] = (time.perf_counter() - t0) * 1e3
            if "ranging_only" in est:
                _emit(est["ranging_only"], flags["ranging_only"], k, pairs, {p: e.pose for p, e in tbar.items()}, odo_vec)

        that: dict[Pair, PoseEstimate] = {}
        if window is not None:
            t0 = time.perf_counter()
            edges = [
                InterRobotEdge.from_estimate(i, j, e, params.window.nonconverged_scale) for (i, j), e in tbar.items()
            ]
            window.push_frame(odo, edges)
            try:
                that = window.optimize()
            except UnobservableError as exc:
                log.debug("tick %d: %s", k, exc)
            timings["window"][k] = (time.perf_counter() - t0) * 1e3
            if "window_optimized" in est:
                _emit(est["window_optimized"], flags["window_optimized"], k, pairs, {p: e.pose for p, e in that.items()}, odo_vec)

        if pf is not None:
            t0 = time.perf_counter()
            poses = pf.step_relative(odo, that)
            timings["pf_optimized"][k] = (time.perf_counter() - t0) * 1e3
            _emit(est["pf_optimized"], flags["pf_optimized"], k, pairs, _pairwise(poses, pairs), odo_vec)

        if pf_r is not None:
            t0 = time.perf_counter()
            poses = pf_r.step_ranges(odo, dataset.ranges[k], layouts, seed_observations=tbar)
            timings["pf_ranging"][k] = (time.perf_counter() - t0) * 1e3
            _emit(est["pf_ranging"], flags["pf_ranging"], k, pairs, _pairwise(poses, pairs), odo_vec)

    result = PipelineResult(np.asarray(dataset.times), est, flags, timings)
    truth = {p: dataset.true_relative(*p) for p in pairs}
    timing_means = {s: float(v.mean()) for s, v in timings.items()}
    for e in estimators:
        report = compute_metrics(est[e], truth, burn_in=params.burn_in_ticks)
        report.estimator = e
        report.flagged_ticks = int(flags[e].sum())
        used = _needed_stages([e])
        report.timing_ms = {s: timing_means[s] for s in STAGES if s in used}
        report.timing_ms["total"] = float(sum(report.timing_ms.values()))
        result.reports[e] = report
    return result


def _pairwise(poses: Mapping[int, Pose2D], pairs: list[Pair]) -> dict[Pair, Pose2D]:
    return {(i, j): relative_pose(poses[i], poses[j]) for i, j in pairs if i in poses and j in poses}


def _emit(out: dict[Pair, np.ndarray], flags: np.ndarray, k: int, pairs, values: Mapping[Pair, Pose2D], odo_vec) -> None:
    for pair in pairs:
        if pair in values:
            out[pair][k] = values[pair].as_vector()
        else:
            flags[k] = True
            if k > 0:
                out[pair][k] = _bridge(out[pair][k - 1], odo_vec[pair[0]], odo_vec[pair[1]])
