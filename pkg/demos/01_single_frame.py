"""One UWB frame: sixteen node-to-node ranges pin down a relative pose.

Two robots each carry four UWB nodes on a 0.5 m square. We synthesize one
noisy range block, solve for the pose of robot 1 in robot 0's frame, and
look at how the answer and its information matrix change with node spacing.
"""

import math

import numpy as np

from uwbrelloc import IDENTITY, NodeLayout, Pose2D, RangeNoiseModel, solve_relative_pose, synthesize_range_set

rng = np.random.default_rng(7)
truth = Pose2D(3.0, 1.2, math.radians(40))
noise = RangeNoiseModel(sigma_r=0.1, nlos_probability=0.0, dropout_probability=0.0)

print(f"true pose of robot 1 seen from robot 0: x={truth.x:.3f} y={truth.y:.3f} theta={math.degrees(truth.theta):.1f} deg\n")
for spacing in (0.3, 0.5, 0.7):
    layout = NodeLayout.square(spacing)
    errs = []
    for _ in range(200):
        rs = synthesize_range_set(IDENTITY, truth, layout, layout, noise, rng)
        est = solve_relative_pose(rs, layout, layout)
        errs.append((math.hypot(est.pose.x - truth.x, est.pose.y - truth.y), abs(math.degrees(math.remainder(est.pose.theta - truth.theta, 2 * math.pi)))))
    errs = np.array(errs)
    heading_std = math.degrees(1.0 / math.sqrt(est.information[2, 2]))
    print(
        f"spacing {spacing:.1f} m: median translation error {np.median(errs[:, 0]):.3f} m, "
        f"median heading error {np.median(errs[:, 1]):.2f} deg, "
        f"last solve reports heading std {heading_std:.2f} deg after {est.iterations} iterations"
    )

print("\nWider node spacing gives a longer lever arm, so the heading is better determined.")
