"""The first test case end to end.

Robot 0 drives three laps of a 7 m x 6 m rectangle while robot 1 stands in
the middle. Every estimator variant runs over the same noisy dataset; the
printout is a small version of the usual accuracy table.
"""

import time

from uwbrelloc import ESTIMATORS, PipelineParams, preset, run_pipeline, run_scenario

scenario = preset("test-case-1", seed=0)
t0 = time.perf_counter()
dataset = run_scenario(scenario)
print(f"simulated {len(dataset)} ticks at {scenario.tick_rate:g} Hz in {time.perf_counter() - t0:.1f} s")

t0 = time.perf_counter()
result = run_pipeline(dataset, scenario.layouts, PipelineParams(seed=0), ESTIMATORS)
print(f"ran all estimators in {time.perf_counter() - t0:.1f} s\n")

print(f"{'estimator':<18}{'translation (m)':>18}{'rotation (deg)':>17}{'ms/tick':>10}")
for name in ESTIMATORS:
    rep = result.reports[name]
    print(
        f"{name:<18}{rep.mean_translation:>10.3f} ± {rep.std_translation:<5.3f}"
        f"{rep.mean_rotation_deg:>10.2f} ± {rep.std_rotation_deg:<5.2f}{rep.timing_ms['total']:>8.1f}"
    )

print(f"\nerrors exclude the first {result.reports['pf_optimized'].burn_in} ticks (twice the window size)")
