"""How window size and node spacing move the error.

A short sweep over the first test case. Window sizes are scored on a
common burn-in so that every setting is judged on the same ticks.
"""

from uwbrelloc import PipelineParams, WindowConfig, compute_metrics, preset, run_pipeline, run_scenario

SEEDS = (0, 1, 2)
WINDOWS = (1, 5, 30, 80)
burn_in = 2 * max(WINDOWS)

print("window size (window_optimized, mean over seeds)")
for w in WINDOWS:
    t = r = 0.0
    for seed in SEEDS:
        sc = preset("test-case-1", seed=seed, laps=1)
        ds = run_scenario(sc)
        rep = run_pipeline(ds, sc.layouts, PipelineParams(window=WindowConfig(window_size=w), seed=seed, burn_in=burn_in), ["window_optimized"]).reports["window_optimized"]
        t += rep.mean_translation / len(SEEDS)
        r += rep.mean_rotation_deg / len(SEEDS)
    print(f"  w={w:<3} {t:.3f} m  {r:.2f} deg")

print("\nnode spacing (ranging_only, mean over seeds)")
for spacing in (0.3, 0.5, 0.7):
    t = r = 0.0
    for seed in SEEDS:
        sc = preset("test-case-1", seed=seed, laps=1, spacing=spacing)
        ds = run_scenario(sc)
        res = run_pipeline(ds, sc.layouts, PipelineParams(seed=seed), ["ranging_only"])
        truth = {p: ds.true_relative(*p) for p in ds.pairs}
        rep = compute_metrics(res.estimates["ranging_only"], truth, burn_in=0)
        t += rep.mean_translation / len(SEEDS)
        r += rep.mean_rotation_deg / len(SEEDS)
    print(f"  {spacing:.1f} m  {t:.3f} m  {r:.2f} deg")
