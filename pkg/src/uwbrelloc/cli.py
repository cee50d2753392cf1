"""Command-line entry point: simulate, run, metrics, sweep."""

from __future__ import annotations

import argparse
import functools
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .config import ConfigError, ScenarioConfig, from_mapping, load_config
from .io import DatasetFormatError, emit_dataset, emit_estimates, ingest_dataset, ingest_estimates
from .metrics import MetricsError, MetricsReport, compute_metrics
from .pipeline import ESTIMATORS, PipelineError, PipelineParams, run_pipeline
from .simulator import PRESETS, Dataset, Scenario, ScenarioError, run_scenario

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_RUNTIME = 5

log = logging.getLogger("uwbrelloc")


class UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------


def _scenario_config(args: argparse.Namespace) -> ScenarioConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    elif getattr(args, "preset", None):
        cfg = from_mapping({"preset": args.preset})
    else:
        raise UsageError("give --preset or --config")
    updates: dict[str, Any] = {}
    if getattr(args, "preset", None) and getattr(args, "config", None):
        updates["preset"] = args.preset
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "noise_free", False):
        updates["noise.noise_free"] = True
    return cfg.with_values(**updates) if updates else cfg


def _emit(args: argparse.Namespace, doc: dict, text: str) -> None:
    print(json.dumps(doc, indent=2, sort_keys=False) if args.json else text)


def _report_table(report: MetricsReport) -> str:
    lines = [
        f"estimator {report.estimator or '-'}  (burn-in {report.burn_in} ticks, {report.flagged_ticks} flagged ticks)",
        f"{'pair':<8}{'trans mean':>12}{'std':>9}{'rmse':>9}{'rot mean':>11}{'std':>9}{'rmse':>9}",
    ]
    rows = [(f"{i}-{j}", m) for (i, j), m in report.pairs.items()]
    rows.append(("all", report))
    for name, m in rows:
        lines.append(
            f"{name:<8}{m.mean_translation:>10.3f} m{m.std_translation:>9.3f}{m.rmse_translation:>9.3f}"
            f"{m.mean_rotation_deg:>9.2f} °{m.std_rotation_deg:>9.2f}{m.rmse_rotation_deg:>9.2f}"
        )
    if report.timing_ms:
        lines.append("timing per tick: " + ", ".join(f"{k} {v:.2f} ms" for k, v in report.timing_ms.items()))
    return "\n".join(lines)


def _parse_value(text: str) -> Any:
    return yaml.safe_load(text)


def _parse_param(spec: str) -> tuple[str, list[Any]]:
    if "=" not in spec:
        raise UsageError(f"--param {spec!r}: expected path=v1,v2,...")
    path, values = spec.split("=", 1)
    vals = [_parse_value(v) for v in values.split(",") if v.strip()]
    if not path or not vals:
        raise UsageError(f"--param {spec!r}: expected path=v1,v2,...")
    return path.strip(), vals


def _parse_seeds(text: str) -> list[int]:
    text = text.strip()
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(v) for v in text.split("-", 1))
            return list(range(lo, hi + 1))
        if "," in text:
            return [int(v) for v in text.split(",") if v.strip()]
        return list(range(int(text)))
    except ValueError:
        raise UsageError(f"--seeds {text!r}: expected a count (10), a range (0-9) or a list (1,4,7)") from None


# -- commands -----------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _scenario_config(args)
    ds = run_scenario(cfg.scenario())
    emit_dataset(ds, args.out)
    doc = {"out": str(args.out), "ticks": len(ds), "robots": ds.robots, "seed": cfg.seed, "duration_s": float(ds.times[-1])}
    _emit(args, doc, f"wrote {len(ds)} ticks for robots {ds.robots} to {args.out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else None
    ds = ingest_dataset(args.data)
    layouts = dict(ds.layouts)
    if cfg is not None and (cfg.robots or cfg.preset):
        for r, lay in cfg.scenario().layouts.items():
            layouts.setdefault(r, lay)
    params = cfg.pipeline_params() if cfg else PipelineParams()
    if args.seed is not None:
        params = PipelineParams(params.solver, params.window, params.filter, args.seed, params.burn_in)
    estimator = args.estimator or (cfg.estimator if cfg else "pf_optimized")
    result = run_pipeline(ds, layouts, params, [estimator])
    report = result.reports[estimator]
    doc = report.to_dict(series=args.series)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    if args.estimates:
        emit_estimates(result.times, result.estimates[estimator], args.estimates)
    _emit(args, doc, _report_table(report))
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    truth = ingest_dataset(args.truth)
    est = ingest_estimates(args.estimates, truth.times)
    gt = {p: truth.true_relative(*p) for p in est if p[0] in truth.robots and p[1] in truth.robots}
    unknown = [p for p in est if p not in gt]
    if unknown:
        raise MetricsError(f"estimates reference robot pairs {unknown} absent from the truth dataset")
    report = compute_metrics(est, gt, burn_in=args.burn_in)
    _emit(args, report.to_dict(series=args.series), _report_table(report))
    return EXIT_OK


@functools.lru_cache(maxsize=2)
def _simulated(scenario: Scenario) -> Dataset:
    return run_scenario(scenario)


def _sweep_cell(task: tuple[int, dict, list[str], int | None]) -> tuple[int, dict]:
    index, doc, estimators, burn_in = task
    cfg = from_mapping(doc)
    ds = _simulated(cfg.scenario())
    params = cfg.pipeline_params()
    if burn_in is not None:
        params = PipelineParams(params.solver, params.window, params.filter, params.seed, burn_in)
    res = run_pipeline(ds, cfg.scenario().layouts, params, estimators)
    return index, {e: res.reports[e].to_dict() for e in estimators}


def cmd_sweep(args: argparse.Namespace) -> int:
    base = _scenario_config(args)
    grid = [_parse_param(p) for p in args.param]
    seeds = _parse_seeds(args.seeds) if args.seeds else [base.seed]
    estimators = args.estimator or list(ESTIMATORS)
    for e in estimators:
        if e not in ESTIMATORS:
            raise UsageError(f"unknown estimator {e!r}; choose from {', '.join(ESTIMATORS)}")

    # seed-major order lets cells that differ only in estimator settings share a dataset
    cells = []
    for seed in seeds:
        for values in itertools.product(*(v for _, v in grid)):
            setting = dict(zip((p for p, _ in grid), values))
            cells.append((setting, seed, base.with_values(**setting, seed=seed)))

    # one burn-in for every cell, so different window sizes are scored on the same ticks
    burn_in = base.burn_in
    if burn_in is None:
        burn_in = max(2 * c.window.window_size for _, _, c in cells)

    tasks = [(k, c.model_dump(), estimators, burn_in) for k, (_, _, c) in enumerate(cells)]
    if args.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = dict(pool.map(_sweep_cell, tasks))
    else:
        results = dict(_sweep_cell(t) for t in tasks)

    rows = []
    for k, (setting, seed, _) in enumerate(cells):
        for e in estimators:
            r = results[k][e]
            rows.append({**setting, "seed": seed, "estimator": e,
                         "mean_translation_m": r["mean_translation_m"], "mean_rotation_deg": r["mean_rotation_deg"],
                         "std_translation_m": r["std_translation_m"], "std_rotation_deg": r["std_rotation_deg"]})
    summary = []
    for values in itertools.product(*(v for _, v in grid)):
        setting = dict(zip((p for p, _ in grid), values))
        for e in estimators:
            sel = [r for r in rows if r["estimator"] == e and all(r[p] == v for p, v in setting.items())]
            summary.append({**setting, "estimator": e, "seeds": len(sel),
                            "mean_translation_m": float(np.mean([r["mean_translation_m"] for r in sel])),
                            "mean_rotation_deg": float(np.mean([r["mean_rotation_deg"] for r in sel]))})
    doc = {"params": [p for p, _ in grid], "seeds": seeds, "burn_in_ticks": burn_in, "cells": rows, "summary": summary}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")

    names = [p for p, _ in grid]
    head = "".join(f"{n:>20}" for n in names) + f"{'estimator':>18}{'trans (m)':>11}{'rot (°)':>9}"
    lines = [f"{len(seeds)} seed(s), burn-in {burn_in} ticks, mean over seeds", head]
    for s in summary:
        lines.append("".join(f"{str(s[n]):>20}" for n in names) + f"{s['estimator']:>18}{s['mean_translation_m']:>11.3f}{s['mean_rotation_deg']:>9.2f}")
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwbrelloc", description="Multi-robot relative localization from UWB ranges and odometry.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--json", action="store_true", help="print machine-readable JSON")

    p = sub.add_parser("simulate", help="simulate a scenario and write a dataset CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-free", action="store_true", help="disable range and odometry noise")
    p.add_argument("--out", type=Path, required=True)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run one estimator over a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--seed", type=int, help="particle filter seed (default: config seed)")
    p.add_argument("--out", type=Path, help="write the metrics report as JSON")
    p.add_argument("--estimates", type=Path, help="write the estimate stream as CSV")
    p.add_argument("--series", action="store_true", help="include per-tick error series in the report")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="score an estimate stream against a dataset's ground truth")
    p.add_argument("--estimates", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--series", action="store_true")
    common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", help="grid over config values and seeds")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", type=Path)
    p.add_argument("--param", action="append", default=[], metavar="PATH=V1,V2", help="dotted config path and values; repeatable")
    p.add_argument("--seeds", help="count (10), range (0-9) or list (1,4,7)")
    p.add_argument("--estimator", action="append", choices=ESTIMATORS, help="repeatable; default all")
    p.add_argument("--noise-free", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, help="write all cells as JSON")
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(args, EXIT_USAGE, "usage", exc)
    except ConfigError as exc:
        return _fail(args, EXIT_CONFIG, "config", exc)
    except DatasetFormatError as exc:
        return _fail(args, EXIT_DATA, "data", exc)
    except OSError as exc:
        return _fail(args, EXIT_DATA, "io", exc)
    except (PipelineError, MetricsError, ScenarioError, ValueError) as exc:
        return _fail(args, EXIT_RUNTIME, "runtime", exc)


def _fail(args: argparse.Namespace, code: int, category: str, exc: BaseException) -> int:
    if getattr(args, "json", False):
        print(json.dumps({"error": category, "message": str(exc), "exit_code": code}))
    else:
        print(f"error ({category}): {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
