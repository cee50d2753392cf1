"""Relative-pose error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .se2 import normalize_angles

Pair = tuple[int, int]


class MetricsError(ValueError):
    pass


@dataclass
class PairMetrics:
    mean_translation: float
    std_translation: float
    rmse_translation: float
    mean_rotation_deg: float
    std_rotation_deg: float
    rmse_rotation_deg: float
    ticks: np.ndarray
    translation_series: np.ndarray
    rotation_series_deg: np.ndarray

    def to_dict(self, series: bool = False) -> dict:
        out = {
            "mean_translation_m": self.mean_translation,
            "std_translation_m": self.std_translation,
            "rmse_translation_m": self.rmse_translation,
            "mean_rotation_deg": self.mean_rotation_deg,
            "std_rotation_deg": self.std_rotation_deg,
            "rmse_rotation_deg": self.rmse_rotation_deg,
            "evaluated_ticks": int(self.ticks.size),
        }
        if series:
            out["ticks"] = self.ticks.tolist()
            out["translation_series_m"] = self.translation_series.tolist()
            out["rotation_series_deg"] = self.rotation_series_deg.tolist()
        return out


@dataclass
class MetricsReport:
    """Errors per robot pair plus pooled figures over all pairs and ticks."""

    pairs: dict[Pair, PairMetrics]
    mean_translation: float
    std_translation: float
    rmse_translation: float
    mean_rotation_deg: float
    std_rotation_deg: float
    rmse_rotation_deg: float
    burn_in: int = 0
    estimator: str = ""
    timing_ms: dict[str, float] = field(default_factory=dict)
    flagged_ticks: int = 0

    def to_dict(self, series: bool = False) -> dict:
        return {
            "estimator": self.estimator,
            "burn_in_ticks": self.burn_in,
            "flagged_ticks": self.flagged_ticks,
            "mean_translation_m": self.mean_translation,
            "std_translation_m": self.std_translation,
            "rmse_translation_m": self.rmse_translation,
            "mean_rotation_deg": self.mean_rotation_deg,
            "std_rotation_deg": self.std_rotation_deg,
            "rmse_rotation_deg": self.rmse_rotation_deg,
            "timing_ms": dict(self.timing_ms),
            "pairs": {f"{i}-{j}": m.to_dict(series) for (i, j), m in self.pairs.items()},
        }


def _summary(values: np.ndarray) -> tuple[float, float, float]:
    return float(values.mean()), float(values.std()), float(math.sqrt(np.mean(values**2)))


def compute_metrics(
    estimates: Mapping[Pair, np.ndarray],
    ground_truth: Mapping[Pair, np.ndarray],
    burn_in: int = 0,
) -> MetricsReport:
    """Per-tick translation (m) and wrapped rotation (deg) errors of relative poses.

    Both mappings hold (T, 3) arrays on the same tick grid. Ticks before
    ``burn_in`` and ticks where the estimate is NaN are skipped.
    """
    pairs: dict[Pair, PairMetrics] = {}
    all_t, all_r = [], []
    for pair, est in estimates.items():
        if pair not in ground_truth:
            continue
        est = np.asarray(est, dtype=float).reshape(-1, 3)
        gt = np.asarray(ground_truth[pair], dtype=float).reshape(-1, 3)
        n = min(len(est), len(gt))
        ticks = np.arange(n)
        ok = (ticks >= burn_in) & np.all(np.isfinite(est[:n]), axis=1)
        if not ok.any():
            continue
        e, g = est[:n][ok], gt[:n][ok]
        trans = np.hypot(e[:, 0] - g[:, 0], e[:, 1] - g[:, 1])
        rot = np.degrees(np.abs(normalize_angles(e[:, 2] - g[:, 2])))
        pairs[pair] = PairMetrics(*_summary(trans), *_summary(rot), ticks[ok], trans, rot)
        all_t.append(trans)
        all_r.append(rot)
    if not pairs:
        raise MetricsError("estimates and ground truth have no overlapping ticks")
    t = np.concatenate(all_t)
    r = np.concatenate(all_r)
    return MetricsReport(pairs, *_summary(t), *_summary(r), burn_in=burn_in)
