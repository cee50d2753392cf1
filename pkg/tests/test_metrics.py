import math

import numpy as np
import pytest

from uwbrelloc.metrics import MetricsError, compute_metrics


def test_identity_gives_zero():
    gt = {(0, 1): np.random.default_rng(0).normal(size=(20, 3))}
    rep = compute_metrics(gt, gt)
    assert rep.mean_translation == 0.0 and rep.mean_rotation_deg == 0.0
    assert rep.rmse_translation == 0.0


def test_three_four_five_offset():
    gt = np.zeros((10, 3))
    est = gt + [0.3, 0.4, 0.0]
    rep = compute_metrics({(0, 1): est}, {(0, 1): gt})
    assert rep.mean_translation == pytest.approx(0.5, abs=1e-12)
    assert rep.mean_rotation_deg == pytest.approx(0.0, abs=1e-12)
    assert rep.std_translation == pytest.approx(0.0, abs=1e-12)


def test_rotation_wraps():
    gt = np.array([[0, 0, math.pi], [0, 0, math.pi]])
    est = np.array([[0, 0, math.radians(170)], [0, 0, math.radians(-170)]])
    rep = compute_metrics({(0, 1): est}, {(0, 1): gt})
    assert rep.mean_rotation_deg == pytest.approx(10.0, abs=1e-9)


def test_burn_in_and_nan_skipped():
    gt = np.zeros((10, 3))
    est = gt.copy()
    est[:4] = [5.0, 0.0, 0.0]
    est[7] = np.nan
    rep = compute_metrics({(0, 1): est}, {(0, 1): gt}, burn_in=4)
    assert rep.mean_translation == 0.0
    assert rep.pairs[(0, 1)].ticks.tolist() == [4, 5, 6, 8, 9]
    assert len(rep.pairs[(0, 1)].translation_series) == 5


def test_rmse_and_std():
    gt = np.zeros((2, 3))
    est = np.array([[1.0, 0, 0], [3.0, 0, 0]])
    rep = compute_metrics({(0, 1): est}, {(0, 1): gt})
    assert rep.mean_translation == pytest.approx(2.0)
    assert rep.std_translation == pytest.approx(1.0)
    assert rep.rmse_translation == pytest.approx(math.sqrt(5.0))


def test_empty_overlap_errors():
    with pytest.raises(MetricsError):
        compute_metrics({(0, 1): np.zeros((3, 3))}, {(0, 2): np.zeros((3, 3))})
    with pytest.raises(MetricsError):
        compute_metrics({(0, 1): np.zeros((3, 3))}, {(0, 1): np.zeros((3, 3))}, burn_in=5)


def test_report_dict_shape():
    gt = np.zeros((5, 3))
    rep = compute_metrics({(0, 1): gt + 0.1}, {(0, 1): gt})
    d = rep.to_dict(series=True)
    assert d["pairs"]["0-1"]["evaluated_ticks"] == 5
    assert len(d["pairs"]["0-1"]["translation_series_m"]) == 5
    assert "translation_series_m" not in rep.to_dict()["pairs"]["0-1"]
