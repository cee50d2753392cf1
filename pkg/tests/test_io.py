import numpy as np
import pytest

from uwbrelloc.io import (
    DatasetFormatError,
    dataset_from_string,
    dataset_to_string,
    emit_dataset,
    emit_estimates,
    ingest_dataset,
    ingest_estimates,
)
from uwbrelloc.simulator import Scenario, preset, run_scenario


@pytest.fixture(scope="module")
def small():
    ds = run_scenario(Scenario(preset("test-case-2").robots, duration=1.0, seed=4))
    return ds, dataset_to_string(ds)


def _lines(text):
    return text.splitlines(keepends=True)


def _error(text):
    with pytest.raises(DatasetFormatError) as info:
        dataset_from_string(text)
    return info.value


def test_round_trip_string(small):
    ds, text = small
    back = dataset_from_string(text)
    assert back == ds
    assert dataset_to_string(back) == text


def test_round_trip_file(tmp_path, short_noisy_dataset):
    _, ds = short_noisy_dataset
    p = tmp_path / "d.csv"
    emit_dataset(ds, p)
    assert ingest_dataset(p) == ds


def test_node_rows_are_optional(small):
    ds, text = small
    stripped = "".join(l for l in _lines(text) if not l.startswith("NODE"))
    back = dataset_from_string(stripped)
    assert back.layouts == {}
    assert np.array_equal(back.ground_truth[0], ds.ground_truth[0])


def test_unknown_record_type(small):
    _, text = small
    lines = _lines(text)
    lines.insert(20, "FOO,0,1,2,3,4,5\n")
    err = _error("".join(lines))
    assert err.line == 21 and err.column == 1
    assert "unknown record type" in str(err)


def test_non_monotone_timestamps(small):
    _, text = small
    lines = _lines(text)
    idx = next(i for i, l in enumerate(lines) if l.startswith("GT,0.3,"))
    lines[idx] = lines[idx].replace("GT,0.3,", "GT,0.05,", 1)
    err = _error("".join(lines))
    assert "non-monotone timestamps" in str(err)
    assert err.line == idx + 1 and err.column == 2


def test_bad_number_reports_column(small):
    _, text = small
    lines = _lines(text)
    idx = next(i for i, l in enumerate(lines) if l.startswith("GT,0.1,"))
    cells = lines[idx].rstrip("\n").split(",")
    cells[4] = "abc"
    lines[idx] = ",".join(cells) + "\n"
    err = _error("".join(lines))
    assert (err.line, err.column) == (idx + 1, 5)
    assert str(err).startswith(f"line {idx + 1}, column 5:")


def test_wrong_arity(small):
    _, text = small
    lines = _lines(text)
    idx = next(i for i, l in enumerate(lines) if l.startswith("ODO,0.2,"))
    lines[idx] = ",".join(lines[idx].split(",")[:4]) + "\n"
    err = _error("".join(lines))
    assert err.line == idx + 1 and "needs 6 fields" in str(err)


def test_duplicate_row(small):
    _, text = small
    lines = _lines(text)
    idx = next(i for i, l in enumerate(lines) if l.startswith("GT,0.2,"))
    lines.insert(idx, lines[idx])
    assert "duplicate" in str(_error("".join(lines)))


def test_truncated_names_last_complete_tick(small):
    _, text = small
    lines = _lines(text)
    # cut halfway through the UWB block of tick 6
    start = next(i for i, l in enumerate(lines) if l.startswith("UWB,0.6,"))
    err = _error("".join(lines[: start + 10]))
    assert "truncated input" in str(err)
    assert "last complete tick is 5" in str(err)


def test_truncated_mid_line(small):
    _, text = small
    cut = text[: len(text) // 2]
    cut = cut[: cut.rfind(",") + 1]
    err = _error(cut)
    assert "truncated" in str(err) and err.line is not None


def test_missing_header():
    err = _error("GT,0,0,0,0,0\n")
    assert err.line == 1
    assert "header" in str(err)


def test_empty_file():
    assert _error("").line == 1


def test_node_index_out_of_range(small):
    _, text = small
    lines = _lines(text)
    idx = next(i for i, l in enumerate(lines) if l.startswith("UWB,"))
    cells = lines[idx].split(",")
    cells[3] = "7"
    lines[idx] = ",".join(cells)
    err = _error("".join(lines))
    assert "out of range" in str(err) and err.line == idx + 1


def test_rows_after_end(small):
    _, text = small
    err = _error(text + "GT,9,0,0,0,0\n")
    assert "after the END" in str(err)


def test_estimates_round_trip(tmp_path, small):
    ds, _ = small
    rng = np.random.default_rng(0)
    est = {p: rng.normal(size=(len(ds.times), 3)) for p in ds.pairs}
    est[ds.pairs[0]][3] = np.nan
    path = tmp_path / "e.csv"
    emit_estimates(ds.times, est, path)
    back = ingest_estimates(path, ds.times)
    for p in ds.pairs:
        a, b = est[p], back[p]
        assert np.array_equal(np.isnan(a), np.isnan(b))
        ok = ~np.isnan(a)
        assert np.allclose(a[ok], b[ok], rtol=1e-8)


def test_estimates_bad_time(tmp_path, small):
    ds, _ = small
    path = tmp_path / "e.csv"
    path.write_text("record,t,robot_i,robot_j,x,y,theta\nEST,123.45,0,1,0,0,0\n")
    with pytest.raises(DatasetFormatError, match="not a tick"):
        ingest_estimates(path, ds.times)
