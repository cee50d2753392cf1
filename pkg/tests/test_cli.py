import json

import pytest

from uwbrelloc.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_USAGE, _parse_seeds, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


@pytest.fixture(scope="module")
def dataset_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "short.yaml"
    cfg.write_text("preset: test-case-2\nduration: 6.0\nseed: 1\nwindow: {window_size: 5}\nfilter: {num_particles: 100}\n")
    data = d / "data.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(data)]) == EXIT_OK
    return d, cfg, data


def test_simulate_json(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("preset: test-case-1\nduration: 2.0\n")
    code, out = run(capsys, "simulate", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "d.csv"), "--json")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["ticks"] == 21 and doc["seed"] == 3 and doc["robots"] == [0, 1]


def test_run_then_metrics(capsys, dataset_file):
    d, cfg, data = dataset_file
    est = d / "est.csv"
    code, out = run(capsys, "run", "--data", str(data), "--config", str(cfg), "--estimator", "window_optimized",
                    "--estimates", str(est), "--out", str(d / "rep.json"), "--json")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["estimator"] == "window_optimized" and rep["burn_in_ticks"] == 10
    assert json.loads((d / "rep.json").read_text()) == rep
    code, out = run(capsys, "metrics", "--estimates", str(est), "--truth", str(data), "--burn-in", "10", "--json")
    m = json.loads(out)
    assert code == EXIT_OK
    assert m["mean_translation_m"] == pytest.approx(rep["mean_translation_m"], rel=1e-6)
    assert m["mean_rotation_deg"] == pytest.approx(rep["mean_rotation_deg"], rel=1e-6, abs=1e-9)


def test_run_human_table(capsys, dataset_file):
    _, cfg, data = dataset_file
    code, out = run(capsys, "run", "--data", str(data), "--config", str(cfg), "--estimator", "odometry_only")
    assert code == EXIT_OK
    assert "estimator odometry_only" in out and "all" in out


def test_sweep_common_burn_in(capsys, dataset_file):
    _, cfg, _ = dataset_file
    code, out = run(capsys, "sweep", "--config", str(cfg), "--param", "window.window_size=2,5", "--seeds", "0-1",
                    "--estimator", "window_optimized", "--json")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["burn_in_ticks"] == 10 and doc["seeds"] == [0, 1]
    assert len(doc["cells"]) == 4 and len(doc["summary"]) == 2


def test_sweep_parallel_matches_serial(capsys, dataset_file):
    _, cfg, _ = dataset_file
    args = ["sweep", "--config", str(cfg), "--param", "spacing=0.3,0.7", "--seeds", "2", "--estimator", "ranging_only", "--json"]
    _, serial = run(capsys, *args)
    _, parallel = run(capsys, *args, "--workers", "2")
    assert json.loads(serial)["cells"] == json.loads(parallel)["cells"]


def test_error_exit_codes(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("record,t,c1,c2,c3,c4,c5\nGT,0,0,0,0\n")
    code, out = run(capsys, "run", "--data", str(bad), "--json")
    doc = json.loads(out)
    assert code == EXIT_DATA and doc["exit_code"] == EXIT_DATA and "line 2" in doc["message"]

    cfg = tmp_path / "c.yaml"
    cfg.write_text("preset: test-case-1\nwindow: {window_size: -1}\n")
    code, out = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "x.csv"), "--json")
    assert code == EXIT_CONFIG and "window.window_size" in json.loads(out)["message"]

    code, _ = run(capsys, "run", "--data", str(tmp_path / "missing.csv"))
    assert code == EXIT_DATA

    code, _ = run(capsys, "sweep", "--preset", "test-case-1", "--param", "window.window_size")
    assert code == EXIT_USAGE


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == EXIT_USAGE


def test_parse_seeds():
    assert _parse_seeds("3") == [0, 1, 2]
    assert _parse_seeds("2-4") == [2, 3, 4]
    assert _parse_seeds("1,5") == [1, 5]
