import json

import pytest

from uwbrelloc.config import ConfigError, ScenarioConfig, from_mapping, load_config, preset_config
from uwbrelloc.simulator import preset

YAML_DOC = """
schema_version: 1
seed: 3
tick_rate: 10
robots:
  - id: 0
    path: {kind: square, width: 4, height: 4, laps: 1}
    layout: {square: 0.7}
  - id: 1
    static_pose: [1.0, 1.0, 0.0]
    layout: [[0.3, 0.0], [0.0, 0.3], [-0.3, 0.0]]
window: {window_size: 10}
filter: {num_particles: 100}
estimator: window_optimized
"""


def test_yaml_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(YAML_DOC)
    cfg = load_config(p)
    sc = cfg.scenario()
    assert [r.id for r in sc.robots] == [0, 1]
    assert len(sc.robots[0].layout.offsets) == 4
    assert len(sc.robots[1].layout.offsets) == 3
    pp = cfg.pipeline_params()
    assert pp.window.window_size == 10 and pp.filter.num_particles == 100
    assert pp.burn_in_ticks == 20
    assert cfg.estimator == "window_optimized"


def test_json_config_equals_yaml(tmp_path):
    import yaml

    doc = yaml.safe_load(YAML_DOC)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    assert load_config(p) == from_mapping(doc)


def test_preset_config_matches_preset():
    cfg = preset_config("test-case-1", seed=5, spacing=0.3)
    assert cfg.scenario() == preset("test-case-1", spacing=0.3, seed=5)
    nf = preset_config("test-case-2", noise={"noise_free": True})
    assert nf.scenario() == preset("test-case-2", noise_free=True)
    assert nf.pipeline_params().filter.sigma_d == 0.0


@pytest.mark.parametrize(
    "doc, needle",
    [
        ({"preset": "test-case-1", "window": {"window_size": 0}}, "window.window_size"),
        ({"preset": "nope"}, "unknown preset"),
        ({"preset": "test-case-1", "schema_version": 2}, "schema_version"),
        ({}, "either 'preset'"),
        ({"preset": "test-case-1", "filtr": {}}, "filtr"),
        ({"preset": "test-case-1", "estimator": "magic"}, "estimator"),
        ({"robots": [{"id": 0}, {"id": 0}]}, "duplicate robot ids"),
        ({"preset": "test-case-1", "noise": {"range": {"sigma_r": -1}}}, "noise.range.sigma_r"),
    ],
)
def test_field_level_errors(doc, needle):
    with pytest.raises(ConfigError) as info:
        from_mapping(doc)
    assert needle in str(info.value)


def test_with_values_dotted_override():
    cfg = preset_config("test-case-1")
    new = cfg.with_values(**{"window.window_size": 80, "spacing": 0.7})
    assert new.window.window_size == 80 and new.spacing == 0.7
    assert cfg.window.window_size == 30
    with pytest.raises(ConfigError, match="unknown field"):
        cfg.with_values(**{"window.size": 3})
    with pytest.raises(ConfigError, match="not a config section"):
        cfg.with_values(**{"seed.x": 3})


def test_unreadable_and_unparsable(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(bad)
    top = tmp_path / "list.yaml"
    top.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(top)


def test_frozen():
    cfg = preset_config("test-case-1")
    with pytest.raises(Exception):
        cfg.seed = 4
    assert isinstance(cfg, ScenarioConfig)
