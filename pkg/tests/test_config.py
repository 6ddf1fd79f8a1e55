import json

import pytest

from predmon.config import derive_seed, load_config, parse_config
from predmon.errors import ConfigError
from predmon.policy import DEMO_TABLES


def base(**over):
    raw = {"data": {"path": "d.csv"}, "thresholds": [t.to_dict() for t in DEMO_TABLES.values()]}
    raw.update(over)
    return raw


def test_defaults(tmp_path):
    cfg = parse_config(base(), tmp_path)
    assert cfg.channels == ["heart_rate", "respiration", "temperature"]
    assert cfg.episodes == 10 and cfg.steps_per_episode == 300
    assert cfg.data_path == tmp_path / "d.csv"
    assert cfg.forecaster.window == 8 and cfg.forecaster.horizon == 4
    ac = cfg.agent_config("heart_rate")
    assert ac.batch_size == 32 and ac.memory_capacity == 2000 and ac.hidden == (24,)


def test_per_channel_overrides_and_seeds(tmp_path):
    cfg = parse_config(base(seed=3, agent={"gamma": 0.9}, agents={"respiration": {"gamma": 0.5, "seed": 1}}),
                       tmp_path)
    assert cfg.agent_config("heart_rate").gamma == 0.9
    assert cfg.agent_config("heart_rate").seed == derive_seed(3, "heart_rate")
    assert cfg.agent_config("respiration").gamma == 0.5
    assert cfg.agent_config("respiration").seed == 1


def test_derive_seed_distinct_and_stable():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert len({derive_seed(s, c) for s in range(5) for c in "abc"}) == 15


@pytest.mark.parametrize("raw", [
    {"thresholds": []},
    base(episodes=0),
    base(replay="sometimes"),
    base(agent={"gamma": 2}),
    base(agent={"epsilon": 0.001, "epsilon_min": 0.1}),
    base(unknown_key=1),
    base(agents={"pressure": {}}),
    base(data={"path": "d.csv", "channels": ["pressure"]}),
])
def test_invalid(tmp_path, raw):
    with pytest.raises(ConfigError):
        parse_config(raw, tmp_path)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("PREDMON_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    (tmp_path / "c.json").write_text(json.dumps(base(output_dir="runs")))
    assert load_config(tmp_path / "c.json").output_dir == tmp_path / "elsewhere"
