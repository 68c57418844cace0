import json

import pytest

from lccd.config import ConfigError, RunConfig
from lccd.rng import make_rng


def test_defaults():
    cfg = RunConfig()
    assert cfg.k == 2 and cfg.alpha == 0.0005
    assert cfg.removal_threshold == pytest.approx(0.9995)
    assert cfg.replace(removal_rule="significance").removal_threshold == 0.0005


@pytest.mark.parametrize("bad", [
    {"k": 1}, {"alpha": 0}, {"alpha": 1.0}, {"removal_rule": "x"}, {"rank_variant": "x"},
    {"dof_rule": "x"}, {"removal_scope": "x"}, {"min_count": 0}, {"candidate_radius": 0},
    {"ci_alpha": 2}, {"em_restarts": -1}, {"workers": 0}, {"phases": 4},
])
def test_invalid_values(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad)


def test_json_round_trip_and_unknown_keys(tmp_path):
    cfg = RunConfig(k=3, seed=9)
    assert RunConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_json({"kk": 2})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"alpha": 0.01}))
    assert RunConfig.load(path).alpha == 0.01
    path.write_text("{")
    with pytest.raises(ConfigError):
        RunConfig.load(path)


def test_rng_streams():
    a = make_rng(1, "x").random(3)
    assert (a == make_rng(1, "x").random(3)).all()
    assert not (a == make_rng(1, "y").random(3)).all()
    assert (make_rng((1, 2), "x").random(2) == make_rng((1, 2), "x").random(2)).all()
