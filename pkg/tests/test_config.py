import json

import pytest

from dsnet.config import RunConfig, load_run_config, run_config_from_dict
from dsnet.errors import ConfigurationError


def test_defaults():
    cfg = run_config_from_dict({})
    assert cfg.optim.lr == 5e-6 and cfg.optim.weight_decay == 5e-4
    assert (cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps) == (0.9, 0.999, 1e-8)
    assert cfg.batch_size == 1


def test_unknown_keys_listed():
    with pytest.raises(ConfigurationError, match=r"optim\.momentum.*typo") as e:
        run_config_from_dict({"optim": {"momentum": 0.9}, "typo": 1})
    assert "model" not in str(e.value)


@pytest.mark.parametrize(
    "doc",
    [
        {"optim": {"lr": 0}},
        {"batch_size": 0},
        {"iterations": 0},
        {"data": {"kind": "video"}},
        {"data": {"kind": "scenes"}},
        {"loss": {"dataset": "Mall"}},
        {"loss": {"levels": [2, 1]}},
        {"augment": {"gray_prob": 2}},
        {"model": 3},
    ],
)
def test_invalid_values(doc):
    with pytest.raises(ConfigurationError):
        run_config_from_dict(doc)


def test_output_env_override(monkeypatch):
    monkeypatch.setenv("DSNET_OUTPUT_DIR", "/tmp/elsewhere")
    assert run_config_from_dict({"output_dir": "x"}).output_dir == "/tmp/elsewhere"


def test_loss_settings():
    assert run_config_from_dict({"loss": {"dataset": "ShanghaiTech-A"}}).loss.build().lam == 1000.0
    assert run_config_from_dict({"loss": {"lam": 7, "dataset": "UCSD"}}).loss.build().lam == 7.0
    assert run_config_from_dict({}).loss.build().levels == (1, 2, 4)


def test_file_roundtrip_and_parse_error(tmp_path):
    cfg = RunConfig(iterations=3)
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert load_run_config(tmp_path / "c.json").to_dict() == cfg.to_dict()
    (tmp_path / "bad.json").write_text('{\n  "iterations": 3,\n}')
    with pytest.raises(ConfigurationError, match=r"bad.json:3:"):
        load_run_config(tmp_path / "bad.json")
