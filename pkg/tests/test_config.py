import json

import pytest

from lungscan.config import dump_config, load_config
from lungscan.errors import ConfigError


def test_defaults():
    cfg = load_config(env={})
    assert cfg.racnet.t == 700 and cfg.racnet.rnn_units == 128
    assert cfg.train.batch_size == 5 and cfg.train.lr == 1e-4
    assert cfg.pipeline.tau_fraction == 0.02 and cfg.pipeline.roi_mode == "per-lung"
    assert cfg.run.workers == 1 and cfg.seed == 0


def test_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[train]\nseed = 1\nsteps = 10\nlr = 0.5\n[racnet]\nt = 9\n")
    env = {"LUNGSCAN_TRAIN_SEED": "2", "LUNGSCAN_TRAIN_STEPS": "20"}
    cfg = load_config(ini, {"train.seed": 3}, env=env)
    assert cfg.train.seed == 3  # flag beats env and file
    assert cfg.train.steps == 20  # env beats file
    assert cfg.train.lr == 0.5  # file beats default
    assert cfg.racnet.t == 9


def test_none_override_ignored():
    assert load_config(overrides={"train.seed": None}, env={}).train.seed == 0


def test_tuple_and_string_fields(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[racnet]\ncnn_widths = 4, 8\nrouting = first_l\n")
    cfg = load_config(ini, env={})
    assert cfg.racnet.cnn_widths == (4, 8) and cfg.racnet.routing == "first_l"


def test_canonical_roundtrip(tmp_path):
    cfg = load_config(overrides={"racnet.t": 16, "pipeline.grid_n": 8, "run.workers": 3}, env={})
    text = dump_config(cfg)
    (tmp_path / "a.ini").write_text(text)
    again = load_config(tmp_path / "a.ini", env={})
    assert again == cfg
    assert dump_config(again) == text
    sections = [line for line in text.splitlines() if line.startswith("[")]
    assert sections == sorted(sections)


@pytest.mark.parametrize("body", ["[train]\nbogus = 1\n", "[nope]\nx = 1\n", "[train]\nseed = abc\n",
                                  "[racnet]\nt = 0\n", "[pipeline]\nroi_mode = both\n"])
def test_bad_config(tmp_path, body):
    (tmp_path / "c.ini").write_text(body)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.ini", env={})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini", env={})


def test_bad_override_key():
    with pytest.raises(ConfigError):
        load_config(overrides={"seed": 1}, env={})


def test_prompts_file(tmp_path):
    (tmp_path / "p.json").write_text(json.dumps({"lungs": ["both lungs on a chest CT slice"]}))
    cfg = load_config(overrides={"pipeline.prompts_file": str(tmp_path / "p.json"),
                                 "pipeline.roi_mode": "single"}, env={})
    assert cfg.pipeline.prompts == {"lungs": ("both lungs on a chest CT slice",)}
    assert "prompts_file = " + str(tmp_path / "p.json") in dump_config(cfg)


def test_empty_prompt_in_file_rejected(tmp_path):
    (tmp_path / "p.json").write_text(json.dumps({"lungs": [" "]}))
    with pytest.raises(ConfigError):
        load_config(overrides={"pipeline.prompts_file": str(tmp_path / "p.json"),
                               "pipeline.roi_mode": "single"}, env={})
