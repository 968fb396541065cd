import pytest

from noisysplit import config
from noisysplit.errors import ConfigError


def test_defaults_cover_schema():
    cfg = config.load()
    assert set(cfg) == set(config.SCHEMA)
    assert cfg["sweep.c2_grid"] == (0.2, 0.6, 1.0, 1.5, 2.0)
    assert cfg["schedule.c1"] == 1e-4


def test_file_then_flags(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("# comment\nnoise.kind = pairflip\nnoise.rate=0.2  # trailing\n\nmodel.hidden=32,16\n")
    cfg = config.load(p, {"noise.rate": "0.3"})
    assert cfg["noise.kind"] == "pairflip"
    assert cfg["noise.rate"] == 0.3
    assert cfg["model.hidden"] == (32, 16)


@pytest.mark.parametrize("text", ["noise.rate", "bogus.key=1", "noise.rate=abc", "train.epochs=1.5"])
def test_bad_files(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text + "\n")
    with pytest.raises(ConfigError):
        config.load(p)


def test_missing_file():
    with pytest.raises(ConfigError):
        config.load("/nonexistent/x.cfg")


def test_hash_ignores_order_formatting_and_output_dir(tmp_path):
    a, b = tmp_path / "a.cfg", tmp_path / "b.cfg"
    a.write_text("noise.rate=0.4\noptim.lr=0.02\n")
    b.write_text("optim.lr = 2e-2\n\nnoise.rate=.4\nexperiment.out=elsewhere\n")
    ca, cb = config.load(a), config.load(b)
    assert config.canonical(ca) == config.canonical(cb)
    assert config.config_hash(ca) == config.config_hash(cb)
    cb["noise.rate"] = 0.2
    assert config.config_hash(ca) != config.config_hash(cb)


def test_dump_reloads_to_same_config(tmp_path):
    cfg = config.load(overrides={"dataset.subset": "500", "train.eval_params": "sigma"})
    p = tmp_path / "dumped.cfg"
    p.write_text(config.dump(cfg))
    assert config.load(p) == cfg


def test_optional_values():
    assert config.parse_value("dataset.subset", "none") is None
    assert config.parse_value("train.eval_params", "auto") is None
    assert config.parse_value("schedules.families", "power, step") == ("power", "step")
