import pytest

from concodec.config import DEFAULTS, dump_config, load_config, make_config, parse_config
from concodec.errors import ConfigError


def test_defaults_match_training_protocol():
    cfg = make_config()
    assert cfg["train.lr"] == 2e-4
    assert cfg["train.adam_betas"] == (0.5, 0.999)
    assert cfg["train.batch_size"] == 16
    weights = {k: cfg[f"loss.{k}"] for k in ("gan", "rec", "ssim", "vgg", "latent", "kl")}
    assert weights == {"gan": 1, "rec": 10, "ssim": 0.25, "vgg": 0.2, "latent": 1, "kl": 0.01}
    assert cfg["tex.d"] == 64 and cfg["tex.qp"] == 51


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="tex.dd"):
        make_config({"tex.dd": 3})


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        make_config({"tex.qp": "fifty"})


def test_dump_parse_roundtrip():
    cfg = make_config({"tex.qp": 40, "gen.channels": "1,2,3,4,5,6", "train.dataset_dir": "/x"})
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert again["gen.channels"] == (1, 2, 3, 4, 5, 6)


def test_parse_comments_and_errors():
    cfg = parse_config("# hello\n tex.qp = 30  # inline\n\n")
    assert cfg["tex.qp"] == 30
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("tex.qp 30")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")
    assert load_config(None) == dict(DEFAULTS)
