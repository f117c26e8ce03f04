"""Flat ``key = value`` configuration files.

Every tunable in the codec and the training harness has a dotted key and a
typed default here.  Files may override any subset; unknown keys are an
error so typos do not pass silently.
"""
from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def _floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


DEFAULTS = {
    # edge extraction / structure layer
    "edge.blur_sigma": 1.4,
    "edge.low": 0.1,
    "edge.high": 0.2,
    "binarize.threshold": 0.5,
    "structure.scale": 4,
    "structure.down_threshold": 0.15,
    # texture layer
    "tex.d": 64,
    "tex.qp": 51,
    # generator
    "gen.k": 5,
    "gen.channels": (256, 256, 128, 128, 64, 64),
    # training
    "train.batch_size": 16,
    "train.lr": 0.0002,
    "train.adam_betas": (0.5, 0.999),
    "train.steps": 2000,
    "train.dataset_dir": "",
    "train.image_size": 64,
    "train.seed": 0,
    "train.val_fraction": 0.1,
    "train.eval_every": 100,
    "train.checkpoint_every": 500,
    "train.clip_norm": 10.0,
    "train.sr_steps": 3000,
    "train.sr_lr": 0.001,
    "train.sr_batch_size": 32,
    "train.workers": 1,
    # loss weights
    "loss.gan": 1.0,
    "loss.rec": 10.0,
    "loss.ssim": 0.25,
    "loss.vgg": 0.2,
    "loss.latent": 1.0,
    "loss.kl": 0.01,
}

_PARSERS = {
    "gen.channels": _ints,
    "train.adam_betas": _floats,
    "train.dataset_dir": str,
}


def _coerce(key, value):
    if key in _PARSERS:
        return _PARSERS[key](value)
    default = DEFAULTS[key]
    if isinstance(default, bool):
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def make_config(overrides=None):
    """Return a full config dict: defaults updated with ``overrides``."""
    cfg = dict(DEFAULTS)
    if not overrides:
        return cfg
    unknown = sorted(k for k in overrides if k not in DEFAULTS)
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    for key, value in overrides.items():
        try:
            cfg[key] = _coerce(key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return cfg


def parse_config(text):
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        overrides[key] = value
    return make_config(overrides)


def load_config(path=None):
    if path is None:
        return make_config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg):
    lines = []
    for key in DEFAULTS:
        value = cfg[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
