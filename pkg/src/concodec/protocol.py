"""The desk-scale reference run: 500 toy images at 64×64, 2,000 steps with
the default loss weights and optimiser settings.

Trained models are cached in a directory (with a marker file recording the
config hash) so that tests and demos share one run.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import config as config_mod
from .bitstream import Codec
from .dataset import toy_corpus
from .training import split_indices, train

log = logging.getLogger(__name__)

SMOKE_IMAGES = 500
SMOKE_SEED = 0
MARKER = "DONE.json"


def smoke_config(**overrides):
    base = {"train.steps": 2000, "train.eval_every": 20, "train.checkpoint_every": 500}
    base.update(overrides)
    return config_mod.make_config(base)


def smoke_dataset(n=SMOKE_IMAGES, seed=SMOKE_SEED):
    return toy_corpus(n, seed, 64)


def config_hash(cfg, n, seed):
    text = config_mod.dump_config(cfg) + f"n={n}\nseed={seed}\n"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def read_validation(run_dir):
    rows = np.loadtxt(Path(run_dir) / "validation.csv", delimiter=",", skiprows=1, ndmin=2)
    return rows[:, 0].astype(int), rows[:, 1]


def read_metrics(run_dir):
    path = Path(run_dir) / "metrics.csv"
    names = path.read_text().splitlines()[0].split(",")
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: rows[:, i] for i, name in enumerate(names)}


def ensure_smoke_run(run_dir, cfg=None, n=SMOKE_IMAGES, seed=SMOKE_SEED, progress=None):
    """Train the reference models into ``run_dir`` unless a matching run exists.

    Returns ``(codec, info)`` where ``info`` holds the dataset split and timing.
    """
    cfg = cfg or smoke_config()
    run_dir = Path(run_dir)
    key = config_hash(cfg, n, seed)
    marker = run_dir / MARKER
    if marker.exists():
        info = json.loads(marker.read_text())
        if info.get("hash") == key:
            return Codec.load(run_dir), info
        log.info("cached run at %s has a different config; retraining", run_dir)
    images, _ = smoke_dataset(n, seed)
    t0 = time.time()
    result = train(cfg, images, out_dir=run_dir, progress=progress)
    info = {
        "hash": key,
        "n": n,
        "seed": seed,
        "seconds": time.time() - t0,
        "train_index": result.train_index.tolist(),
        "val_index": result.val_index.tolist(),
    }
    marker.write_text(json.dumps(info))
    return Codec.load(run_dir), info


def held_out(info, n=SMOKE_IMAGES, seed=SMOKE_SEED):
    """Images and analytic maps of the validation split of a smoke run."""
    images, maps = smoke_dataset(n, seed)
    idx = np.asarray(info["val_index"])
    return images[idx], maps[idx]


def expected_split(n=SMOKE_IMAGES, seed=SMOKE_SEED, cfg=None):
    cfg = cfg or smoke_config()
    return split_indices(n, cfg["train.val_fraction"], cfg["train.seed"])
