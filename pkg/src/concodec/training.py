"""Joint training of texture encoder, fusion generator and discriminator,
plus the BCE-trained edge super-resolution model."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import config as config_mod
from .errors import CodecError, ConfigError
from .hfgan import Discriminator, Generator, GeneratorConfig, save_hfgan
from .imagecore import binarize, extract_edges
from .losses import (
    FeaturePyramid, LossWeights, TERMS, gan_losses, kl_loss, latent_regression_loss,
    perceptual_loss, rec_loss, ssim_loss, total_loss,
)
from .structcodec import EdgeSRModel, bce_loss, downsample_map, save_sr_model
from .texcodec import TextureEncoder, dequantize, quantize, save_encoder

log = logging.getLogger(__name__)

ENCODER_FILE = "texenc.tex"
GENERATOR_FILE = "hfgan.hfg"
SR_FILE = "edge_sr.esr"
CONFIG_FILE = "codec.cfg"
METRICS_FILE = "metrics.csv"
VALIDATION_FILE = "validation.csv"


class TrainingError(CodecError, RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr: float = 0.0002
    adam_betas: tuple = (0.5, 0.999)
    steps: int = 2000
    dataset_dir: str = ""
    image_size: int = 64
    seed: int = 0
    val_fraction: float = 0.1
    eval_every: int = 100
    checkpoint_every: int = 500
    clip_norm: float = 10.0
    sr_steps: int = 3000
    sr_lr: float = 0.001
    sr_batch_size: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        self.adam_betas = tuple(self.adam_betas)

    @classmethod
    def from_config(cls, cfg):
        kw = {name: cfg[f"train.{name}"] for name in cls.__dataclass_fields__}
        return cls(**kw)


def edge_maps(images, cfg=None):
    cfg = cfg or config_mod.make_config()
    return np.stack([
        extract_edges(im, cfg["edge.blur_sigma"], cfg["edge.low"], cfg["edge.high"]) for im in images
    ])


def _nchw(images):
    return torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32)).permute(0, 3, 1, 2)


def _maps(maps):
    return torch.from_numpy(np.ascontiguousarray(maps, dtype=np.float32))[:, None]


# -- edge super-resolution ---------------------------------------------------

def train_edge_sr(maps, steps=600, lr=0.002, batch_size=16, seed=0, down_threshold=0.15,
                  model=None):
    """Fit an :class:`EdgeSRModel` on (downsampled, original) map pairs with BCE."""
    if len(maps) == 0:
        raise ConfigError("no structural maps to train on")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = model or EdgeSRModel()
    low = np.stack([downsample_map(m, model.scale, down_threshold) for m in maps])
    low_t, high_t = _maps(low), _maps(maps)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    model.train()
    history = []
    for _ in range(steps):
        idx = rng.integers(0, len(maps), batch_size)
        probs = model.probabilities(low_t[idx])
        loss = bce_loss(probs, high_t[idx]) / batch_size
        if not torch.isfinite(loss):
            raise TrainingError("edge SR loss became non-finite")
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(loss.item())
    model.eval()
    return model, history


def restore_maps(model, maps, down_threshold=0.15, threshold=0.5):
    """Decoder-side structural maps: downsample, then learned upsampling."""
    low = np.stack([downsample_map(m, model.scale, down_threshold) for m in maps])
    with torch.no_grad():
        probs = model.probabilities(_maps(low))[:, 0].numpy()
    return binarize(probs, threshold)


# -- joint encoder / generator / discriminator training ----------------------

class Trainer:
    """Holds the three networks, their optimisers and the frozen feature net."""

    def __init__(self, train_cfg, weights, gen_cfg, seed=0):
        torch.manual_seed(seed)
        self.cfg = train_cfg
        self.weights = weights
        self.encoder = TextureEncoder(gen_cfg.d, gen_cfg.resolution)
        self.generator = Generator(gen_cfg)
        self.discriminator = Discriminator(image_size=gen_cfg.resolution)
        self.features = FeaturePyramid(seed=1234)
        betas = train_cfg.adam_betas
        self.opt_g = torch.optim.Adam(
            list(self.encoder.parameters()) + list(self.generator.parameters()),
            lr=train_cfg.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=train_cfg.lr, betas=betas)
        self.noise_gen = torch.Generator().manual_seed(seed + 1)

    def forward(self, x, s_dec):
        post = self.encoder(x)
        noise = torch.randn(post.mu.shape, generator=self.noise_gen)
        z = post.mu + torch.exp(post.logvar / 2) * noise
        return post, z, self.generator(z, s_dec)

    def discriminator_loss(self, x, x_hat, s_cond):
        d_loss, _ = gan_losses(self.discriminator(x, s_cond),
                               self.discriminator(x_hat.detach(), s_cond))
        return d_loss

    def generator_terms(self, x, x_hat, s_cond, post, z):
        _, g_loss = gan_losses(None, self.discriminator(x_hat, s_cond))
        return {
            "gan": g_loss,
            "rec": rec_loss(x, x_hat),
            "vgg": perceptual_loss(x, x_hat, self.features),
            "ssim": ssim_loss(x, x_hat),
            "kl": kl_loss(post),
            "latent": latent_regression_loss(z, x_hat, self.encoder),
        }

    def compute_terms(self, x, s_cond, s_dec):
        """All six generator-side terms for one minibatch, without updating."""
        post, z, x_hat = self.forward(x, s_dec)
        return self.generator_terms(x, x_hat, s_cond, post, z)

    @staticmethod
    def _check_finite(values):
        bad = [k for k, v in values.items() if not math.isfinite(v)]
        if bad:
            raise TrainingError(f"non-finite loss terms: {', '.join(bad)} ({values})")

    def step(self, x, s_cond, s_dec):
        """One alternating update (discriminator, then encoder + generator)."""
        post, z, x_hat = self.forward(x, s_dec)

        d_loss = self.discriminator_loss(x, x_hat, s_cond)
        self._check_finite({"d_loss": d_loss.item()})
        self.opt_d.zero_grad()
        d_loss.backward(inputs=list(self.discriminator.parameters()))
        self.opt_d.step()

        terms = self.generator_terms(x, x_hat, s_cond, post, z)
        total = total_loss(terms, self.weights)
        values = {k: v.item() for k, v in terms.items()}
        values["d_loss"] = d_loss.item()
        values["total"] = total.item()
        self._check_finite(values)
        params = list(self.encoder.parameters()) + list(self.generator.parameters())
        self.opt_g.zero_grad()
        total.backward(inputs=params)
        if self.cfg.clip_norm:
            torch.nn.utils.clip_grad_norm_(params, self.cfg.clip_norm)
        self.opt_g.step()
        return values

    def reconstruct(self, x, s_dec, qp=51):
        """Test-time path: posterior mean, quantised and dequantised."""
        self.encoder.eval()
        self.generator.eval()
        with torch.no_grad():
            mu = self.encoder(x).mu
            zq = torch.from_numpy(np.stack([dequantize(quantize(m, qp)) for m in mu.numpy()]))
            out = self.generator(zq.float(), s_dec)
        self.encoder.train()
        self.generator.train()
        return out

    def validation_l1(self, x, s_dec, qp=51, batch=32):
        total, n = 0.0, 0
        for i in range(0, len(x), batch):
            xb = x[i:i + batch]
            total += float(rec_loss(xb, self.reconstruct(xb, s_dec[i:i + batch], qp))) * len(xb)
            n += len(xb)
        return total / n


@dataclass
class TrainResult:
    encoder: TextureEncoder
    generator: Generator
    discriminator: Discriminator
    sr_model: EdgeSRModel
    history: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    sr_history: list = field(default_factory=list)
    train_index: np.ndarray = None
    val_index: np.ndarray = None


def split_indices(n, val_fraction, seed):
    perm = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(n * val_fraction))) if n > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def save_checkpoints(out_dir, cfg, result):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_encoder(result.encoder, out / ENCODER_FILE)
    save_hfgan(out / GENERATOR_FILE, result.generator, result.discriminator)
    save_sr_model(result.sr_model, out / SR_FILE)
    (out / CONFIG_FILE).write_text(config_mod.dump_config(cfg))


def train(cfg, images, maps=None, out_dir=None, progress=None):
    """Run the full protocol on ``images`` (N×H×W×3 in [0, 1]).

    ``cfg`` is a flat config dict (see :mod:`concodec.config`).  Structural
    maps default to Canny edges of the images.  The edge upsampler is fitted
    first; the generator is then trained on the maps the decoder will actually
    see, while the discriminator is conditioned on the original maps.
    Metrics are written as CSV into ``out_dir`` when given.
    """
    tcfg = TrainConfig.from_config(cfg)
    weights = LossWeights.from_config(cfg)
    images = np.asarray(images, dtype=np.float32)
    if len(images) == 0:
        raise ConfigError("training dataset is empty")
    size = tcfg.image_size
    if images.shape[1:] != (size, size, 3):
        raise ConfigError(f"images must be {size}x{size}x3, got {images.shape[1:]}")
    gen_cfg = GeneratorConfig(cfg["gen.k"], cfg["gen.channels"], cfg["tex.d"])
    if gen_cfg.resolution != size:
        raise ConfigError(f"gen.k={gen_cfg.k} renders {gen_cfg.resolution}px, image_size is {size}")
    if maps is None:
        maps = edge_maps(images, cfg)
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    train_idx, val_idx = split_indices(len(images), tcfg.val_fraction, tcfg.seed)
    if len(train_idx) == 0:
        raise ConfigError("no training images left after the validation split")

    t0 = time.time()
    sr_model, sr_hist = train_edge_sr(
        maps[train_idx], tcfg.sr_steps, tcfg.sr_lr, tcfg.sr_batch_size, tcfg.seed,
        cfg["structure.down_threshold"])
    log.info("edge SR trained in %.1fs, final BCE %.2f", time.time() - t0, sr_hist[-1] if sr_hist else 0)
    restored = restore_maps(sr_model, maps, cfg["structure.down_threshold"], cfg["binarize.threshold"])

    x_all = _nchw(images)
    s_cond, s_dec = _maps(maps), _maps(restored)
    trainer = Trainer(tcfg, weights, gen_cfg, tcfg.seed)
    result = TrainResult(trainer.encoder, trainer.generator, trainer.discriminator, sr_model,
                         sr_history=sr_hist, train_index=train_idx, val_index=val_idx)
    qp = cfg["tex.qp"]

    metrics_file = val_file = None
    if out:
        metrics_file = open(out / METRICS_FILE, "w", newline="")
        val_file = open(out / VALIDATION_FILE, "w", newline="")
    try:
        mwriter = csv.writer(metrics_file) if metrics_file else None
        vwriter = csv.writer(val_file) if val_file else None
        if mwriter:
            mwriter.writerow(["step", *TERMS, "d_loss", "total"])
            vwriter.writerow(["step", "val_rec"])

        def evaluate(step):
            if len(val_idx) == 0:
                return
            v = trainer.validation_l1(x_all[val_idx], s_dec[val_idx], qp)
            result.validation.append((step, v))
            if vwriter:
                vwriter.writerow([step, f"{v:.6f}"])
                val_file.flush()

        evaluate(0)
        rng = np.random.default_rng(tcfg.seed)
        order, pos = rng.permutation(train_idx), 0
        for step in range(1, tcfg.steps + 1):
            if pos + tcfg.batch_size > len(order):
                order, pos = rng.permutation(train_idx), 0
            idx = order[pos:pos + tcfg.batch_size]
            pos += tcfg.batch_size
            values = trainer.step(x_all[idx], s_cond[idx], s_dec[idx])
            result.history.append(values)
            if mwriter:
                mwriter.writerow([step, *(f"{values[k]:.6f}" for k in (*TERMS, "d_loss", "total"))])
            if step % tcfg.eval_every == 0 or step == tcfg.steps:
                evaluate(step)
                if metrics_file:
                    metrics_file.flush()
            if progress:
                progress(step, values)
            if out and tcfg.checkpoint_every and step % tcfg.checkpoint_every == 0:
                save_checkpoints(out, cfg, result)
    finally:
        if metrics_file:
            metrics_file.close()
            val_file.close()

    trainer.encoder.eval()
    trainer.generator.eval()
    trainer.discriminator.eval()
    if out:
        save_checkpoints(out, cfg, result)
    return result
