"""Hierarchical fusion generator and the conditional multi-scale discriminator.

The generator starts from a 2×2 feature map computed from the structural
map alone, then doubles resolution k times.  Each fusion block concatenates
the resized structural map to its upsampled input and runs three
AdaIN-modulated convolutions whose affine parameters come from the texture
latent.  Every block also emits an RGB image; these are summed coarse to
fine with bilinear upsampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint

HFG_MAGIC = b"HFG1"
ADAIN_EPS = 1e-8
DESK_CHANNELS = (256, 256, 128, 128, 64, 64)


@dataclass
class GeneratorConfig:
    k: int = 5
    channels: tuple = DESK_CHANNELS
    d: int = 64

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.k < 1:
            raise ValueError("generator needs at least one fusion block")
        if len(self.channels) != self.k + 1:
            raise ValueError(f"need k+1={self.k + 1} channel counts, got {len(self.channels)}")

    @property
    def resolution(self):
        return 2 ** (self.k + 1)

    @classmethod
    def for_blocks(cls, k, d=64):
        """Channel schedule for an arbitrary block count: the desk schedule,
        padded with 256 at the coarse end or truncated from it."""
        tail = list(DESK_CHANNELS[-(k + 1):])
        return cls(k, [256] * (k + 1 - len(tail)) + tail, d)


def adain(a, alpha, beta, eps=ADAIN_EPS):
    """Adaptive instance normalisation of (N, C, H, W) activations.

    Each channel is standardised over its spatial positions (population
    standard deviation) and then scaled by ``alpha`` and shifted by ``beta``,
    both of shape (N, C) or (C,).  Constant channels map exactly to ``beta``.
    """
    if a.dim() != 4:
        raise ValueError(f"expected (N, C, H, W) activations, got {tuple(a.shape)}")
    n, c = a.shape[:2]
    alpha = alpha.reshape(-1, alpha.shape[-1])
    beta = beta.reshape(-1, beta.shape[-1])
    if alpha.shape[-1] != c or beta.shape[-1] != c:
        raise ValueError(f"affine params have {alpha.shape[-1]}/{beta.shape[-1]} channels, tensor has {c}")
    var, mean = torch.var_mean(a, dim=(2, 3), correction=0, keepdim=True)
    flat = a.flatten(2)
    constant = flat.amax(dim=2) == flat.amin(dim=2)
    sigma = var[:, :, 0, 0].clamp_min(1e-30).sqrt()
    scale = torch.where(constant, torch.zeros_like(sigma), alpha / (sigma + eps))
    return (a - mean) * scale[:, :, None, None] + beta[:, :, None, None]


class AffineHead(nn.Module):
    """Linear map from the texture latent to per-channel (alpha, beta)."""

    def __init__(self, d, channels):
        super().__init__()
        self.channels = channels
        self.alpha = nn.Linear(d, channels)
        self.beta = nn.Linear(d, channels)
        nn.init.ones_(self.alpha.bias)
        nn.init.zeros_(self.beta.bias)

    def forward(self, z):
        return self.alpha(z), self.beta(z)


def resize_structure(s, size):
    """Area-resize an (N, 1, H, W) structural map to ``size``."""
    if s.shape[-2:] == tuple(size):
        return s
    return F.adaptive_avg_pool2d(s, size)


class FusionBlock(nn.Module):
    def __init__(self, cin, cout, d):
        super().__init__()
        self.cin, self.cout = cin, cout
        width = cin + 1  # features plus the structural map
        self.heads = nn.ModuleList([AffineHead(d, width), AffineHead(d, cout), AffineHead(d, cout)])
        self.convs = nn.ModuleList([
            nn.Conv2d(width, cout, 3, padding=1),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.Conv2d(cout, cout, 3, padding=1),
        ])
        self.skip = nn.Conv2d(width, cout, 1) if width != cout else nn.Identity()

    def forward(self, prev, s, z):
        if prev.shape[1] != self.cin:
            raise ValueError(f"block expects {self.cin} input channels, got {prev.shape[1]}")
        if z.shape[-1] != self.heads[0].alpha.in_features:
            raise ValueError(f"latent length {z.shape[-1]} does not match block")
        x = F.interpolate(prev, scale_factor=2, mode="nearest")
        h = torch.cat([x, resize_structure(s, x.shape[-2:])], dim=1)
        skip = self.skip(h)
        for j, (head, conv) in enumerate(zip(self.heads, self.convs)):
            alpha, beta = head(z)
            h = conv(adain(h, alpha, beta))
            if j < 2:
                h = F.leaky_relu(h, 0.2)
        return F.leaky_relu(h + skip, 0.2)


class Generator(nn.Module):
    def __init__(self, cfg=None):
        super().__init__()
        cfg = cfg or GeneratorConfig()
        self.cfg = cfg
        c = cfg.channels
        self.initial = nn.Conv2d(1, c[0], 3, padding=1)
        self.blocks = nn.ModuleList(FusionBlock(c[i - 1], c[i], cfg.d) for i in range(1, cfg.k + 1))
        self.to_rgb = nn.ModuleList(nn.Conv2d(c[i], 3, 3, padding=1) for i in range(cfg.k + 1))

    def forward(self, z, s, return_pyramid=False):
        """Render ``z`` (N, d) onto structural maps ``s`` (N, 1, R, R).

        Returns images in [0, 1] of shape (N, 3, R, R), R = 2**(k+1).  With
        ``return_pyramid`` also returns the per-level RGB terms and running sums.
        """
        res = self.cfg.resolution
        if s.shape[-2:] != (res, res) or s.shape[1] != 1:
            raise ValueError(f"structural map must be (N, 1, {res}, {res}), got {tuple(s.shape)}")
        if z.shape[-1] != self.cfg.d:
            raise ValueError(f"latent length {z.shape[-1]} != configured d={self.cfg.d}")
        a = F.leaky_relu(self.initial(F.adaptive_avg_pool2d(s, 2)), 0.2)
        rgb_terms = [self.to_rgb[0](a)]
        sums = [rgb_terms[0]]
        for i, block in enumerate(self.blocks, 1):
            a = block(a, s, z)
            b = self.to_rgb[i](a)
            up = F.interpolate(sums[-1], scale_factor=2, mode="bilinear", align_corners=False)
            rgb_terms.append(b)
            sums.append(b + up)
        out = (torch.tanh(sums[-1]) + 1) / 2
        if return_pyramid:
            return out, rgb_terms, sums
        return out


class _DiscriminatorScale(nn.Module):
    def __init__(self, cin=4, widths=(64, 128, 256, 256)):
        super().__init__()
        layers = []
        for w in widths:
            layers += [nn.Conv2d(cin, w, 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
            cin = w
        layers.append(nn.Conv2d(cin, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class Discriminator(nn.Module):
    """Two-scale patch discriminator conditioned on the structural map.

    Small images get fewer stride-2 stages so the half-scale branch still
    ends on at least a 2x2 score map.
    """

    def __init__(self, widths=(64, 128, 256, 256), image_size=64):
        super().__init__()
        depth = max(1, min(len(widths), int(image_size).bit_length() - 3))
        self.widths = tuple(widths)[:depth]
        self.image_size = image_size
        self.scales = nn.ModuleList([_DiscriminatorScale(4, self.widths), _DiscriminatorScale(4, self.widths)])

    def forward(self, img, s):
        if img.shape[-2:] != s.shape[-2:] or img.shape[0] != s.shape[0]:
            raise ValueError(f"image {tuple(img.shape)} and map {tuple(s.shape)} differ in size")
        x = torch.cat([img, s.to(img.dtype)], dim=1)
        scores = [self.scales[0](x)]
        scores.append(self.scales[1](F.avg_pool2d(x, 2)))
        return scores


def generate(generator, z, s):
    """Single-image inference: numpy/torch latent and H×W map -> H×W×3 numpy image."""
    z = torch.as_tensor(z, dtype=torch.float32).reshape(1, -1)
    s = torch.as_tensor(s, dtype=torch.float32)[None, None]
    with torch.no_grad():
        out = generator(z, s)
    return out[0].permute(1, 2, 0).numpy()


def discriminate(discriminator, img, s):
    img = torch.as_tensor(img, dtype=torch.float32).permute(2, 0, 1)[None]
    s = torch.as_tensor(s, dtype=torch.float32)[None, None]
    with torch.no_grad():
        return [m[0, 0].numpy() for m in discriminator(img, s)]


def save_hfgan(path, generator, discriminator=None):
    cfg = generator.cfg
    meta = {"k": cfg.k, "d": cfg.d, "channels": list(cfg.channels)}
    state = {f"gen.{k}": v for k, v in generator.state_dict().items()}
    if discriminator is not None:
        meta["dis_widths"] = list(discriminator.widths)
        meta["dis_image_size"] = discriminator.image_size
        state.update({f"dis.{k}": v for k, v in discriminator.state_dict().items()})
    checkpoint.save(path, HFG_MAGIC, meta, state)


def load_hfgan(path):
    """Return ``(generator, discriminator_or_None)`` from an HFG1 blob."""
    meta, state = checkpoint.load(path, HFG_MAGIC)
    gen = Generator(GeneratorConfig(meta["k"], meta["channels"], meta["d"]))
    gen.load_state_dict({k[4:]: v for k, v in state.items() if k.startswith("gen.")})
    gen.eval()
    dis = None
    if "dis_widths" in meta:
        dis = Discriminator(meta["dis_widths"], meta.get("dis_image_size", 64))
        dis.load_state_dict({k[4:]: v for k, v in state.items() if k.startswith("dis.")})
        dis.eval()
    return gen, dis
