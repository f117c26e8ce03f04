"""Training objectives: reconstruction, SSIM, feature matching, least-squares
adversarial, KL prior and latent regression terms."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


@dataclass
class LossWeights:
    gan: float = 1.0
    rec: float = 10.0
    ssim: float = 0.25
    vgg: float = 0.2
    latent: float = 1.0
    kl: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be nonnegative")

    @classmethod
    def from_config(cls, cfg):
        return cls(**{f.name: float(cfg[f"loss.{f.name}"]) for f in fields(cls)})


def _check_same(x, y):
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")


def rec_loss(x, x_hat):
    """Mean absolute error over all pixels and channels."""
    _check_same(x, x_hat)
    return (x - x_hat).abs().mean()


def _gaussian_window(dtype, device):
    coords = torch.arange(SSIM_WINDOW, dtype=torch.float64) - (SSIM_WINDOW - 1) / 2
    g = torch.exp(-(coords ** 2) / (2 * SSIM_SIGMA ** 2))
    g = g / g.sum()
    return torch.outer(g, g).to(dtype=dtype, device=device)[None, None]


def _as_nchw(x):
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.asarray(x, dtype=np.float64))
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:  # H×W×C numpy layout
        return x.permute(2, 0, 1)[None]
    return x


def ssim_map(x, y):
    """Local SSIM of the channel-mean luminance, valid positions only."""
    x, y = _as_nchw(x), _as_nchw(y)
    _check_same(x, y)
    if min(x.shape[-2:]) < SSIM_WINDOW:
        raise ValueError(f"images smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    x = x.mean(dim=1, keepdim=True)
    y = y.mean(dim=1, keepdim=True)
    win = _gaussian_window(x.dtype, x.device)
    mu_x, mu_y = F.conv2d(x, win), F.conv2d(y, win)
    sxx = F.conv2d(x * x, win) - mu_x ** 2
    syy = F.conv2d(y * y, win) - mu_y ** 2
    sxy = F.conv2d(x * y, win) - mu_x * mu_y
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return num / den


def ssim_metric(x, y):
    return ssim_map(x, y).mean()


def ssim_loss(x, y):
    return 1 - ssim_metric(x, y)


class FeaturePyramid(nn.Module):
    """Frozen random-weight three-stage conv net used for feature matching.

    Stands in for pretrained VGG features; the weights are a pure function of
    ``seed``.  Any module returning a list of feature maps can replace it.
    """

    def __init__(self, seed=1234, widths=(32, 64, 128)):
        super().__init__()
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        stages, cin = [], 3
        for i, w in enumerate(widths):
            conv = nn.Conv2d(cin, w, 3, stride=1 if i == 0 else 2, padding=1)
            fan_in = cin * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
                conv.bias.zero_()
            stages.append(conv)
            cin = w
        self.stages = nn.ModuleList(stages)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x):
        feats, h = [], x * 2 - 1
        for conv in self.stages:
            h = F.relu(conv(h))
            feats.append(h)
        return feats


def feature_level_loss(fa, fb):
    return (fa - fb).abs().mean()


def perceptual_loss(x, x_hat, feature_net):
    """Sum over pyramid levels of mean absolute feature differences."""
    _check_same(x, x_hat)
    return sum(feature_level_loss(a, b) for a, b in zip(feature_net(x), feature_net(x_hat)))


def _mean_over_scales(scores, fn):
    if isinstance(scores, torch.Tensor):
        scores = [scores]
    return sum(fn(s).mean() for s in scores) / len(scores)


def gan_losses(real_scores, fake_scores):
    """Least-squares adversarial objectives ``(d_loss, g_loss)``.

    ``real_scores`` may be ``None`` when only the generator term is needed.
    """
    g_loss = 0.5 * _mean_over_scales(fake_scores, lambda f: (f - 1) ** 2)
    if real_scores is None:
        return None, g_loss
    d_loss = (0.5 * _mean_over_scales(real_scores, lambda r: (r - 1) ** 2)
              + 0.5 * _mean_over_scales(fake_scores, lambda f: f ** 2))
    return d_loss, g_loss


def kl_loss(post):
    """KL divergence from a diagonal Gaussian posterior to N(0, I), batch-averaged."""
    mu, logvar = post.mu, post.logvar
    kl = 0.5 * (mu ** 2 + torch.exp(logvar) - logvar - 1).sum(dim=-1)
    return kl.mean()


def latent_regression_loss(z, x_hat, encoder):
    """L1 between a latent and the posterior mean re-extracted from its rendering."""
    return (z - encoder(x_hat).mu).abs().mean()


TERMS = ("gan", "rec", "vgg", "ssim", "kl", "latent")


def total_loss(terms, weights):
    """Weighted sum of the six generator/encoder terms keyed as in ``TERMS``."""
    return sum(getattr(weights, name) * terms[name] for name in TERMS)
