import numpy as np
import pytest
import torch
from skimage.metrics import structural_similarity

from concodec.losses import (
    FeaturePyramid, LossWeights, TERMS, gan_losses, kl_loss, latent_regression_loss, perceptual_loss,
    rec_loss, ssim_loss, ssim_map, ssim_metric, total_loss,
)
from concodec.texcodec import PosteriorGaussian, TextureEncoder
from gradcheck import fd_check


def test_kl_exact_value():
    post = PosteriorGaussian(torch.ones(1, 64), torch.zeros(1, 64))
    assert float(kl_loss(post)) == 32.0
    assert float(kl_loss(PosteriorGaussian(torch.zeros(3, 64), torch.zeros(3, 64)))) == 0.0


def test_kl_matches_monte_carlo():
    g = torch.Generator().manual_seed(0)
    mu = torch.randn(1, 6, generator=g, dtype=torch.float64)
    logvar = torch.randn(1, 6, generator=g, dtype=torch.float64) * 0.5
    closed = float(kl_loss(PosteriorGaussian(mu, logvar)))
    n = 10 ** 6
    eps = torch.randn(n, 6, generator=g, dtype=torch.float64)
    z = mu + torch.exp(logvar / 2) * eps
    log_q = (-0.5 * eps ** 2 - 0.5 * logvar).sum(dim=1)
    log_p = (-0.5 * z ** 2).sum(dim=1)
    mc = float((log_q - log_p).mean())
    assert mc == pytest.approx(closed, rel=1e-2)


def _ssim_reference(x, y):
    """Plain-loop SSIM: channel-mean gray, 11x11 Gaussian window, valid region."""
    x, y = x.mean(axis=2), y.mean(axis=2)
    c = np.arange(11) - 5
    g = np.exp(-c ** 2 / (2 * 1.5 ** 2))
    w = np.outer(g, g) / np.outer(g, g).sum()
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            a, b = x[i:i + 11, j:j + 11], y[i:i + 11, j:j + 11]
            ma, mb = (w * a).sum(), (w * b).sum()
            va = (w * (a - ma) ** 2).sum()
            vb = (w * (b - mb) ** 2).sum()
            cov = (w * (a - ma) * (b - mb)).sum()
            c1, c2 = 0.01 ** 2, 0.03 ** 2
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_matches_independent_implementations(rng):
    x = rng.random((24, 20, 3))
    y = np.clip(x + rng.normal(scale=0.1, size=x.shape), 0, 1)
    ours = float(ssim_metric(x, y))
    assert ours == pytest.approx(_ssim_reference(x, y), abs=1e-4)
    sk = structural_similarity(
        x.mean(axis=2), y.mean(axis=2), data_range=1.0, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False)
    assert ours == pytest.approx(sk, abs=1e-4)


def test_ssim_identity_and_layouts(rng):
    x = rng.random((16, 16, 3))
    assert float(ssim_metric(x, x)) == pytest.approx(1.0, abs=1e-12)
    t = torch.from_numpy(x).permute(2, 0, 1)[None]
    assert float(ssim_metric(t, t * 0.5)) == pytest.approx(float(ssim_metric(x, x * 0.5)))
    assert ssim_map(x, x).shape == (1, 1, 6, 6)
    with pytest.raises(ValueError):
        ssim_metric(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_gan_losses_lsgan_values():
    real = [torch.ones(1, 1, 2, 2), torch.ones(1, 1, 1, 1)]
    fake = [torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 1, 1)]
    d, g = gan_losses(real, fake)
    assert float(d) == 0.0 and float(g) == 0.5
    d, g = gan_losses(fake, real)
    assert float(d) == 1.0 and float(g) == 0.0
    assert gan_losses(None, fake)[0] is None


def test_rec_loss_value():
    a, b = torch.zeros(1, 3, 2, 2), torch.full((1, 3, 2, 2), 0.25)
    assert float(rec_loss(a, b)) == 0.25
    with pytest.raises(ValueError):
        rec_loss(a, torch.zeros(1, 3, 2, 3))


def test_total_loss_weights():
    terms = {k: torch.tensor(1.0) for k in TERMS}
    w = LossWeights()
    assert float(total_loss(terms, w)) == pytest.approx(1 + 10 + 0.25 + 0.2 + 1 + 0.01)


def test_feature_pyramid_is_frozen_and_seeded():
    a, b = FeaturePyramid(seed=5), FeaturePyramid(seed=5)
    x = torch.rand(1, 3, 8, 8)
    assert all(torch.equal(p, q) for p, q in zip(a(x), b(x)))
    assert not any(p.requires_grad for p in a.parameters())
    assert float(perceptual_loss(x, x, a)) == 0.0


# -- gradient checks on 4x4 inputs ---------------------------------------------

def _rand(*shape, seed=0):
    return torch.rand(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def test_grad_rec():
    target = _rand(1, 3, 4, 4, seed=1)
    fd_check(lambda x: rec_loss(target, x), _rand(1, 3, 4, 4))


def test_grad_perceptual():
    net = FeaturePyramid().double()
    target = _rand(1, 3, 4, 4, seed=1)
    fd_check(lambda x: perceptual_loss(target, x, net), _rand(1, 3, 4, 4))


def test_grad_gan_terms():
    real = _rand(1, 1, 4, 4, seed=1)
    fd_check(lambda f: gan_losses([real], [f])[0], _rand(1, 1, 4, 4) * 2 - 1)
    fd_check(lambda f: gan_losses(None, [f, f[..., :2, :2]])[1], _rand(1, 1, 4, 4) * 2 - 1)


def test_grad_kl():
    logvar = _rand(1, 16, seed=1) - 0.5
    fd_check(lambda m: kl_loss(PosteriorGaussian(m.view(1, 16), logvar)), _rand(4, 4) - 0.5)
    mu = _rand(1, 16, seed=2)
    fd_check(lambda lv: kl_loss(PosteriorGaussian(mu, lv.view(1, 16))), _rand(4, 4) - 0.5)


def test_grad_latent_regression():
    torch.manual_seed(0)
    enc = TextureEncoder(d=8, image_size=4, widths=(4, 4)).double()
    z = _rand(1, 8, seed=3)
    fd_check(lambda x: latent_regression_loss(z, x, enc), _rand(1, 3, 4, 4))


def test_grad_ssim():
    # SSIM needs at least one full 11x11 window
    target = _rand(1, 3, 12, 12, seed=1)
    fd_check(lambda x: ssim_loss(target, x), _rand(1, 3, 12, 12))
