"""Raster conventions shared by every layer of the codec.

Images are ``float32`` arrays of shape ``(H, W, 3)`` with values in ``[0, 1]``.
Structural maps are ``uint8`` arrays of shape ``(H, W)`` holding 0 or 1, where
1 marks an edge pixel.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import FormatError

_8BIT_MODES = {"1", "L", "LA", "P", "RGB", "RGBA"}


def load_image(path):
    """Read an 8-bit raster (PNG or anything Pillow opens) as an RGB float image."""
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode not in _8BIT_MODES:
                raise FormatError(f"{path}: unsupported pixel mode {im.mode!r} (8-bit only)")
            rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    except FormatError:
        raise
    except OSError as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return rgb / np.float32(255.0)


def load_map(path):
    """Read a grayscale PNG structural map; any nonzero pixel is an edge."""
    img = load_image(path)
    return (img.mean(axis=2) >= 0.5).astype(np.uint8)


def to_uint8(data):
    data = np.asarray(data, dtype=np.float64)
    return np.clip(np.rint(data * 255.0), 0, 255).astype(np.uint8)


def save_image(path, data):
    """Write an image (H×W×3) or a map (H×W or H×W×1) as an 8-bit PNG."""
    data = np.asarray(data)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    if data.dtype == np.uint8 and data.max(initial=0) <= 1:
        data = data.astype(np.float32)
    PILImage.fromarray(to_uint8(data)).save(Path(path), format="PNG")


def check_image(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an H×W×3 image, got shape {img.shape}")
    h, w = img.shape[:2]
    if h < 8 or w < 8 or h % 2 or w % 2:
        raise ValueError(f"image dims must be even and >= 8, got {h}x{w}")
    if img.size and (img.min() < 0 or img.max() > 1):
        raise ValueError("image values must lie in [0, 1]")
    return img


def to_gray(img):
    img = np.asarray(img, dtype=np.float64)
    return img.mean(axis=2) if img.ndim == 3 else img


# -- edges -------------------------------------------------------------------

# neighbour offsets (dy, dx) along the quantised gradient direction
_DIRECTIONS = ((0, 1), (1, 1), (1, 0), (1, -1))


def _gradients(img, blur_sigma):
    """Per-pixel gradient of the channel with the strongest response."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    best_gx = best_gy = best_mag = None
    for c in range(img.shape[2]):
        chan = img[:, :, c]
        if blur_sigma > 0:
            chan = ndimage.gaussian_filter(chan, blur_sigma, mode="nearest")
        gx = ndimage.sobel(chan, axis=1, mode="nearest") / 4.0
        gy = ndimage.sobel(chan, axis=0, mode="nearest") / 4.0
        mag = np.hypot(gx, gy)
        if best_mag is None:
            best_gx, best_gy, best_mag = gx, gy, mag
        else:
            pick = mag > best_mag
            best_gx = np.where(pick, gx, best_gx)
            best_gy = np.where(pick, gy, best_gy)
            best_mag = np.where(pick, mag, best_mag)
    return best_gx, best_gy, best_mag


def extract_edges(img, blur_sigma=1.4, low=0.1, high=0.2):
    """Canny edge map of an image after Gaussian blurring.

    Gradients are Sobel responses scaled so an unblurred unit step has
    magnitude 1; on colour input the strongest channel wins at each pixel.
    Non-maximum suppression keeps the first of two equal neighbours, so a
    symmetric step gives a single-pixel line.
    """
    if not 0 <= low < high:
        raise ValueError(f"need 0 <= low < high, got low={low}, high={high}")
    if blur_sigma < 0:
        raise ValueError("blur_sigma must be >= 0")
    gx, gy, mag = _gradients(img, blur_sigma)

    # quantise direction into 0, 45, 90, 135 degrees
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = (np.floor((angle + 22.5) / 45.0).astype(int)) % 4

    padded = np.pad(mag, 1, mode="constant")
    h, w = mag.shape
    keep = np.zeros(mag.shape, dtype=bool)
    for k, (dy, dx) in enumerate(_DIRECTIONS):
        ahead = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        behind = padded[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        keep |= (sector == k) & (mag > behind) & (mag >= ahead)
    thin = np.where(keep, mag, 0.0)

    weak = thin > low
    strong = thin > high
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return np.zeros(mag.shape, dtype=np.uint8)
    has_strong = np.zeros(count + 1, dtype=bool)
    has_strong[np.unique(labels[strong])] = True
    has_strong[0] = False
    return has_strong[labels].astype(np.uint8)


def binarize(data, threshold=0.5):
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(data) >= threshold).astype(np.uint8)


# -- Lanczos resampling ----------------------------------------------------

LANCZOS_A = 3


def lanczos_kernel(x, a=LANCZOS_A):
    x = np.asarray(x, dtype=np.float64)
    out = np.sinc(x) * np.sinc(x / a)
    return np.where(np.abs(x) < a, out, 0.0)


def _resample_matrix(n_in, n_out, a=LANCZOS_A):
    """Row-normalised (n_out, n_in) Lanczos weights, pixel-centre aligned."""
    scale = n_out / n_in
    stretch = min(scale, 1.0)          # widen the kernel when shrinking
    support = a / stretch
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    idx = np.arange(n_in)
    dist = centers[:, None] - idx[None, :]
    weights = lanczos_kernel(dist * stretch, a)
    weights[np.abs(dist) >= support] = 0.0
    weights /= weights.sum(axis=1, keepdims=True)
    return weights


def lanczos_resample(data, scale_num, scale_den):
    """Resample a raster by ``scale_num/scale_den`` with a Lanczos-3 kernel.

    Separable, pixel-centre aligned; taps falling outside the raster are
    dropped and the remaining weights renormalised.  The result is clamped
    to the input's value range.
    """
    data = np.asarray(data, dtype=np.float64)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[:, :, None]
    if data.ndim != 3:
        raise ValueError(f"expected H×W or H×W×C raster, got shape {data.shape}")
    h, w = data.shape[:2]
    if scale_num <= 0 or scale_den <= 0:
        raise ValueError("scale factors must be positive")
    new_h, new_w = h * scale_num / scale_den, w * scale_num / scale_den
    if new_h != math.floor(new_h) or new_w != math.floor(new_w) or new_h < 1 or new_w < 1:
        raise ValueError(f"{h}x{w} scaled by {scale_num}/{scale_den} is not an integer size")
    new_h, new_w = int(new_h), int(new_w)

    if (new_h, new_w) == (h, w):
        out = data.copy()
    else:
        rows = _resample_matrix(h, new_h)
        cols = _resample_matrix(w, new_w)
        out = np.einsum("ij,jkc->ikc", rows, data)
        out = np.einsum("lk,ikc->ilc", cols, out)
        out = np.clip(out, data.min(), data.max())
    return out[:, :, 0] if squeeze else out


def resize_map(mask, size):
    """Nearest-neighbour resize of a binary map to ``size`` (h, w)."""
    mask = np.asarray(mask)
    h, w = mask.shape[:2]
    ys = (np.arange(size[0]) * h // size[0])
    xs = (np.arange(size[1]) * w // size[1])
    return mask[ys][:, xs]
