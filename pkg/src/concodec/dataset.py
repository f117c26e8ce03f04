"""Procedural toy corpus and image-folder ingestion.

Toy images hold 1-4 anti-aliased ellipses or polygons with HSV fills, some
striped, over a muted background.  Their structural maps are rendered from
the shape geometry itself, so they are exact and independent of any edge
detector.
"""
from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigError
from .imagecore import load_image, load_map, save_image

SUPERSAMPLE = 4
IMAGE_SUFFIX = "_image.png"
MAP_SUFFIX = "_map.png"


def _hsv(rng, sat=(0.5, 1.0), val=(0.5, 1.0)):
    return np.array(colorsys.hsv_to_rgb(rng.random(), rng.uniform(*sat), rng.uniform(*val)))


def _distinct_hsv(rng, avoid, min_gap=0.45):
    """A saturated colour differing from ``avoid`` by ``min_gap`` in some channel."""
    for _ in range(100):
        color = _hsv(rng)
        if np.abs(color - avoid).max() >= min_gap:
            return color
    return 1.0 - avoid


def _shape_mask(rng, yy, xx, size):
    cy, cx = rng.uniform(0.2, 0.8, 2) * size
    if rng.random() < 0.5:
        ry, rx = rng.uniform(0.1, 0.3, 2) * size
        theta = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    n = int(rng.integers(3, 7))
    radius = rng.uniform(0.12, 0.3) * size
    angles = 2 * np.pi * (np.arange(n) + rng.uniform(-0.3, 0.3, n)) / n + rng.uniform(0, 2 * np.pi)
    px = cx + radius * np.cos(angles)
    py = cy + radius * np.sin(angles)
    # convex polygon (vertices in angular order around the centre): inside all half-planes
    inside = np.ones(yy.shape, dtype=bool)
    for i in range(n):
        x0, y0, x1, y1 = px[i], py[i], px[(i + 1) % n], py[(i + 1) % n]
        inside &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return inside


def render_toy(rng, size=64):
    """Return ``(image, structural_map)`` for one random toy scene."""
    hi = size * SUPERSAMPLE
    coords = (np.arange(hi) + 0.5) / SUPERSAMPLE
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    background = _hsv(rng, sat=(0.0, 0.3), val=(0.3, 0.9))
    canvas = np.broadcast_to(background, (hi, hi, 3)).copy()
    labels = np.zeros((hi, hi), dtype=np.int32)

    for label in range(1, int(rng.integers(1, 5)) + 1):
        mask = _shape_mask(rng, yy, xx, size)
        fill = np.broadcast_to(_distinct_hsv(rng, background), (hi, hi, 3))
        if rng.random() < 0.4:
            period = rng.uniform(4, 10)
            phi = rng.uniform(0, np.pi)
            stripes = np.sin(2 * np.pi * (xx * np.cos(phi) + yy * np.sin(phi)) / period) > 0
            fill = np.where(stripes[..., None], fill, fill * rng.uniform(0.3, 0.7))
        canvas[mask] = fill[mask]
        labels[mask] = label

    image = canvas.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE, 3).mean(axis=(1, 3))
    # label at pixel centres, then mark a pixel where its region differs from a neighbour
    centre = labels[SUPERSAMPLE // 2::SUPERSAMPLE, SUPERSAMPLE // 2::SUPERSAMPLE]
    edges = np.zeros((size, size), dtype=np.uint8)
    edges[:, :-1] |= centre[:, :-1] != centre[:, 1:]
    edges[:-1, :] |= centre[:-1, :] != centre[1:, :]
    return image.astype(np.float32), edges


def toy_sample(index, seed=0, size=64):
    return render_toy(np.random.default_rng([seed, index]), size)


def toy_corpus(n, seed=0, size=64):
    images, maps = zip(*(toy_sample(i, seed, size) for i in range(n)))
    return np.stack(images), np.stack(maps)


def gen_dataset(out_dir, n, seed=0, size=64):
    """Write ``n`` toy (image, map) PNG pairs into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        image, edges = toy_sample(i, seed, size)
        ip, mp = out / f"{i:05d}{IMAGE_SUFFIX}", out / f"{i:05d}{MAP_SUFFIX}"
        save_image(ip, image)
        save_image(mp, edges)
        paths.append((ip, mp))
    return paths


def _fit(img, size):
    h, w = img.shape[:2]
    if (h, w) == (size, size):
        return img
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    crop = img[top:top + side, left:left + side]
    pil = PILImage.fromarray(np.clip(np.rint(crop * 255), 0, 255).astype(np.uint8))
    return np.asarray(pil.resize((size, size), PILImage.LANCZOS), dtype=np.float32) / 255.0


def load_folder(directory, size=64):
    """Load a folder of images as ``(images, maps_or_None)``.

    Folders written by :func:`gen_dataset` yield their maps too; any other
    folder of PNG/JPEG files is centre-cropped and resized to ``size``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"dataset directory not found: {directory}")
    paired = sorted(directory.glob(f"*{IMAGE_SUFFIX}"))
    if paired:
        images = np.stack([_fit(load_image(p), size) for p in paired])
        map_paths = [p.with_name(p.name[: -len(IMAGE_SUFFIX)] + MAP_SUFFIX) for p in paired]
        maps = None
        if all(p.exists() for p in map_paths):
            maps = np.stack([load_map(p) for p in map_paths])
            if maps.shape[1:] != images.shape[1:3]:
                maps = None
        return images, maps
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")
    )
    if not files:
        raise ConfigError(f"no images found in {directory}")
    return np.stack([_fit(load_image(p), size) for p in files]), None
