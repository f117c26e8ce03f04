"""Structure layer: lossless coding of downsampled edge maps and learned
edge super-resolution.

The map coder is a context-adaptive binary arithmetic coder in the spirit
of JBIG: each pixel is coded with adaptive counts selected by a 10-pixel
causal template (three pixels two rows up, five pixels one row up, two to
the left).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint
from .arith import ArithmeticDecoder, ArithmeticEncoder, pack_bits
from .errors import DecodeError
from .imagecore import binarize, lanczos_resample

SCALE = 4
HEADER = struct.Struct(">HHBI")  # low_h, low_w, scale, bit length
BCE_EPS = 1e-7
SR_MAGIC = b"ESR1"
SR_VERSION = 1

# (dy, dx) of the causal template, most significant bit first
TEMPLATE = (
    (-2, -1), (-2, 0), (-2, 1),
    (-1, -2), (-1, -1), (-1, 0), (-1, 1), (-1, 2),
    (0, -2), (0, -1),
)
N_CONTEXTS = 1 << len(TEMPLATE)
COUNT_LIMIT = 1 << 16


@dataclass(frozen=True)
class StructurePayload:
    encoded_bits: bytes
    low_h: int
    low_w: int
    scale: int = SCALE
    bit_length: int = 0

    def to_bytes(self):
        return HEADER.pack(self.low_h, self.low_w, self.scale, self.bit_length) + self.encoded_bits

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < HEADER.size:
            raise DecodeError("structure payload shorter than its header", offset=len(data))
        low_h, low_w, scale, bit_length = HEADER.unpack_from(data)
        body = data[HEADER.size:]
        need = (bit_length + 7) // 8
        if len(body) < need:
            raise DecodeError(
                f"structure payload truncated: {len(body)} of {need} coded bytes",
                offset=len(data),
            )
        if len(body) > need:
            raise DecodeError("trailing bytes after structure payload", offset=HEADER.size + need)
        if scale not in (1, SCALE):
            raise DecodeError(f"unsupported structure scale {scale}", offset=4)
        return cls(body, low_h, low_w, scale, bit_length)


def _contexts(mask):
    """Template context index for every pixel of a (fully known) map."""
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 4), dtype=np.int64)
    padded[2:, 2:-2] = mask
    ctx = np.zeros((h, w), dtype=np.int64)
    for dy, dx in TEMPLATE:
        ctx = (ctx << 1) | padded[2 + dy:2 + dy + h, 2 + dx:2 + dx + w]
    return ctx


def _bump(counts, ctx, bit):
    c = counts[ctx]
    c[bit] += 1
    if c[0] + c[1] > COUNT_LIMIT:
        c[0] = (c[0] + 1) >> 1
        c[1] = (c[1] + 1) >> 1


def _encode_bits(mask):
    ctx = _contexts(mask).ravel().tolist()
    flat = mask.ravel().tolist()
    counts = [[1, 1] for _ in range(N_CONTEXTS)]
    enc = ArithmeticEncoder()
    for c, bit in zip(ctx, flat):
        c0, c1 = counts[c]
        enc.encode_bit(bit, c0, c1)
        _bump(counts, c, bit)
    return enc.finish()


def encode_map(mask, scale=SCALE):
    """Losslessly encode a binary (low-resolution) structural map."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {mask.shape}")
    if mask.size and not np.isin(mask, (0, 1)).all():
        raise ValueError("structural map must be binary")
    h, w = mask.shape
    if not (0 < h < 1 << 16 and 0 < w < 1 << 16):
        raise ValueError(f"map dims {h}x{w} out of range")
    bits = _encode_bits(mask.astype(np.int64))
    return StructurePayload(pack_bits(bits), h, w, scale, len(bits))


def decode_map(payload):
    """Exact inverse of :func:`encode_map`.

    Accepts a :class:`StructurePayload` or its serialised bytes.  The decoded
    map is re-encoded and compared with the input, so any corruption that
    still happens to decode (including a tampered size header) is rejected.
    """
    if not isinstance(payload, StructurePayload):
        payload = StructurePayload.from_bytes(payload)
    h, w = payload.low_h, payload.low_w
    if h == 0 or w == 0:
        raise DecodeError("structure payload declares an empty map", offset=0)
    dec = ArithmeticDecoder(payload.encoded_bits, payload.bit_length)
    counts = [[1, 1] for _ in range(N_CONTEXTS)]
    rows = [[0] * (w + 4) for _ in range(h + 2)]
    for y in range(h):
        r2, r1, r0 = rows[y], rows[y + 1], rows[y + 2]
        for x in range(w):
            xp = x + 2
            c = (
                r2[xp - 1] << 9 | r2[xp] << 8 | r2[xp + 1] << 7
                | r1[xp - 2] << 6 | r1[xp - 1] << 5 | r1[xp] << 4 | r1[xp + 1] << 3 | r1[xp + 2] << 2
                | r0[xp - 2] << 1 | r0[xp - 1]
            )
            c0, c1 = counts[c]
            bit = dec.decode_bit(c0, c1)
            r0[xp] = bit
            _bump(counts, c, bit)
    mask = np.array([r[2:-2] for r in rows[2:]], dtype=np.uint8)

    check = pack_bits(_encode_bits(mask.astype(np.int64)))
    if check != payload.encoded_bits:
        offset = next(
            (i for i, (a, b) in enumerate(zip(check, payload.encoded_bits)) if a != b),
            min(len(check), len(payload.encoded_bits)),
        )
        raise DecodeError(
            "structure payload inconsistent with its declared map size", offset=HEADER.size + offset
        )
    return mask


def downsample_map(mask, scale=SCALE, threshold=0.15):
    """Lanczos-shrink a full-resolution map by ``scale`` and re-binarise it.

    A one-pixel line shrunk 4x leaves roughly a quarter of its energy per
    low-resolution pixel, hence the low default threshold.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if scale == 1:
        return mask.astype(np.uint8)
    return binarize(lanczos_resample(mask, 1, scale), threshold)


def lanczos_upsample_map(low, scale=SCALE, threshold=0.5):
    """Baseline restoration: Lanczos upsampling followed by binarisation."""
    return binarize(lanczos_resample(np.asarray(low, dtype=np.float64), scale, 1), threshold)


# -- learned super-resolution ---------------------------------------------

class EdgeSRModel(nn.Module):
    """Small pixel-shuffle upsampler producing per-pixel edge logits."""

    def __init__(self, scale=SCALE, width=(16, 32, 16)):
        super().__init__()
        self.scale = scale
        self.width = tuple(width)
        c1, c2, c3 = self.width
        self.body = nn.Sequential(
            nn.Conv2d(1, c1, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(c1, c2, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(c2, c3, 3, padding=1), nn.ReLU(inplace=True),
        )
        self.head = nn.Conv2d(c3, scale * scale, 3, padding=1)
        self.shuffle = nn.PixelShuffle(scale)

    def forward(self, low):
        """Logits of shape (N, 1, scale·h, scale·w) for a (N, 1, h, w) map."""
        return self.shuffle(self.head(self.body(low)))

    def probabilities(self, low):
        return torch.sigmoid(self(low))


def sr_upsample(model, low, threshold=0.5):
    """Restore a full-resolution binary map from a decoded low-resolution one."""
    low = np.asarray(low)
    if low.ndim != 2:
        raise ValueError(f"expected a 2-D low-resolution map, got shape {low.shape}")
    if model.scale != SCALE:
        raise ValueError(f"model scale {model.scale} does not match codec scale {SCALE}")
    x = torch.from_numpy(low.astype(np.float32))[None, None]
    was_training = model.training
    model.eval()
    with torch.no_grad():
        prob = model.probabilities(x)[0, 0].numpy()
    model.train(was_training)
    return binarize(prob, threshold)


def bce_loss(pred, target, eps=BCE_EPS):
    """Summed binary cross-entropy between edge probabilities and a binary map."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    p = pred.clamp(eps, 1 - eps)
    y = target.to(p.dtype)
    return -(y * torch.log(p) + (1 - y) * torch.log(1 - p)).sum()


def save_sr_model(model, path):
    meta = {"scale": model.scale, "width": list(model.width), "version": SR_VERSION}
    checkpoint.save(path, SR_MAGIC, meta, model.state_dict())


def load_sr_model(path):
    meta, state = checkpoint.load(path, SR_MAGIC)
    model = EdgeSRModel(scale=meta["scale"], width=meta["width"])
    model.load_state_dict(state)
    model.eval()
    return model
