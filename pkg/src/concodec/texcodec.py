"""Texture layer: variational texture encoder, HEVC-style scalar quantisation
and arithmetic coding of the quantised latent.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.special import ndtr

from . import checkpoint
from .arith import ArithmeticDecoder, ArithmeticEncoder, pack_bits, raw_bits
from .errors import DecodeError

DEFAULT_D = 64
DEFAULT_QP = 51
SCALE_LOG2 = 10
QP_MAX = 51
INT16_MIN, INT16_MAX = -(1 << 15), (1 << 15) - 1
LOGVAR_RANGE = 20.0
ENC_MAGIC = b"TEX1"

# entropy model: one bin per q in [-ESCAPE_AT, ESCAPE_AT], plus an escape symbol
ESCAPE_AT = 1023
N_BINS = 2 * ESCAPE_AT + 1
ESCAPE = N_BINS
MODEL_TOTAL = 1 << 24
TEX_HEADER = struct.Struct(">HBI")  # d, qp, bit length
MODE_CODED, MODE_RAW = 0, 1


# -- encoder network -------------------------------------------------------

@dataclass
class PosteriorGaussian:
    mu: torch.Tensor
    logvar: torch.Tensor


class _DownBlock(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1, stride=2)

    def forward(self, x):
        h = F.leaky_relu(self.conv1(x), 0.2)
        h = self.conv2(h)
        return F.leaky_relu(h + self.skip(x), 0.2)


class TextureEncoder(nn.Module):
    """Residual CNN mapping an image to a diagonal Gaussian posterior over
    the ``d``-dimensional texture latent."""

    def __init__(self, d=DEFAULT_D, image_size=64, widths=(32, 64, 128, 192, 256)):
        super().__init__()
        self.d = d
        self.image_size = image_size
        self.widths = tuple(widths)
        self.stem = nn.Conv2d(3, widths[0], 3, padding=1)
        self.blocks = nn.Sequential(*(_DownBlock(a, b) for a, b in zip(widths[:-1], widths[1:])))
        self.mu_head = nn.Linear(widths[-1], d)
        self.logvar_head = nn.Linear(widths[-1], d)

    def forward(self, img):
        """``img``: (N, 3, H, W) in [0, 1]."""
        if img.shape[1:] != (3, self.image_size, self.image_size):
            raise ValueError(
                f"encoder expects (N, 3, {self.image_size}, {self.image_size}), got {tuple(img.shape)}"
            )
        h = F.leaky_relu(self.stem(img * 2 - 1), 0.2)
        h = self.blocks(h).mean(dim=(2, 3))
        mu = self.mu_head(h)
        logvar = self.logvar_head(h).clamp(-LOGVAR_RANGE, LOGVAR_RANGE)
        return PosteriorGaussian(mu, logvar)


def encode_texture(encoder, img):
    """Posterior of a single H×W×3 numpy image under frozen encoder weights."""
    x = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)[None]
    with torch.no_grad():
        post = encoder(x)
    return PosteriorGaussian(post.mu[0], post.logvar[0])


def sample_latent(post, noise):
    """Reparameterised sample ``mu + exp(logvar / 2) * noise``."""
    return post.mu + torch.exp(post.logvar / 2) * noise


def save_encoder(encoder, path):
    meta = {"d": encoder.d, "image_size": encoder.image_size, "widths": list(encoder.widths)}
    checkpoint.save(path, ENC_MAGIC, meta, encoder.state_dict())


def load_encoder(path):
    meta, state = checkpoint.load(path, ENC_MAGIC)
    enc = TextureEncoder(meta["d"], meta["image_size"], meta["widths"])
    enc.load_state_dict(state)
    enc.eval()
    return enc


# -- quantisation ----------------------------------------------------------

def q_step(qp):
    """Quantisation step ``2**((qp - 4) / 6) / 2**10``.

    The exponent is split into whole and sixth-octave parts so that
    ``q_step(qp + 6) == 2 * q_step(qp)`` holds exactly in floating point.
    """
    if isinstance(qp, bool) or int(qp) != qp or not 0 <= qp <= QP_MAX:
        raise ValueError(f"qp must be an integer in [0, {QP_MAX}], got {qp!r}")
    whole, frac = divmod(int(qp) - 4, 6)
    return math.ldexp(2.0 ** (frac / 6), whole - SCALE_LOG2)


@dataclass(frozen=True)
class QuantizedTexture:
    q: np.ndarray
    qp: int = DEFAULT_QP
    scale_log2: int = SCALE_LOG2
    overflow: int = 0

    @property
    def d(self):
        return len(self.q)

    def __eq__(self, other):
        if not isinstance(other, QuantizedTexture):
            return NotImplemented
        return self.qp == other.qp and np.array_equal(self.q, other.q)


def quantize(z, qp=DEFAULT_QP):
    """``floor(z / q_step)`` clamped to signed 16 bits.

    Floor is mathematical (toward minus infinity).  The float result is
    nudged so that ``0 <= z - q * step < step`` holds exactly.
    """
    step = q_step(qp)
    if isinstance(z, torch.Tensor):
        z = z.detach().cpu().numpy()
    z = np.asarray(z, dtype=np.float64).ravel()
    q = np.floor(z / step)
    q -= (q * step > z)
    q += ((q + 1) * step <= z)
    clipped = np.clip(q, INT16_MIN, INT16_MAX)
    overflow = int(np.count_nonzero(clipped != q))
    return QuantizedTexture(clipped.astype(np.int64), qp, SCALE_LOG2, overflow)


def dequantize(qt):
    return qt.q.astype(np.float64) * q_step(qt.qp)


# -- entropy coding --------------------------------------------------------

def model_probabilities(qp):
    """Standard-normal mass of each bin ``[q*step, (q+1)*step)`` and of the escape.

    Returns an array of length ``N_BINS + 1``; the last entry is the escape
    probability (mass outside the coded range).
    """
    step = q_step(qp)
    edges = np.arange(-ESCAPE_AT, ESCAPE_AT + 2, dtype=np.float64) * step
    cdf = ndtr(edges)
    bins = np.diff(cdf)
    escape = ndtr(edges[0]) + ndtr(-edges[-1])
    return np.append(bins, escape)


@lru_cache(maxsize=None)
def _cumulative(qp):
    probs = model_probabilities(qp)
    n = len(probs)
    freq = np.floor(probs * (MODEL_TOTAL - n)).astype(np.int64) + 1
    freq[np.argmax(freq)] += MODEL_TOTAL - int(freq.sum())
    return tuple(np.concatenate([[0], np.cumsum(freq)]).tolist())


def _symbol(v):
    return v + ESCAPE_AT if -ESCAPE_AT <= v <= ESCAPE_AT else ESCAPE


def _encode_coded(q, qp):
    cum = _cumulative(qp)
    total = cum[-1]
    enc = ArithmeticEncoder()
    for v in q:
        s = _symbol(v)
        enc.encode(cum[s], cum[s + 1], total)
        if s == ESCAPE:
            u = v - INT16_MIN
            enc.encode(u, u + 1, 1 << 16)
    return enc.finish()


def _texture_bits(qt):
    q = [int(v) for v in qt.q]
    if any(v < INT16_MIN or v > INT16_MAX for v in q):
        raise ValueError("quantised latent outside the signed 16-bit range")
    coded = _encode_coded(q, qt.qp)
    if len(coded) <= 16 * len(q):
        bits = [MODE_CODED] + coded
    else:
        bits = [MODE_RAW]
        for v in q:
            bits.extend(raw_bits(v - INT16_MIN, 16))
    while bits and bits[-1] == 0:
        bits.pop()
    return bits


def entropy_encode(qt):
    """Serialise a quantised latent as a texture payload.

    The coded section starts with a mode bit: 0 for arithmetic coding under
    the static discretised-normal model, 1 for plain 16-bit words, used
    whenever coding would exceed 16 bits per symbol.
    """
    if not 0 < qt.d < 1 << 16:
        raise ValueError(f"latent length {qt.d} out of range")
    bits = _texture_bits(qt)
    return TEX_HEADER.pack(qt.d, qt.qp, len(bits)) + pack_bits(bits)


def parse_texture_header(data):
    if len(data) < TEX_HEADER.size:
        raise DecodeError("texture payload shorter than its header", offset=len(data))
    return TEX_HEADER.unpack_from(data)


def entropy_decode(data, d=None, qp=None):
    """Inverse of :func:`entropy_encode`.

    ``d`` and ``qp`` default to the payload header; when given they must
    agree with it.
    """
    data = bytes(data)
    hd, hqp, bit_length = parse_texture_header(data)
    if d is not None and d != hd:
        raise DecodeError(f"texture payload holds d={hd}, expected {d}", offset=0)
    if qp is not None and qp != hqp:
        raise DecodeError(f"texture payload holds qp={hqp}, expected {qp}", offset=2)
    if hqp > QP_MAX:
        raise DecodeError(f"invalid qp {hqp}", offset=2)
    if hd == 0:
        raise DecodeError("texture payload declares zero dimensions", offset=0)
    body = data[TEX_HEADER.size:]
    need = (bit_length + 7) // 8
    if len(body) != need:
        raise DecodeError(
            f"texture payload has {len(body)} coded bytes, header implies {need}",
            offset=len(data) if len(body) < need else TEX_HEADER.size + need,
        )
    if bit_length == 0:
        raise DecodeError("empty texture payload", offset=TEX_HEADER.size)
    mode = body[0] >> 7
    q = []
    if mode == MODE_RAW:
        bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8))
        bits = np.concatenate([bits, np.zeros(max(0, 1 + 16 * hd - len(bits)), np.uint8)])
        words = bits[1:1 + 16 * hd].reshape(hd, 16)
        q = (words @ (1 << np.arange(15, -1, -1)) + INT16_MIN).tolist()
    else:
        cum = _cumulative(hqp)
        dec = ArithmeticDecoder(body, bit_length, start=1)
        for _ in range(hd):
            s = dec.decode_symbol(cum)
            if s == ESCAPE:
                t = dec.target(1 << 16)
                dec.consume(t, t + 1, 1 << 16)
                q.append(t + INT16_MIN)
            else:
                q.append(s - ESCAPE_AT)
    qt = QuantizedTexture(np.asarray(q, dtype=np.int64), hqp)
    if _texture_bits(qt) != np.unpackbits(np.frombuffer(body, dtype=np.uint8))[:bit_length].tolist():
        raise DecodeError("texture payload is not a valid coding of any latent", offset=TEX_HEADER.size)
    return qt
