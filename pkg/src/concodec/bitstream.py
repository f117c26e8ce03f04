"""Conceptual bitstream container and the compress / decompress pipeline.

Container layout (big-endian)::

    magic   4s  b"CCB1"
    version u8  1
    height  u16
    width   u16
    flags   u8  bit 0: structure stored at full resolution (scale 1)
    slen    u32 structure payload length
    ...     structure payload (see structcodec.StructurePayload)
    tlen    u32 texture payload length
    ...     texture payload (see texcodec.entropy_encode)

Either payload can be swapped without touching the other.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .errors import ConfigError, DecodeError, FormatError
from .hfgan import generate, load_hfgan
from .imagecore import check_image, extract_edges
from .structcodec import (
    SCALE, StructurePayload, decode_map, downsample_map, encode_map, load_sr_model,
    sr_upsample,
)
from .training import CONFIG_FILE, ENCODER_FILE, GENERATOR_FILE, SR_FILE
from .texcodec import (
    dequantize, encode_texture, entropy_decode, entropy_encode, load_encoder, parse_texture_header,
    quantize,
)

MAGIC = b"CCB1"
VERSION = 1
FLAG_FULL_RES = 0x01
KNOWN_FLAGS = FLAG_FULL_RES
HEADER = struct.Struct(">4sBHHBI")
LENGTH = struct.Struct(">I")
SUFFIX = ".ccb"


@dataclass(frozen=True)
class ConceptualBitstream:
    height: int
    width: int
    structure: bytes
    texture: bytes
    flags: int = 0
    version: int = VERSION

    def to_bytes(self):
        return b"".join([
            HEADER.pack(MAGIC, self.version, self.height, self.width, self.flags, len(self.structure)),
            self.structure,
            LENGTH.pack(len(self.texture)),
            self.texture,
        ])

    @classmethod
    def from_bytes(cls, data):
        """Parse and validate a serialised container (payloads are not decoded)."""
        data = bytes(data)
        if len(data) < HEADER.size:
            raise FormatError(f"bitstream shorter than its {HEADER.size}-byte header")
        magic, version, height, width, flags, slen = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported bitstream version {version}")
        if flags & ~KNOWN_FLAGS:
            raise FormatError(f"unknown flag bits 0x{flags & ~KNOWN_FLAGS:02x}")
        if height == 0 or width == 0:
            raise FormatError(f"invalid image size {height}x{width}")
        pos = HEADER.size
        if pos + slen + LENGTH.size > len(data):
            raise DecodeError("structure length runs past the end of the bitstream", offset=10)
        structure = data[pos:pos + slen]
        pos += slen
        (tlen,) = LENGTH.unpack_from(data, pos)
        pos += LENGTH.size
        if pos + tlen != len(data):
            raise DecodeError(
                f"texture length {tlen} disagrees with the {len(data) - pos} bytes present", offset=pos - 4)
        texture = data[pos:]

        sp = StructurePayload.from_bytes(structure)
        expected_scale = 1 if flags & FLAG_FULL_RES else SCALE
        if sp.scale != expected_scale:
            raise FormatError(f"structure scale {sp.scale} contradicts flags 0x{flags:02x}")
        if sp.low_h * sp.scale != height or sp.low_w * sp.scale != width:
            raise FormatError(
                f"structure map {sp.low_h}x{sp.low_w} at scale {sp.scale} does not cover {height}x{width}")
        d, qp, bit_length = parse_texture_header(texture)
        if qp > 51 or d == 0:
            raise FormatError(f"invalid texture header d={d} qp={qp}")
        if len(texture) != 7 + (bit_length + 7) // 8:
            raise DecodeError("texture bit length disagrees with payload size", offset=pos + 3)
        return cls(height, width, structure, texture, flags, version)

    @property
    def texture_header(self):
        d, qp, _ = parse_texture_header(self.texture)
        return d, qp

    def __len__(self):
        return len(self.to_bytes())


def as_bitstream(bs):
    return bs if isinstance(bs, ConceptualBitstream) else ConceptualBitstream.from_bytes(bs)


# -- models ----------------------------------------------------------------

@dataclass
class Codec:
    """Frozen models plus the config they were trained with."""

    encoder: object
    generator: object
    sr_model: object
    cfg: dict

    @classmethod
    def load(cls, directory, cfg=None):
        directory = Path(directory)
        paths = [directory / name for name in (ENCODER_FILE, GENERATOR_FILE, SR_FILE)]
        for p in paths:
            if not p.exists():
                raise FileNotFoundError(f"checkpoint not found: {p}")
        if cfg is None:
            cfg_path = directory / CONFIG_FILE
            cfg = config_mod.load_config(cfg_path if cfg_path.exists() else None)
        encoder = load_encoder(paths[0])
        generator, _ = load_hfgan(paths[1])
        sr_model = load_sr_model(paths[2])
        if encoder.d != generator.cfg.d:
            raise FormatError(f"encoder d={encoder.d} does not match generator d={generator.cfg.d}")
        return cls(encoder, generator, sr_model, cfg)

    @property
    def resolution(self):
        return self.generator.cfg.resolution

    def edges(self, img):
        c = self.cfg
        return extract_edges(img, c["edge.blur_sigma"], c["edge.low"], c["edge.high"])


# -- pipeline ----------------------------------------------------------------

def encode_structure(edge_map, cfg, full_res=False):
    scale = 1 if full_res else SCALE
    low = downsample_map(edge_map, scale, cfg["structure.down_threshold"])
    return encode_map(low, scale)


def compress(img, codec, full_res=False):
    """Encode an image into a :class:`ConceptualBitstream`.

    The texture latent is the posterior mean, so equal inputs give equal bytes.
    """
    img = check_image(img)
    h, w = img.shape[:2]
    if (h, w) != (codec.resolution, codec.resolution):
        raise ConfigError(f"image is {h}x{w}; models are configured for {codec.resolution}px")
    structure = encode_structure(codec.edges(img), codec.cfg, full_res)
    post = encode_texture(codec.encoder, img)
    qt = quantize(post.mu, codec.cfg["tex.qp"])
    return ConceptualBitstream(
        h, w, structure.to_bytes(), entropy_encode(qt), FLAG_FULL_RES if full_res else 0)


def decode_structure(bs, codec):
    """Full-resolution structural map carried by a bitstream."""
    bs = as_bitstream(bs)
    sp = StructurePayload.from_bytes(bs.structure)
    low = decode_map(sp)
    if sp.scale == 1:
        return low
    return sr_upsample(codec.sr_model, low, codec.cfg["binarize.threshold"])


def decode_texture(bs):
    bs = as_bitstream(bs)
    return dequantize(entropy_decode(bs.texture))


def decode_payloads(bs):
    """Losslessly decode both layers without any models.

    Returns ``(low_res_map, QuantizedTexture)``; raises on any inconsistency.
    """
    bs = as_bitstream(bs)
    return decode_map(bs.structure), entropy_decode(bs.texture)


def decompress(bs, codec):
    bs = as_bitstream(bs)
    restored = decode_structure(bs, codec)
    z = decode_texture(bs)
    if len(z) != codec.generator.cfg.d:
        raise FormatError(f"bitstream carries d={len(z)}, generator expects d={codec.generator.cfg.d}")
    if restored.shape != (codec.resolution, codec.resolution):
        raise ConfigError(f"bitstream is {restored.shape}, models render {codec.resolution}px")
    return generate(codec.generator, z, restored)


# -- compressed-domain manipulation --------------------------------------------

def swap_texture(bs_a, bs_b):
    """``bs_a``'s structure with ``bs_b``'s texture; nothing is re-encoded."""
    a, b = as_bitstream(bs_a), as_bitstream(bs_b)
    if a.version != b.version:
        raise ValueError(f"bitstream versions differ ({a.version} vs {b.version})")
    if a.texture_header != b.texture_header:
        raise ValueError(f"texture headers differ: (d, qp) {a.texture_header} vs {b.texture_header}")
    return replace(a, texture=b.texture)


def replace_structure(bs, edited_map, cfg=None):
    """Re-encode only the structure layer from an edited full-resolution map."""
    bs = as_bitstream(bs)
    cfg = cfg or config_mod.make_config()
    edited_map = np.asarray(edited_map)
    if edited_map.shape != (bs.height, bs.width):
        raise ValueError(f"edited map is {edited_map.shape}, bitstream is {bs.height}x{bs.width}")
    if edited_map.size and not np.isin(edited_map, (0, 1)).all():
        raise ValueError("edited map must be binary")
    structure = encode_structure(edited_map, cfg, bool(bs.flags & FLAG_FULL_RES))
    return replace(bs, structure=structure.to_bytes())


def bpp(bs, h, w):
    """Bits per pixel of a bitstream (object or raw bytes) for an h×w image."""
    if h <= 0 or w <= 0:
        raise ValueError("image dims must be positive")
    n = len(bs) if isinstance(bs, (bytes, bytearray, ConceptualBitstream)) else int(bs)
    return 8.0 * n / (h * w)


def save_bitstream(path, bs):
    Path(path).write_bytes(as_bitstream(bs).to_bytes())


def load_bitstream(path):
    return ConceptualBitstream.from_bytes(Path(path).read_bytes())
