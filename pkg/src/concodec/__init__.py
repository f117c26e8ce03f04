"""Dual-layer conceptual image codec.

An image is split into a binary edge map (the structure layer, coded
losslessly at quarter resolution) and a short texture latent (quantised and
arithmetic coded).  A fusion generator renders the two back into pixels.
"""
from .bitstream import (
    Codec, ConceptualBitstream, bpp, compress, decompress, load_bitstream, replace_structure,
    save_bitstream, swap_texture,
)
from .config import DEFAULTS, load_config, make_config
from .errors import CodecError, ConfigError, DecodeError, FormatError

__version__ = "0.1.0"

__all__ = [
    "Codec", "ConceptualBitstream", "bpp", "compress", "decompress", "load_bitstream",
    "replace_structure", "save_bitstream", "swap_texture", "DEFAULTS", "load_config",
    "make_config", "CodecError", "ConfigError", "DecodeError", "FormatError",
]
