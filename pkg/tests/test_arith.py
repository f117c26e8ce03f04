import numpy as np
import pytest

from concodec.arith import ArithmeticDecoder, ArithmeticEncoder, pack_bits, raw_bits
from concodec.errors import DecodeError


def roundtrip_symbols(symbols, freqs):
    cum = [0]
    for f in freqs:
        cum.append(cum[-1] + f)
    enc = ArithmeticEncoder()
    for s in symbols:
        enc.encode(cum[s], cum[s + 1], cum[-1])
    bits = enc.finish()
    dec = ArithmeticDecoder(pack_bits(bits), len(bits))
    return [dec.decode_symbol(cum) for _ in symbols], bits


def test_symbol_roundtrip(rng):
    freqs = [1, 5, 100, 3, 1000]
    symbols = rng.integers(0, len(freqs), 2000).tolist()
    out, _ = roundtrip_symbols(symbols, freqs)
    assert out == symbols


def test_skewed_model_compresses():
    out, bits = roundtrip_symbols([0] * 1000, [1000, 1])
    assert out == [0] * 1000
    assert len(bits) < 20


def test_bit_roundtrip_with_changing_counts(rng):
    bits_in = (rng.random(3000) < 0.2).astype(int).tolist()
    enc = ArithmeticEncoder()
    c = [1, 1]
    for b in bits_in:
        enc.encode_bit(b, *c)
        c[b] += 1
    bits = enc.finish()
    dec = ArithmeticDecoder(pack_bits(bits), len(bits))
    c = [1, 1]
    out = []
    for _ in bits_in:
        b = dec.decode_bit(*c)
        c[b] += 1
        out.append(b)
    assert out == bits_in


def test_empty_message_decodes_nothing():
    bits = ArithmeticEncoder().finish()
    assert len(bits) <= 2


def test_bad_interval_rejected():
    with pytest.raises(ValueError):
        ArithmeticEncoder().encode(3, 3, 10)


def test_short_data_rejected():
    with pytest.raises(DecodeError):
        ArithmeticDecoder(b"\x00", 16)


def test_raw_bits_and_packing():
    assert raw_bits(5, 4) == [0, 1, 0, 1]
    assert pack_bits([1, 0, 1]) == b"\xa0"
    assert pack_bits(np.ones(9, dtype=int).tolist()) == b"\xff\x80"
