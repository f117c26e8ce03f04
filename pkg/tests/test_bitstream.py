import numpy as np
import pytest

from concodec.bitstream import (
    FLAG_FULL_RES, HEADER, ConceptualBitstream, bpp, compress, decode_payloads, decompress,
    load_bitstream, replace_structure, save_bitstream, swap_texture,
)
from concodec.dataset import toy_sample
from concodec.errors import CodecError, ConfigError, FormatError
from concodec.structcodec import encode_map
from concodec.texcodec import QuantizedTexture, entropy_encode, quantize


def random_stream(rng):
    full = rng.random() < 0.2
    scale = 1 if full else 4
    lh, lw = (int(v) for v in rng.integers(1, 12, 2))
    low = (rng.random((lh, lw)) < rng.random()).astype(np.uint8)
    d = int(rng.integers(1, 80))
    z = rng.normal(size=d) * rng.choice([0.1, 1, 100, 1e5])
    tex = entropy_encode(quantize(z, int(rng.integers(0, 52))))
    return ConceptualBitstream(lh * scale, lw * scale, encode_map(low, scale).to_bytes(), tex,
                               FLAG_FULL_RES if full else 0)


def test_fuzzed_roundtrip_is_byte_exact():
    rng = np.random.default_rng(0)
    for _ in range(300):
        bs = random_stream(rng)
        data = bs.to_bytes()
        again = ConceptualBitstream.from_bytes(data)
        assert again == bs and again.to_bytes() == data


def test_container_header_corruption_rejected():
    rng = np.random.default_rng(1)
    for _ in range(5):
        data = random_stream(rng).to_bytes()
        for pos in range(HEADER.size):
            for v in range(256):
                if v == data[pos]:
                    continue
                bad = bytearray(data)
                bad[pos] = v
                with pytest.raises(CodecError):
                    decode_payloads(ConceptualBitstream.from_bytes(bytes(bad)))


def test_truncation_and_extension_rejected():
    data = random_stream(np.random.default_rng(2)).to_bytes()
    for n in range(len(data)):
        with pytest.raises(CodecError):
            ConceptualBitstream.from_bytes(data[:n])
    with pytest.raises(CodecError):
        ConceptualBitstream.from_bytes(data + b"\x00")


def test_errors_are_structured():
    with pytest.raises(FormatError, match="magic"):
        ConceptualBitstream.from_bytes(b"XXXX" + bytes(20))
    assert issubclass(FormatError, ValueError)


def test_bpp_arithmetic():
    assert bpp(b"\x00" * 1024, 256, 256) == 0.125
    assert bpp(1024, 256, 256) == 0.125
    with pytest.raises(ValueError):
        bpp(10, 0, 4)


def test_swap_texture_semantics():
    rng = np.random.default_rng(3)
    a, b = random_stream(rng), random_stream(rng)
    assert swap_texture(a, a).to_bytes() == a.to_bytes()
    tex = entropy_encode(QuantizedTexture(np.zeros(16, dtype=np.int64), 40))
    other = ConceptualBitstream(a.height, a.width, a.structure, tex, a.flags)
    with pytest.raises(ValueError, match="texture headers"):
        swap_texture(a, other)
    b2 = ConceptualBitstream(b.height, b.width, b.structure, a.texture, b.flags)
    swapped = swap_texture(b2, a)
    assert swapped.structure == b.structure and swapped.texture == a.texture


def test_pipeline_with_untrained_models(untrained_codec, tmp_path):
    img, edge = toy_sample(0, 0, 64)
    bs = compress(img, untrained_codec)
    assert compress(img, untrained_codec).to_bytes() == bs.to_bytes()
    assert bs.texture_header == (64, 51)
    out = decompress(bs.to_bytes(), untrained_codec)
    assert out.shape == (64, 64, 3) and 0 <= out.min() and out.max() <= 1
    save_bitstream(tmp_path / "a.ccb", bs)
    assert load_bitstream(tmp_path / "a.ccb") == bs
    assert bpp(bs, 64, 64) < 1.0

    own = untrained_codec.edges(img)
    edited = replace_structure(bs, own)
    assert edited.texture == bs.texture and edited.structure == bs.structure
    with pytest.raises(ValueError):
        replace_structure(bs, own[:32])

    full = compress(img, untrained_codec, full_res=True)
    assert full.flags & FLAG_FULL_RES
    low, _ = decode_payloads(full)
    assert np.array_equal(low, own)
    with pytest.raises(ConfigError):
        compress(np.zeros((32, 32, 3)), untrained_codec)
