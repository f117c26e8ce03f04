"""Integer arithmetic coder (32-bit state, bit-level renormalisation).

Both coders in the package sit on top of this: the context-adaptive binary
coder for structural maps and the static-model coder for texture latents.
Symbols are coded from cumulative frequencies ``(low, high, total)`` with
``total <= MAX_TOTAL``.

Trailing zero bits are stripped from the output; the decoder treats reads
past the end as zeros, so callers only need to carry the bit count.
"""
from __future__ import annotations

import numpy as np

from .errors import DecodeError

STATE_BITS = 32
FULL = 1 << STATE_BITS
MASK = FULL - 1
HALF = FULL >> 1
QUARTER = HALF >> 1
MAX_TOTAL = QUARTER


class ArithmeticEncoder:
    def __init__(self):
        self.low = 0
        self.high = MASK
        self.pending = 0
        self.bits = []

    def _emit(self, bit):
        self.bits.append(bit)
        if self.pending:
            self.bits.extend([bit ^ 1] * self.pending)
            self.pending = 0

    def encode(self, cum_low, cum_high, total):
        if not 0 <= cum_low < cum_high <= total <= MAX_TOTAL:
            raise ValueError(f"bad interval [{cum_low}, {cum_high}) of {total}")
        span = self.high - self.low + 1
        high = self.low + span * cum_high // total - 1
        low = self.low + span * cum_low // total
        while True:
            if high < HALF:
                self._emit(0)
            elif low >= HALF:
                self._emit(1)
                low -= HALF
                high -= HALF
            elif low >= QUARTER and high < HALF + QUARTER:
                self.pending += 1
                low -= QUARTER
                high -= QUARTER
            else:
                break
            low <<= 1
            high = (high << 1) | 1
        self.low, self.high = low, high

    def encode_bit(self, bit, count0, count1):
        """Code one binary symbol given its (zero, one) frequency counts."""
        if bit:
            self.encode(count0, count0 + count1, count0 + count1)
        else:
            self.encode(0, count0, count0 + count1)

    def finish(self):
        """Flush the coder and return the emitted bits as a list of 0/1."""
        self.pending += 1
        self._emit(0 if self.low < QUARTER else 1)
        bits = self.bits
        while bits and bits[-1] == 0:
            bits.pop()
        return bits


class ArithmeticDecoder:
    def __init__(self, data, bit_length, start=0):
        if len(data) * 8 < bit_length:
            raise DecodeError(
                f"payload holds {len(data) * 8} bits but header declares {bit_length}",
                offset=len(data),
            )
        self.data = data
        self.bit_length = bit_length
        self.pos = start
        self.low = 0
        self.high = MASK
        self.value = 0
        for _ in range(STATE_BITS):
            self.value = (self.value << 1) | self._read()

    def _read(self):
        pos = self.pos
        self.pos += 1
        if pos >= self.bit_length:
            return 0
        return (self.data[pos >> 3] >> (7 - (pos & 7))) & 1

    def target(self, total):
        span = self.high - self.low + 1
        return ((self.value - self.low + 1) * total - 1) // span

    def consume(self, cum_low, cum_high, total):
        span = self.high - self.low + 1
        high = self.low + span * cum_high // total - 1
        low = self.low + span * cum_low // total
        value = self.value
        while True:
            if high < HALF:
                pass
            elif low >= HALF:
                low -= HALF
                high -= HALF
                value -= HALF
            elif low >= QUARTER and high < HALF + QUARTER:
                low -= QUARTER
                high -= QUARTER
                value -= QUARTER
            else:
                break
            low <<= 1
            high = (high << 1) | 1
            value = (value << 1) | self._read()
        self.low, self.high, self.value = low, high, value

    def decode_bit(self, count0, count1):
        total = count0 + count1
        bit = 1 if self.target(total) >= count0 else 0
        if bit:
            self.consume(count0, total, total)
        else:
            self.consume(0, count0, total)
        return bit

    def decode_symbol(self, cumulative):
        """Decode with a cumulative table ``cumulative[s] .. cumulative[s+1]``."""
        total = cumulative[-1]
        t = self.target(total)
        lo, hi = 0, len(cumulative) - 1
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cumulative[mid] > t:
                hi = mid
            else:
                lo = mid
        self.consume(cumulative[lo], cumulative[lo + 1], total)
        return lo



def raw_bits(value, nbits):
    return [(value >> (nbits - 1 - i)) & 1 for i in range(nbits)]


def pack_bits(bits):
    """Pack a 0/1 list MSB-first into bytes, zero-padding the last byte."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()
