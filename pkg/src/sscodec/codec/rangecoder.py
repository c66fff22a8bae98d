"""Byte-oriented range coder with 64-bit registers and 16-bit frequency tables.

A frequency table is a cumulative list ``cum`` with ``cum[0] == 0`` and
``cum[-1] == 1 << PRECISION``; symbol ``s`` owns ``[cum[s], cum[s + 1])``.

The encoder keeps ``low`` below 2**64 and propagates carries into the bytes
already written. Termination emits a single byte: after renormalisation the
range is at least 2**56, so a multiple of 2**56 always lies inside the final
interval. The decoder reads zeros past the end of the buffer; reading more
than the seven bytes the encoder never wrote means the stream was cut short.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import Sequence

from ..errors import TruncatedStreamError

PRECISION = 16
TOTAL = 1 << PRECISION
_MASK = (1 << 64) - 1
_TOP = 1 << 56
_REGISTER_BYTES = 8


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.out = bytearray()

    def _carry(self) -> None:
        i = len(self.out) - 1
        while self.out[i] == 0xFF:
            self.out[i] = 0
            i -= 1
        self.out[i] += 1

    def encode(self, cum: Sequence[int], symbol: int) -> None:
        start = cum[symbol]
        freq = cum[symbol + 1] - start
        r = self.range >> PRECISION
        self.low += r * start
        self.range = r * freq
        if self.low > _MASK:
            self.low &= _MASK
            self._carry()
        while self.range < _TOP:
            self.out.append(self.low >> 56)
            self.low = (self.low << 8) & _MASK
            self.range <<= 8

    def encode_uniform(self, value: int) -> None:
        """Code a raw 16-bit value (escape payload)."""
        r = self.range >> PRECISION
        self.low += r * value
        self.range = r
        if self.low > _MASK:
            self.low &= _MASK
            self._carry()
        while self.range < _TOP:
            self.out.append(self.low >> 56)
            self.low = (self.low << 8) & _MASK
            self.range <<= 8

    def finish(self) -> bytes:
        # smallest multiple of 2**56 at or above low lies inside [low, low + range)
        v = -(-self.low // _TOP) * _TOP
        if v > _MASK:
            self._carry()
            v &= _MASK
        self.out.append(v >> 56)
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = _MASK
        self.value = 0
        for _ in range(_REGISTER_BYTES):
            self.value = (self.value << 8) | self._next()

    def _next(self) -> int:
        pos = self.pos
        self.pos += 1
        if pos < len(self.data):
            return self.data[pos]
        if pos >= len(self.data) + _REGISTER_BYTES - 1:
            raise TruncatedStreamError("range decoder ran past the end of its substream")
        return 0

    def decode(self, cum: Sequence[int]) -> int:
        r = self.range >> PRECISION
        target = min(self.value // r, TOTAL - 1)
        symbol = bisect_right(cum, target) - 1
        start = cum[symbol]
        self.value -= r * start
        self.range = r * (cum[symbol + 1] - start)
        while self.range < _TOP:
            self.value = ((self.value << 8) | self._next()) & _MASK
            self.range <<= 8
        return symbol

    def decode_uniform(self) -> int:
        r = self.range >> PRECISION
        v = min(self.value // r, TOTAL - 1)
        self.value -= r * v
        self.range = r
        while self.range < _TOP:
            self.value = ((self.value << 8) | self._next()) & _MASK
            self.range <<= 8
        return v


def rc_encode(symbols: Sequence[int], cdfs: Sequence[Sequence[int]]) -> bytes:
    """Encode ``symbols[i]`` under cumulative table ``cdfs[i]``."""
    if len(symbols) != len(cdfs):
        raise ValueError(f"{len(symbols)} symbols but {len(cdfs)} tables")
    enc = RangeEncoder()
    for s, cum in zip(symbols, cdfs):
        enc.encode(cum, s)
    return enc.finish()


def rc_decode(data: bytes, cdfs: Sequence[Sequence[int]]) -> list[int]:
    dec = RangeDecoder(data)
    return [dec.decode(cum) for cum in cdfs]
