"""CodedImage byte layout (little-endian)::

    b"MBIC"          magic
    u8   version     (1)
    u8   lambda index
    u32  width, u32 height   (original, before padding)
    u64  weight checksum
    u8   chunk count K
    u32  CRC-32 of the header fields above
    then 1 + 2K substreams in schedule order (hyper latent, then for
    k = 1..K: anchors of chunk k, non-anchors of chunk k), each framed as
    u32 length, payload, u32 CRC-32 of the payload
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import BinaryIO

from ..errors import BitstreamError, BitstreamVersionError, TruncatedStreamError

MAGIC = b"MBIC"
VERSION = 1
_HEADER = struct.Struct("<4sBBIIQB")
HEADER_BYTES = _HEADER.size + 4
FRAME_BYTES = 8


@dataclass
class CodedImage:
    width: int
    height: int
    lambda_index: int
    weight_checksum: int
    num_chunks: int
    substreams: list[bytes] = field(default_factory=list)
    version: int = VERSION

    @property
    def expected_substreams(self) -> int:
        return 1 + 2 * self.num_chunks

    @property
    def complete(self) -> bool:
        return len(self.substreams) == self.expected_substreams

    def header_bytes(self) -> bytes:
        fields = _HEADER.pack(MAGIC, self.version, self.lambda_index, self.width, self.height,
                              self.weight_checksum, self.num_chunks)
        return fields + struct.pack("<I", zlib.crc32(fields))

    def to_bytes(self) -> bytes:
        parts = [self.header_bytes()]
        for s in self.substreams:
            parts.append(struct.pack("<I", len(s)))
            parts.append(s)
            parts.append(struct.pack("<I", zlib.crc32(s)))
        return b"".join(parts)

    def __len__(self) -> int:
        return HEADER_BYTES + sum(FRAME_BYTES + len(s) for s in self.substreams)

    def total_bits(self) -> int:
        return 8 * len(self)

    @classmethod
    def from_bytes(cls, data: bytes, allow_partial: bool = False) -> "CodedImage":
        """Parse a stream; with ``allow_partial`` a stream cut exactly at a
        substream boundary yields the substreams present so far."""
        if len(data) < HEADER_BYTES:
            raise TruncatedStreamError(f"stream of {len(data)} bytes is shorter than the header")
        magic, version, lam, width, height, checksum, k = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise BitstreamError("not a coded image (bad magic)")
        if version != VERSION:
            raise BitstreamVersionError(f"bitstream version {version}, this build reads {VERSION}")
        (header_crc,) = struct.unpack_from("<I", data, _HEADER.size)
        if zlib.crc32(bytes(data[: _HEADER.size])) != header_crc:
            raise BitstreamError("header CRC mismatch (corrupt stream)")
        coded = cls(width, height, lam, checksum, k, version=version)
        pos = HEADER_BYTES
        while pos < len(data):
            if len(coded.substreams) == coded.expected_substreams:
                raise BitstreamError(f"{len(data) - pos} unexpected bytes after the last substream")
            if pos + 4 > len(data):
                raise TruncatedStreamError("stream ends inside a substream length field")
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + n + 4 > len(data):
                raise TruncatedStreamError(
                    f"substream {len(coded.substreams)} declares {n} bytes, {len(data) - pos} remain"
                )
            payload = bytes(data[pos : pos + n])
            (crc,) = struct.unpack_from("<I", data, pos + n)
            if zlib.crc32(payload) != crc:
                raise BitstreamError(f"substream {len(coded.substreams)} CRC mismatch (corrupt stream)")
            coded.substreams.append(payload)
            pos += n + 4
        if not coded.complete and not allow_partial:
            raise TruncatedStreamError(
                f"stream holds {len(coded.substreams)} of {coded.expected_substreams} substreams"
            )
        return coded

    def write(self, sink: BinaryIO) -> None:
        sink.write(self.to_bytes())

    @classmethod
    def read(cls, source: BinaryIO, allow_partial: bool = False) -> "CodedImage":
        return cls.from_bytes(source.read(), allow_partial=allow_partial)
