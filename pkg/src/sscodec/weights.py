"""Parameter store: architecture manifest, seeded init, and the weight file format.

Weight file layout (all integers little-endian)::

    b"SSCW"                     magic
    u16   version               (1)
    u32   n + n bytes           config, canonical JSON
    u32   record count
    records, sorted by name:
        u16 name length, name (UTF-8)
        u8  ndim, ndim x u32 extents
        float32 data, row-major
    u64   checksum              first 8 bytes of BLAKE2b over everything above
"""

from __future__ import annotations

import hashlib
import io
import struct
from collections.abc import Mapping
from typing import BinaryIO, Iterator

import numpy as np

from .config import ModelConfig
from .entropy import context_manifest
from .errors import (
    MissingParameterError,
    UnexpectedParameterError,
    UnknownVersionError,
    WeightChecksumError,
    WeightFileError,
)
from .tensor import ShapeError
from .transform import transform_manifest

MAGIC = b"SSCW"
VERSION = 1


def architecture_manifest(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name the model needs, with its exact shape, sorted by name."""
    shapes = transform_manifest(cfg)
    shapes.update(context_manifest(cfg))
    return dict(sorted(shapes.items()))


def format_manifest(cfg: ModelConfig) -> str:
    manifest = architecture_manifest(cfg)
    total = sum(int(np.prod(s)) for s in manifest.values())
    lines = [f"config {cfg.to_json()}"]
    lines += [f"{name:<48s} {'x'.join(map(str, shape))}" for name, shape in manifest.items()]
    lines.append(f"{len(manifest)} tensors, {total} parameters")
    return "\n".join(lines)


def _checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


class ModelWeights(Mapping):
    """Immutable name -> float32 array map validated against the manifest."""

    def __init__(self, config: ModelConfig, tensors: Mapping[str, np.ndarray]):
        manifest = architecture_manifest(config)
        for name in tensors:
            if name not in manifest:
                raise UnexpectedParameterError(name)
        frozen = {}
        for name, shape in manifest.items():
            if name not in tensors:
                raise MissingParameterError(name)
            arr = np.array(tensors[name], dtype=np.float32, copy=True)
            if arr.shape != shape:
                raise ShapeError(f"{name}: shape {arr.shape}, manifest says {shape}")
            arr.setflags(write=False)
            frozen[name] = arr
        self.config = config
        self._tensors = frozen
        self._payload = _serialize_body(config, frozen)
        self.checksum = _checksum(self._payload)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def replace(self, **updates: np.ndarray) -> "ModelWeights":
        """Copy with some tensors swapped (names use ``.`` so pass a dict via ``**``)."""
        tensors = dict(self._tensors)
        tensors.update(updates)
        return ModelWeights(self.config, tensors)

    def to_bytes(self) -> bytes:
        return self._payload + struct.pack("<Q", self.checksum)

    def __repr__(self):
        return f"ModelWeights({len(self)} tensors, checksum={self.checksum:016x})"


def _serialize_body(cfg: ModelConfig, tensors: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    cfg_bytes = cfg.to_json().encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(cfg_bytes)))
    buf.write(cfg_bytes)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = tensors[name]
        encoded = name.encode()
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


_LAST_SYNTHESIS = "g_s.deconv3"


def _init_tensor(name: str, shape: tuple[int, ...], cfg: ModelConfig, rng: np.random.Generator):
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "A":
        return -np.broadcast_to(np.arange(1, shape[1] + 1, dtype=np.float32), shape)
    if leaf in ("gain", "D_skip"):
        return np.ones(shape, np.float32)
    if name.endswith("norm.bias"):
        return np.zeros(shape, np.float32)
    if leaf == "delta_bias":
        # step sizes log-uniform in [0.01, 0.1], stored as inverse softplus
        step = np.exp(rng.uniform(np.log(0.01), np.log(0.1), shape))
        return np.log(np.expm1(step)).astype(np.float32)
    if name == "hyper_prior.mean":
        return rng.uniform(-0.5, 0.5, shape).astype(np.float32)
    if name == "hyper_prior.scale":
        return rng.uniform(1.0, 4.0, shape).astype(np.float32)
    if name == f"{_LAST_SYNTHESIS}.bias":
        # untrained reconstructions sit around mid-gray instead of saturating
        return np.full(shape, 0.5, np.float32)

    if leaf == "bias":
        fan_in = None
    elif len(shape) == 4:
        fan_in = shape[1] * shape[2] * shape[3]
        if ".deconv" in name:
            # transposed layout (in, out, k, k); each output sees ~in * (k/2)^2 taps
            fan_in = max(1, shape[0] * shape[2] * shape[3] // 4)
    else:
        fan_in = shape[1]

    if fan_in is None:
        return rng.uniform(-0.02, 0.02, shape).astype(np.float32)
    gain = 1.0
    if leaf == "delta_proj" or name == f"{_LAST_SYNTHESIS}.weight":
        gain = 0.1
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, shape).astype(np.float32)


def init_weights(config: ModelConfig | None = None, seed: int = 0) -> ModelWeights:
    """Deterministic fan-in scaled uniform initialisation."""
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    tensors = {
        name: _init_tensor(name, shape, config, rng)
        for name, shape in architecture_manifest(config).items()
    }
    return ModelWeights(config, tensors)


def save_weights(weights: ModelWeights, sink: str | BinaryIO) -> None:
    data = weights.to_bytes()
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)


def weights_from_bytes(data: bytes) -> ModelWeights:
    if len(data) < len(MAGIC) + 8:
        raise WeightChecksumError("weight file is too short to hold a checksum")
    body, trailer = data[:-8], data[-8:]
    if _checksum(body) != struct.unpack("<Q", trailer)[0]:
        raise WeightChecksumError("weight file checksum mismatch (corrupt or truncated)")
    if body[:4] != MAGIC:
        raise WeightFileError("not a weight file (bad magic)")
    try:
        return _parse_body(body)
    except (struct.error, ValueError) as exc:  # ShapeError and bad UTF-8 are ValueErrors
        raise WeightFileError(f"malformed weight file: {exc}") from exc


def _parse_body(body: bytes) -> ModelWeights:
    view = memoryview(body)
    pos = 4
    version, cfg_len = struct.unpack_from("<HI", view, pos)
    pos += 6
    if version != VERSION:
        raise UnknownVersionError(f"weight file version {version}, this build reads {VERSION}")
    try:
        config = ModelConfig.from_json(bytes(view[pos : pos + cfg_len]).decode())
    except (ValueError, TypeError) as exc:
        raise WeightFileError(f"bad config block: {exc}") from exc
    pos += cfg_len
    (count,) = struct.unpack_from("<I", view, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, pos)
        pos += 2
        name = bytes(view[pos : pos + name_len]).decode()
        pos += name_len
        (ndim,) = struct.unpack_from("<B", view, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(view, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
    if pos != len(body):
        raise WeightFileError(f"{len(body) - pos} trailing bytes after the last record")
    return ModelWeights(config, tensors)


def load_weights(source: str | BinaryIO) -> ModelWeights:
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    return weights_from_bytes(data)
