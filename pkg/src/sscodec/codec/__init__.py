from .container import CodedImage
from .lattice import build_cdf, snap_mean, snap_scale
from .pipeline import (
    DecodeResult,
    EncodeResult,
    decode_image,
    decode_latents,
    decode_z,
    encode_image,
    encode_z,
    pad_image,
    padded_size,
)
from .rangecoder import RangeDecoder, RangeEncoder, rc_decode, rc_encode
