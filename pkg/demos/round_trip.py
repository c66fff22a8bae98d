"""
Coding one image end to end
===========================

Seeded random weights, a synthetic picture, and the full encode/decode path.
The weights are untrained so the picture quality is poor, but every bit of
the stream is accounted for and the decoder reproduces the encoder exactly.
"""

import numpy as np

from sscodec import init_weights, small_config
from sscodec.codec import CodedImage, decode_image, decode_latents
from sscodec.evaluation import encode_file_image, stream_bpp, substream_report
from sscodec.metrics import psnr
from sscodec.selftest import synthetic_image

# A 128x128 test card and a narrow model (the published widths work the same, just slower)
x = synthetic_image(128, seed=0)
weights = init_weights(small_config(lambda_index=2), seed=0)
print(weights)

###############################################################################
# Encode. The stream holds the hyper latent followed by an anchor and a
# non-anchor substream for each of the five channel chunks.

enc = encode_file_image(x, weights)
data = enc.coded.to_bytes()
print(f"{len(data)} bytes, {stream_bpp(enc.coded):.4f} bpp")
for line in substream_report(enc.coded, enc.estimated_bits):
    print(line)

###############################################################################
# Decode from the bytes alone. The latents match bit for bit, which is what
# keeps the entropy coder in step.

coded = CodedImage.from_bytes(data)
latents = decode_latents(coded, weights)
print("y_hat identical:", np.array_equal(latents.y_hat, enc.y_hat))
print("z_hat identical:", np.array_equal(latents.z_hat, enc.z_hat))

x_hat = decode_image(coded, weights)
print(f"PSNR {psnr(x[0], x_hat[0]):.2f} dB")

###############################################################################
# A stream cut after the second chunk still decodes chunks 1 and 2 exactly.

from dataclasses import replace

cut = replace(enc.coded, substreams=enc.coded.substreams[:5]).to_bytes()
prefix = decode_latents(CodedImage.from_bytes(cut, allow_partial=True), weights, allow_partial=True)
c = weights.config.chunk
print(f"{len(cut)} of {len(data)} bytes -> {prefix.chunks_decoded} chunks,",
      "match:", np.array_equal(prefix.y_hat[:, : 2 * c], enc.y_hat[:, : 2 * c]))
