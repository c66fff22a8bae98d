"""Learned image codec built on selective state-space transforms."""

from .codec import CodedImage, decode_image, decode_latents, encode_image, pad_image
from .config import LAMBDAS, SIGMA_MIN, ModelConfig, small_config
from .transform import analyze, hyper_analyze, hyper_synthesize, synthesize
from .weights import ModelWeights, init_weights, load_weights, save_weights

__version__ = "0.1.0"
