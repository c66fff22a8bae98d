from __future__ import annotations

import json
from dataclasses import asdict, dataclass

LAMBDAS = (0.0035, 0.0067, 0.013, 0.025, 0.05)
SIGMA_MIN = 0.11


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``N`` hyperprior channels, ``M`` latent channels split into ``K`` equal
    chunks, ``window`` is the local-attention window side. The defaults are the
    published operating point; smaller widths are useful for quick experiments.
    """

    N: int = 128
    M: int = 320
    K: int = 5
    window: int = 8
    lambda_index: int = 0
    state_dim: int = 16
    heads: int = 8
    analysis_widths: tuple[int, int, int] = (192, 192, 240)
    hyper_widths: tuple[int, int] = (256, 384)
    agg_width: int = 256

    def __post_init__(self):
        object.__setattr__(self, "analysis_widths", tuple(self.analysis_widths))
        object.__setattr__(self, "hyper_widths", tuple(self.hyper_widths))
        if self.M % self.K:
            raise ValueError(f"M={self.M} is not divisible by K={self.K}")
        if self.agg_width % self.heads:
            raise ValueError(f"agg_width={self.agg_width} is not divisible by heads={self.heads}")
        if not 0 <= self.lambda_index < len(LAMBDAS):
            raise ValueError(f"lambda_index must be in 0..{len(LAMBDAS) - 1}")
        if len(self.analysis_widths) != 3 or len(self.hyper_widths) != 2:
            raise ValueError("analysis_widths needs 3 entries and hyper_widths 2")

    @property
    def chunk(self) -> int:
        return self.M // self.K

    @property
    def lmbda(self) -> float:
        return LAMBDAS[self.lambda_index]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


def small_config(**overrides) -> ModelConfig:
    """A narrow model with the same topology, for tests and demos."""
    base = dict(N=16, M=40, K=5, window=4, state_dim=4, heads=2,
                analysis_widths=(12, 16, 24), hyper_widths=(24, 32), agg_width=32)
    base.update(overrides)
    return ModelConfig(**base)
