from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class DenoiseSource(str, Enum):
    GAUSSIAN = "gaussian"
    POISSON_GAUSSIAN = "poisson_gaussian"
    LEARNED_MODEL = "learned_model"
    REAL_ONLY = "real_only"
    LEARNED_PLUS_REAL = "learned_plus_real"


class NormKind(str, Enum):
    INSTANCE = "instance"
    BATCH = "batch"
    NONE = "none"


class DenoiseTrainRegime(BaseModel):
    source: DenoiseSource
    mix_ratio: Optional[Tuple[int, int]] = None  # synthétique:réel

    @model_validator(mode="after")
    def check_mix(self):
        if self.source == DenoiseSource.LEARNED_PLUS_REAL:
            if self.mix_ratio is None:
                self.mix_ratio = (5, 1)
            if self.mix_ratio[0] <= 0 or self.mix_ratio[1] <= 0:
                raise ValueError("mix_ratio entries must be positive")
        elif self.mix_ratio is not None:
            raise ValueError("mix_ratio applies only to learned_plus_real")
        return self

    @property
    def needs_noise_model(self) -> bool:
        return self.source in (DenoiseSource.LEARNED_MODEL, DenoiseSource.LEARNED_PLUS_REAL)

    @property
    def uses_real_pairs(self) -> bool:
        return self.source in (DenoiseSource.REAL_ONLY, DenoiseSource.LEARNED_PLUS_REAL)


class DenoiserConfig(BaseModel):
    # Adam identique à TrainConfig
    lr: float = Field(default=2e-4, gt=0.0)
    beta1: float = Field(default=0.5, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    batch_size: int = Field(default=64, gt=0)
    steps: int = Field(default=3000, gt=0)
    depth: int = Field(default=9, ge=3)
    features: int = Field(default=64, gt=0)
    norm: NormKind = NormKind.INSTANCE
    seed: int = 0
    camera: Optional[str] = None  # débruiteur spécifique à une caméra
    max_real_pairs: Optional[int] = Field(default=None, gt=0)
    log_every: int = Field(default=50, gt=0)
