import hashlib
import json
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, model_validator

from .noise import InitNoiseConfig


class FMReduction(str, Enum):
    SUM = "sum"
    MEAN = "mean"


class LossWeights(BaseModel):
    lambda_gp: float = Field(default=10.0, ge=0.0)
    lambda_fm: float = Field(default=1.0, ge=0.0)
    lambda_triplet: float = Field(default=0.5, ge=0.0)
    margin_alpha: float = Field(default=0.2, ge=0.0)
    fm_reduction: FMReduction = FMReduction.SUM  # réduction sur les éléments de features


class TrainConfig(BaseModel):
    lr: float = Field(default=2e-4, gt=0.0)
    beta1: float = Field(default=0.5, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    batch_size: int = Field(default=64, gt=0)
    epochs: int = Field(default=30, gt=0)  # 300 dans le protocole complet
    critic_steps: int = Field(default=1, gt=0)
    weights: LossWeights = Field(default_factory=LossWeights)
    init_noise: InitNoiseConfig = Field(default_factory=InitNoiseConfig)

    # Ablations
    use_fm: bool = True
    use_encoder: bool = True
    use_triplet: bool = True

    seed: int = 0
    base_channels: int = Field(default=64, gt=0)  # 64 = tables d'architecture
    zero_init_residual: bool = True
    steps_per_epoch: Optional[int] = Field(default=None, gt=0)
    max_train_pairs: Optional[int] = Field(default=None, gt=0)
    val_patches: int = Field(default=128, gt=0)
    checkpoint_every: int = Field(default=1, gt=0)

    @model_validator(mode="after")
    def check_flags(self):
        if self.use_triplet and not self.use_encoder:
            raise ValueError("use_triplet requires use_encoder")
        return self

    @property
    def latent_dim(self) -> int:
        return 8 * self.base_channels

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def effective_weights(self) -> LossWeights:
        """Poids effectifs après application des drapeaux d'ablation"""
        return self.weights.model_copy(update={
            "lambda_fm": self.weights.lambda_fm if self.use_fm else 0.0,
            "lambda_triplet": self.weights.lambda_triplet if self.use_triplet else 0.0,
        })
