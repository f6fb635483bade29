from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class NoiseLevelFunction(BaseModel):
    """Paramètres (δ_shot, δ_read) de la variance δ_shot·I + δ_read"""
    model_config = ConfigDict(frozen=True)

    delta_shot: float = Field(ge=0.0)
    delta_read: float = Field(ge=0.0)

    @property
    def is_noisy(self) -> bool:
        return self.delta_shot > 0.0 or self.delta_read > 0.0

    def variance_at(self, intensity: float) -> float:
        return self.delta_shot * intensity + self.delta_read


class InitNoiseMode(str, Enum):
    POISSON_GAUSSIAN = "poisson_gaussian"
    GAUSSIAN = "gaussian"


class InitNoiseConfig(BaseModel):
    mode: InitNoiseMode = InitNoiseMode.POISSON_GAUSSIAN
    # None en mode gaussien = σ calculé sur le jeu de données (level_matched_sigma)
    gaussian_sigma: Optional[float] = Field(default=None, ge=0.0)

    @model_validator(mode="after")
    def check_sigma(self):
        if self.mode == InitNoiseMode.GAUSSIAN and self.gaussian_sigma is not None and self.gaussian_sigma <= 0:
            raise ValueError("gaussian mode requires gaussian_sigma > 0")
        return self
