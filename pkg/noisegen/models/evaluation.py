from enum import Enum
from typing import Dict, List, Tuple

from pydantic import BaseModel, Field, field_validator


class KLConfig(BaseModel):
    bin_count: int = Field(default=201, ge=2)
    value_range: Tuple[float, float] = (-0.5, 0.5)
    smoothing_epsilon: float = Field(default=1e-12, ge=0.0)
    out_of_range_warning: float = Field(default=0.05, ge=0.0, le=1.0)

    @field_validator('value_range')
    def validate_range(cls, v):
        low, high = v
        if not low < high:
            raise ValueError("value_range must be an increasing interval")
        return v


class NoiseModelKind(str, Enum):
    GAUSSIAN = "gaussian"
    POISSON_GAUSSIAN = "poisson_gaussian"
    LEARNED = "learned"


class LatentSource(str, Enum):
    MATCHED = "matched"  # image bruitée j ≠ i de la même caméra
    MISMATCHED = "mismatched"  # image bruitée d'une autre caméra


class KLResult(BaseModel):
    kl: float
    out_of_range_real: float = 0.0
    out_of_range_synthetic: float = 0.0
    clipped: bool = False


class PatchKL(BaseModel):
    camera_id: str
    scene_id: str
    kl: float


class KLReport(BaseModel):
    model: str
    mean: float
    std: float
    per_camera: Dict[str, float] = Field(default_factory=dict)
    patches: List[PatchKL] = Field(default_factory=list)
    clipped_patches: int = 0
