from pydantic import BaseModel, ConfigDict, Field

from .noise import NoiseLevelFunction


class VirtualCamera(BaseModel):
    """Capteur simulé dont la loi de bruit est connue"""
    model_config = ConfigDict(frozen=True)

    camera_id: str = Field(min_length=1)
    base_nlf: NoiseLevelFunction  # au gain de référence 1
    row_noise_sigma: float = Field(default=0.0, ge=0.0)
    quant_step: float = Field(default=0.0, ge=0.0)
    seed: int = 0

    def noise_signature(self) -> tuple:
        return (
            self.base_nlf.delta_shot,
            self.base_nlf.delta_read,
            self.row_noise_sigma,
            self.quant_step,
        )
