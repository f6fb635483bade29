from dataclasses import dataclass
from typing import Optional, Tuple, Union

import torch

from ..errors import ArgumentError, ConfigurationError
from ..models.noise import InitNoiseConfig, InitNoiseMode, NoiseLevelFunction
from .simulator import READ_GAIN_EXPONENT, SHOT_GAIN_EXPONENT


@dataclass
class NLFBatch:
    """NLF par échantillon d'un lot (B,)"""
    delta_shot: torch.Tensor
    delta_read: torch.Tensor

    def scaled(self, gain_ratio: float) -> "NLFBatch":
        return NLFBatch(
            self.delta_shot * gain_ratio ** SHOT_GAIN_EXPONENT,
            self.delta_read * gain_ratio ** READ_GAIN_EXPONENT,
        )


NLFLike = Union[NoiseLevelFunction, NLFBatch]


def _nlf_tensors(clean: torch.Tensor, nlf: NLFLike) -> Tuple[torch.Tensor, torch.Tensor]:
    if isinstance(nlf, NoiseLevelFunction):
        shot = torch.tensor(nlf.delta_shot, dtype=clean.dtype, device=clean.device)
        read = torch.tensor(nlf.delta_read, dtype=clean.dtype, device=clean.device)
        return shot, read
    # (B,) -> (B, 1, 1, 1) pour un lot (B, 4, h, w)
    extra = (1,) * (clean.dim() - 1)
    shot = nlf.delta_shot.to(clean).reshape(-1, *extra)
    read = nlf.delta_read.to(clean).reshape(-1, *extra)
    if (shot < 0).any() or (read < 0).any():
        raise ArgumentError("NLF parameters must be nonnegative")
    return shot, read


def variance_map(clean: torch.Tensor, nlf: NLFLike) -> torch.Tensor:
    shot, read = _nlf_tensors(clean, nlf)
    return shot * clean + read


def sample_init_noise(
    clean: torch.Tensor,
    nlf: NLFLike,
    cfg: InitNoiseConfig,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Bruit initial ñ_init: gaussien hétéroscédastique ou gaussien de variance fixe"""
    if torch.isnan(clean).any():
        raise ArgumentError("clean patch contains NaN")
    standard = torch.randn(clean.shape, generator=generator, dtype=clean.dtype).to(clean.device)
    if cfg.mode == InitNoiseMode.GAUSSIAN:
        if cfg.gaussian_sigma is None:
            raise ConfigurationError("gaussian init noise needs gaussian_sigma (see level_matched_sigma)")
        return standard * cfg.gaussian_sigma
    # Les valeurs propres sont dans [0,1]; le clamp protège des -0 numériques
    return standard * variance_map(clean, nlf).clamp_min(0.0).sqrt()


def level_matched_sigma(clean: torch.Tensor, nlf: NLFLike) -> float:
    """σ gaussien de même niveau moyen: sqrt(moyenne de δ_shot·mean(I) + δ_read)"""
    if isinstance(nlf, NoiseLevelFunction):
        return float(nlf.variance_at(float(clean.mean()))) ** 0.5
    mean_intensity = clean.reshape(clean.shape[0], -1).mean(dim=1)
    variance = nlf.delta_shot.to(clean) * mean_intensity + nlf.delta_read.to(clean)
    return float(variance.mean().sqrt())


def resolve_init_config(cfg: InitNoiseConfig, clean: torch.Tensor, nlf: NLFLike) -> InitNoiseConfig:
    """Complète gaussian_sigma à partir des données quand il n'est pas fixé"""
    if cfg.mode == InitNoiseMode.GAUSSIAN and cfg.gaussian_sigma is None:
        return cfg.model_copy(update={"gaussian_sigma": level_matched_sigma(clean, nlf)})
    return cfg
