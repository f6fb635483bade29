"""Modèle de bruit utilisable en inférence: baselines statistiques ou G (+E) appris."""
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Optional

import torch
from torch import nn

from ..errors import ConfigurationError
from ..models.evaluation import NoiseModelKind
from ..models.noise import InitNoiseConfig, InitNoiseMode, NoiseLevelFunction
from ..models.training import TrainConfig
from .bayer import clean_to_network, noise_from_network, noise_to_network
from .checkpoint import load_checkpoint
from .init_noise import NLFLike, resolve_init_config, sample_init_noise
from .networks import CameraEncoder, Generator
from .simulator import scale_nlf

logger = logging.getLogger(__name__)


@dataclass
class Synthesis:
    """Bruits en unités données; final - init ≡ residual"""
    init: torch.Tensor
    residual: torch.Tensor
    final: torch.Tensor


@contextmanager
def evaluating(*modules: Optional[nn.Module]) -> Iterator[None]:
    """Passe temporairement les modules en mode eval (SN sans itération de puissance)"""
    previous = [(m, m.training) for m in modules if m is not None]
    for module, _ in previous:
        module.eval()
    try:
        yield
    finally:
        for module, mode in previous:
            module.train(mode)


class NoiseModel:
    def __init__(
        self,
        kind: NoiseModelKind,
        init_cfg: InitNoiseConfig,
        generator: Optional[Generator] = None,
        encoder: Optional[CameraEncoder] = None,
        device: str = "cpu",
    ):
        if kind == NoiseModelKind.LEARNED and generator is None:
            raise ConfigurationError("a learned noise model needs a generator")
        self.kind = kind
        self.init_cfg = init_cfg
        self.generator = generator
        self.encoder = encoder
        self.device = torch.device(device)

    @classmethod
    def baseline(cls, kind: NoiseModelKind, gaussian_sigma: Optional[float] = None) -> "NoiseModel":
        if kind == NoiseModelKind.GAUSSIAN:
            return cls(kind, InitNoiseConfig(mode=InitNoiseMode.GAUSSIAN, gaussian_sigma=gaussian_sigma))
        if kind == NoiseModelKind.POISSON_GAUSSIAN:
            return cls(kind, InitNoiseConfig(mode=InitNoiseMode.POISSON_GAUSSIAN))
        raise ConfigurationError(f"'{kind.value}' is not a statistical baseline")

    @classmethod
    def from_checkpoint(cls, path, device: str = "cpu") -> "NoiseModel":
        archive = load_checkpoint(path, map_location=device)
        config = TrainConfig.model_validate(archive["config"])
        generator = Generator(config.base_channels)
        generator.load_state_dict(archive["generator"])
        encoder = None
        if archive.get("encoder") is not None:
            encoder = CameraEncoder(config.base_channels)
            encoder.load_state_dict(archive["encoder"])
            encoder.to(device).eval()
        generator.to(device).eval()
        init_cfg = InitNoiseConfig.model_validate(archive.get("init_noise", config.init_noise.model_dump()))
        logger.info("Modèle de bruit chargé depuis %s (époque %s)", path, archive.get("epoch"))
        return cls(NoiseModelKind.LEARNED, init_cfg, generator, encoder, device)

    @property
    def latent_dim(self) -> int:
        return self.generator.latent_dim if self.generator is not None else 0

    @property
    def uses_encoder(self) -> bool:
        return self.encoder is not None

    @torch.no_grad()
    def encode(self, noisy: torch.Tensor) -> torch.Tensor:
        """v = E(I_N); vecteur nul quand le modèle n'a pas d'encodeur"""
        if self.encoder is None:
            return torch.zeros(noisy.shape[0], self.latent_dim, device=self.device)
        return self.encoder(clean_to_network(noisy.to(self.device)))

    @torch.no_grad()
    def synthesize(
        self,
        clean: torch.Tensor,
        nlf: NLFLike,
        noisy_ref: Optional[torch.Tensor] = None,
        latent: Optional[torch.Tensor] = None,
        generator: Optional[torch.Generator] = None,
        gain_ratio: float = 1.0,
    ) -> Synthesis:
        """Bruit synthétique pour un lot (B, 4, h, w) de patches propres.

        Le vecteur latent vient de `latent`, sinon de E(noisy_ref), sinon zéro.
        `gain_ratio` met le NLF à l'échelle avant le tirage de ñ_init.
        """
        if gain_ratio != 1.0:
            nlf = scale_nlf(nlf, gain_ratio) if isinstance(nlf, NoiseLevelFunction) else nlf.scaled(gain_ratio)
        cfg = resolve_init_config(self.init_cfg, clean, nlf)
        init = sample_init_noise(clean, nlf, cfg, generator)

        if self.kind != NoiseModelKind.LEARNED:
            return Synthesis(init=init, residual=torch.zeros_like(init), final=init)

        if latent is None:
            latent = self.encode(noisy_ref) if noisy_ref is not None else None
        clean_net = clean_to_network(clean.to(self.device))
        final_net, _ = self.generator(clean_net, noise_to_network(init.to(self.device)), latent)
        final = noise_from_network(final_net).to(init.device)
        return Synthesis(init=init, residual=final - init, final=final)
