"""DnCNN-9 et ses régimes d'entraînement (bruit statistique, appris, réel, mélange 5:1)."""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ArgumentError, ConfigurationError
from ..models.denoiser import DenoiserConfig, DenoiseSource, DenoiseTrainRegime, NormKind
from ..models.evaluation import NoiseModelKind
from ..models.noise import InitNoiseConfig, InitNoiseMode
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset_store import DatasetHandle, PairTable
from .evaluation import PSNR_INF, psnr, ssim
from .init_noise import NLFBatch, level_matched_sigma, sample_init_noise
from .networks import InstanceNorm2d
from .noise_model import NoiseModel
from .rng import make_generator
from .sampling import pick_index
from .trainer import limit_pairs

logger = logging.getLogger(__name__)


def _norm_layer(kind: NormKind, channels: int) -> Optional[nn.Module]:
    if kind == NormKind.INSTANCE:
        return InstanceNorm2d(channels)
    if kind == NormKind.BATCH:
        return nn.BatchNorm2d(channels)
    return None


class DnCNN(nn.Module):
    """conv+ReLU, (depth-2)×(conv+norm+ReLU), conv; prédit le bruit"""

    def __init__(self, depth: int = 9, features: int = 64, norm: NormKind = NormKind.INSTANCE, channels: int = 4):
        super().__init__()
        self.depth = depth
        layers = [nn.Conv2d(channels, features, 3, padding=1), nn.ReLU(inplace=True)]
        for _ in range(depth - 2):
            layers.append(nn.Conv2d(features, features, 3, padding=1))
            norm_layer = _norm_layer(NormKind(norm), features)
            if norm_layer is not None:
                layers.append(norm_layer)
            layers.append(nn.ReLU(inplace=True))
        layers.append(nn.Conv2d(features, channels, 3, padding=1))
        self.dncnn = nn.Sequential(*layers)

    @property
    def convs(self) -> List[nn.Conv2d]:
        return [m for m in self.dncnn if isinstance(m, nn.Conv2d)]

    def zero_init_output(self) -> None:
        last = self.convs[-1]
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)

    def forward(self, noisy: torch.Tensor) -> torch.Tensor:
        return self.dncnn(noisy)


def denoise(model: DnCNN, noisy: torch.Tensor) -> torch.Tensor:
    if noisy.dim() < 3 or noisy.shape[-3] != 4:
        raise ArgumentError(f"denoise expects packed patches (..., 4, h, w), got {tuple(noisy.shape)}")
    single = noisy.dim() == 3
    batch = noisy[None] if single else noisy
    out = batch - model(batch)
    return out[0] if single else out


def is_real_sample(sample_index: int, mix_ratio: Tuple[int, int]) -> bool:
    """Entrelacement déterministe: `synthetic` échantillons synthétiques puis `real` réels"""
    synthetic, real = mix_ratio
    return sample_index % (synthetic + real) >= synthetic


class NoiseSource:
    """Fabrique les entrées bruitées d'un lot de patches propres selon le régime"""

    def __init__(
        self,
        regime: DenoiseTrainRegime,
        table: PairTable,
        noise_model: Optional[NoiseModel] = None,
        gaussian_sigma: Optional[float] = None,
    ):
        self.regime = regime
        self.table = table
        self.noise_model = noise_model
        self.gaussian_sigma = gaussian_sigma

    def synthetic(self, indices: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        clean = self.table.clean[indices]
        nlf = NLFBatch(self.table.delta_shot[indices], self.table.delta_read[indices])
        source = self.regime.source
        if source == DenoiseSource.GAUSSIAN:
            cfg = InitNoiseConfig(mode=InitNoiseMode.GAUSSIAN, gaussian_sigma=self.gaussian_sigma)
            return clean + sample_init_noise(clean, nlf, cfg, generator)
        if source == DenoiseSource.POISSON_GAUSSIAN:
            cfg = InitNoiseConfig(mode=InitNoiseMode.POISSON_GAUSSIAN)
            return clean + sample_init_noise(clean, nlf, cfg, generator)
        # Modèle appris: latent tiré d'une autre image bruitée de la même caméra
        refs = []
        for idx in indices.tolist():
            pool = torch.nonzero(self.table.camera_index == self.table.camera_index[idx]).flatten()
            refs.append(pick_index(pool, generator, exclude=idx))
        synthesis = self.noise_model.synthesize(clean, nlf, noisy_ref=self.table.noisy[refs], generator=generator)
        return clean + synthesis.final


@dataclass
class DenoiserResult:
    model: DnCNN
    regime: DenoiseTrainRegime
    config: DenoiserConfig
    log: List[Dict[str, float]] = field(default_factory=list)
    real_samples: int = 0
    synthetic_samples: int = 0


def train_denoiser(
    regime: DenoiseTrainRegime,
    dataset: DatasetHandle,
    config: DenoiserConfig,
    noise_model: Optional[NoiseModel] = None,
) -> DenoiserResult:
    """Perte L2 sur le bruit résiduel; bruit synthétique tiré à nouveau à chaque lot"""
    if regime.needs_noise_model and noise_model is None:
        raise ConfigurationError(f"regime '{regime.source.value}' needs a noise model checkpoint")
    if noise_model is not None and noise_model.kind != NoiseModelKind.LEARNED and regime.needs_noise_model:
        raise ConfigurationError("learned regimes need a trained generator")

    table = dataset.load_split("train")
    if config.camera is not None:
        if config.camera not in table.camera_ids:
            raise ArgumentError(f"unknown camera id '{config.camera}'")
        table = table.subset(table.indices_of_camera(config.camera))
    real_table = limit_pairs(table, config.max_real_pairs, config.seed) if regime.uses_real_pairs else None

    sigma = None
    if regime.source == DenoiseSource.GAUSSIAN:
        sigma = level_matched_sigma(table.clean, NLFBatch(table.delta_shot, table.delta_read))
    source = NoiseSource(regime, table, noise_model, sigma)

    torch.manual_seed(config.seed)
    model = DnCNN(config.depth, config.features, config.norm)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    result = DenoiserResult(model=model, regime=regime, config=config)

    for step in range(config.steps):
        generator = make_generator("denoiser", config.seed, step)
        first = step * config.batch_size
        if regime.source == DenoiseSource.REAL_ONLY:
            real_mask = torch.ones(config.batch_size, dtype=torch.bool)
        elif regime.source == DenoiseSource.LEARNED_PLUS_REAL:
            real_mask = torch.tensor([is_real_sample(first + b, regime.mix_ratio) for b in range(config.batch_size)])
        else:
            real_mask = torch.zeros(config.batch_size, dtype=torch.bool)

        n_real = int(real_mask.sum())
        n_synthetic = config.batch_size - n_real
        clean = torch.empty((config.batch_size,) + tuple(table.clean.shape[1:]))
        noisy = torch.empty_like(clean)
        if n_synthetic:
            idx = torch.randint(0, len(table), (n_synthetic,), generator=generator)
            clean[~real_mask] = table.clean[idx]
            noisy[~real_mask] = source.synthetic(idx, generator)
        if n_real:
            idx = torch.randint(0, len(real_table), (n_real,), generator=generator)
            clean[real_mask] = real_table.clean[idx]
            noisy[real_mask] = real_table.noisy[idx]

        loss = F.mse_loss(model(noisy), noisy - clean)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        result.real_samples += n_real
        result.synthetic_samples += n_synthetic

        if step % config.log_every == 0 or step == config.steps - 1:
            result.log.append({"step": step, "loss": float(loss)})
            logger.info("Débruiteur %s pas %d: loss=%.6g", regime.source.value, step, float(loss))
    return result


@dataclass
class DenoiserMetrics:
    psnr: float
    ssim: float
    n_pairs: int


def _mean(values: List[float]) -> float:
    return PSNR_INF if any(v == PSNR_INF for v in values) else float(np.mean(values))


@torch.no_grad()
def eval_denoiser(model: nn.Module, table: PairTable, batch_size: int = 64) -> Dict[str, DenoiserMetrics]:
    """PSNR/SSIM moyens par caméra et global (clé "overall")"""
    if len(table) == 0:
        raise ArgumentError("eval_denoiser needs at least one test pair")
    was_training = model.training
    model.eval()
    psnrs, ssims = [], []
    try:
        for start in range(0, len(table), batch_size):
            noisy = table.noisy[start:start + batch_size]
            restored = denoise(model, noisy)
            for out, clean in zip(restored, table.clean[start:start + batch_size]):
                psnrs.append(psnr(out, clean))
                ssims.append(ssim(out, clean))
    finally:
        model.train(was_training)

    metrics = {}
    cameras = [rec.camera_id for rec in table.records]
    for camera_id in table.camera_ids:
        chosen = [n for n, cam in enumerate(cameras) if cam == camera_id]
        if chosen:
            metrics[camera_id] = DenoiserMetrics(
                psnr=_mean([psnrs[n] for n in chosen]), ssim=float(np.mean([ssims[n] for n in chosen])),
                n_pairs=len(chosen),
            )
    metrics["overall"] = DenoiserMetrics(psnr=_mean(psnrs), ssim=float(np.mean(ssims)), n_pairs=len(table))
    return metrics


class IdentityDenoiser(nn.Module):
    """Prédit un bruit nul: la sortie est l'entrée bruitée (référence « sans débruitage »)"""

    def forward(self, noisy: torch.Tensor) -> torch.Tensor:
        return torch.zeros_like(noisy)


EVAL_COLUMNS = ["denoiser", "camera", "psnr", "ssim", "n_pairs"]


def write_eval_csv(path, results: Dict[str, Dict[str, DenoiserMetrics]]) -> Path:
    """Une ligne par (débruiteur, caméra), `overall` compris"""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(EVAL_COLUMNS)
        for label, metrics in results.items():
            for camera_id, m in metrics.items():
                writer.writerow([label, camera_id, repr(m.psnr), repr(m.ssim), m.n_pairs])
    return path


def save_denoiser(path, result: DenoiserResult) -> Path:
    return save_checkpoint(path, {
        "kind": "denoiser",
        "regime": result.regime.model_dump(mode="json"),
        "config": result.config.model_dump(mode="json"),
        "model": result.model.state_dict(),
    })


def load_denoiser(path) -> Tuple[DnCNN, DenoiseTrainRegime, DenoiserConfig]:
    archive = load_checkpoint(path)
    if archive.get("kind") != "denoiser":
        raise ConfigurationError(f"{path} is not a denoiser checkpoint")
    config = DenoiserConfig.model_validate(archive["config"])
    model = DnCNN(config.depth, config.features, config.norm)
    model.load_state_dict(archive["model"])
    model.eval()
    return model, DenoiseTrainRegime.model_validate(archive["regime"]), config
