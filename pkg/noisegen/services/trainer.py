"""Entraînement joint G, D, E: pas du critique (WGAN-GP) puis pas conjoint G+E."""
import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import torch
from torch.utils.data import DataLoader, Dataset

from ..config import settings
from ..errors import ConfigurationError, NonFiniteLossError
from ..models.evaluation import KLConfig, LatentSource, NoiseModelKind
from ..models.noise import InitNoiseConfig
from ..models.training import TrainConfig
from .bayer import clean_to_network, noise_to_network
from .checkpoint import checkpoint_path, load_checkpoint, save_checkpoint
from .dataset_store import DatasetHandle, PairTable
from .evaluation import model_kl_eval, select_patches
from .init_noise import NLFBatch, resolve_init_config, sample_init_noise
from .losses import (
    adv_loss_g,
    critic_loss,
    feature_matching_loss,
    full_generator_loss,
    gradient_penalty,
    triplet_loss,
)
from .networks import CameraEncoder, Discriminator, Generator, request_power_iteration
from .noise_model import NoiseModel, evaluating
from .rng import make_generator, stable_seed
from .sampling import TrainingBatch, sample_batch

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
METRICS_COLUMNS = ["epoch", "l_adv", "l_fm", "l_triplet", "l_critic", "gp", "val_kl", "wall_time"]


@dataclass
class TrainingState:
    config: TrainConfig
    generator: Generator
    discriminator: Discriminator
    encoder: Optional[CameraEncoder]
    opt_d: torch.optim.Adam
    opt_g: torch.optim.Adam
    init_cfg: InitNoiseConfig
    rng: torch.Generator
    camera_ids: List[str] = field(default_factory=list)
    epoch: int = 0
    step: int = 0

    @property
    def device(self) -> torch.device:
        return next(self.generator.parameters()).device


@dataclass
class StepMetrics:
    l_adv: float
    l_fm: Optional[float]
    l_triplet: Optional[float]
    l_critic: float
    gp: float


def build_state(
    config: TrainConfig,
    camera_ids: List[str],
    init_cfg: Optional[InitNoiseConfig] = None,
    device: str = "cpu",
) -> TrainingState:
    torch.manual_seed(stable_seed("init", config.seed))
    generator = Generator(config.base_channels).to(device)
    if config.zero_init_residual:
        generator.zero_init_output()
    discriminator = Discriminator(config.base_channels).to(device)
    encoder = CameraEncoder(config.base_channels).to(device) if config.use_encoder else None

    betas = (config.beta1, config.beta2)
    g_params = list(generator.parameters()) + (list(encoder.parameters()) if encoder is not None else [])
    return TrainingState(
        config=config,
        generator=generator,
        discriminator=discriminator,
        encoder=encoder,
        opt_d=torch.optim.Adam(discriminator.parameters(), lr=config.lr, betas=betas),
        opt_g=torch.optim.Adam(g_params, lr=config.lr, betas=betas),
        init_cfg=init_cfg or config.init_noise,
        rng=make_generator("train", config.seed),
        camera_ids=list(camera_ids),
    )


def _check_finite(state: TrainingState, phase: str, losses: Dict[str, torch.Tensor]) -> None:
    if all(bool(torch.isfinite(v)) for v in losses.values()):
        return
    snapshot = {
        "phase": phase,
        "epoch": state.epoch,
        "step": state.step,
        **{name: float(v) for name, v in losses.items()},
    }
    raise NonFiniteLossError(f"non-finite loss during {phase} update at step {state.step}", snapshot)


def _latent(state: TrainingState, noisy: torch.Tensor) -> torch.Tensor:
    if state.encoder is None:
        return torch.zeros(noisy.shape[0], state.generator.latent_dim, device=noisy.device)
    return state.encoder(clean_to_network(noisy))


def _fake_noise(state: TrainingState, batch: TrainingBatch, clean_net: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    init = sample_init_noise(batch.clean, batch.nlf, state.init_cfg, state.rng)
    latent = _latent(state, batch.anchor)
    fake_net, _ = state.generator(clean_net, noise_to_network(init), latent)
    return fake_net, latent


def critic_update(state: TrainingState, batch: TrainingBatch, clean_net: torch.Tensor,
                  real_net: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """`critic_steps` mises à jour de D; les gradients de D sont remis à None ensuite"""
    config = state.config
    weights = config.effective_weights()
    D = state.discriminator
    for _ in range(config.critic_steps):
        with torch.no_grad():
            fake_net, _ = _fake_noise(state, batch, clean_net)
        scores_fake, _ = D(fake_net, clean_net)
        scores_real, _ = D(real_net, clean_net)
        gp = gradient_penalty(D, fake_net, real_net, clean_net, generator=state.rng)
        l_critic = critic_loss(scores_fake, scores_real, gp, weights.lambda_gp)
        _check_finite(state, "critic", {"l_critic": l_critic, "gp": gp})
        state.opt_d.zero_grad(set_to_none=True)
        l_critic.backward()
        state.opt_d.step()
    state.opt_d.zero_grad(set_to_none=True)
    return l_critic, gp


def generator_update(state: TrainingState, batch: TrainingBatch,
                     clean_net: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Mise à jour conjointe de G et E; D ne reçoit aucun gradient"""
    config = state.config
    weights = config.effective_weights()
    D = state.discriminator
    D.requires_grad_(False)
    try:
        fake_net, latent = _fake_noise(state, batch, clean_net)
        l_adv = adv_loss_g(D(fake_net, clean_net)[0])
        zero = l_adv.new_zeros(())
        l_fm = zero
        if config.use_fm:
            l_fm = feature_matching_loss(D.frozen_features, fake_net, clean_net, weights.fm_reduction)
        l_triplet = zero
        if config.use_triplet:
            positive = _latent(state, batch.positive)
            negative = _latent(state, batch.negative)
            l_triplet = triplet_loss(latent, positive, negative, weights.margin_alpha)
        total = full_generator_loss(l_adv, l_fm, l_triplet, weights)
        _check_finite(state, "generator", {"l_adv": l_adv, "l_fm": l_fm, "l_triplet": l_triplet, "total": total})
        state.opt_g.zero_grad(set_to_none=True)
        total.backward()
        state.opt_g.step()
    finally:
        D.requires_grad_(True)
    return l_adv, l_fm, l_triplet


def train_step(state: TrainingState, batch: TrainingBatch) -> Tuple[TrainingState, StepMetrics]:
    """`critic_steps` mises à jour de D puis une mise à jour conjointe de G et E"""
    config = state.config
    batch = batch.to(state.device)
    clean_net = clean_to_network(batch.clean)
    real_net = noise_to_network(batch.real_noise)
    # une itération de puissance par pas et par réseau
    request_power_iteration(state.generator, state.discriminator, state.encoder)

    l_critic, gp = critic_update(state, batch, clean_net, real_net)
    l_adv, l_fm, l_triplet = generator_update(state, batch, clean_net)

    state.step += 1
    metrics = StepMetrics(
        l_adv=float(l_adv),
        l_fm=float(l_fm) if config.use_fm else None,
        l_triplet=float(l_triplet) if config.use_triplet else None,
        l_critic=float(l_critic),
        gp=float(gp),
    )
    return state, metrics


class BatchDataset(Dataset):
    """Lot `index` de l'époque `epoch`; chaque lot a sa propre graine"""

    def __init__(self, table: PairTable, config: TrainConfig, epoch: int, steps: int):
        self.table = table
        self.config = config
        self.epoch = epoch
        self.steps = steps

    def __len__(self) -> int:
        return self.steps

    def __getitem__(self, index: int) -> TrainingBatch:
        generator = make_generator("batch", self.config.seed, self.epoch, index)
        return sample_batch(self.table, self.config.batch_size, generator, require_negatives=self.config.use_triplet)


def make_loader(table: PairTable, config: TrainConfig, epoch: int, steps: int) -> DataLoader:
    options = {}
    if settings.num_workers > 0:
        options["prefetch_factor"] = settings.prefetch_factor
    return DataLoader(
        BatchDataset(table, config, epoch, steps),
        batch_size=None,
        shuffle=False,
        num_workers=settings.num_workers,
        **options,
    )


def state_payload(state: TrainingState) -> Dict:
    return {
        "config": state.config.model_dump(mode="json"),
        "config_hash": state.config.config_hash(),
        "init_noise": state.init_cfg.model_dump(mode="json"),
        "camera_ids": list(state.camera_ids),
        "epoch": state.epoch,
        "step": state.step,
        "generator": state.generator.state_dict(),
        "discriminator": state.discriminator.state_dict(),
        "encoder": state.encoder.state_dict() if state.encoder is not None else None,
        "opt_d": state.opt_d.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "rng_state": state.rng.get_state(),
    }


def restore_state(archive: Dict, config: TrainConfig, device: str = "cpu") -> TrainingState:
    if archive.get("config_hash") != config.config_hash():
        logger.warning("Configuration différente de celle du point de contrôle (reprise quand même)")
    init_cfg = InitNoiseConfig.model_validate(archive["init_noise"])
    state = build_state(config, archive["camera_ids"], init_cfg, device)
    state.generator.load_state_dict(archive["generator"])
    state.discriminator.load_state_dict(archive["discriminator"])
    if state.encoder is not None:
        if archive.get("encoder") is None:
            raise ConfigurationError("checkpoint has no encoder but use_encoder is true")
        state.encoder.load_state_dict(archive["encoder"])
    state.opt_d.load_state_dict(archive["opt_d"])
    state.opt_g.load_state_dict(archive["opt_g"])
    state.rng.set_state(archive["rng_state"])
    state.epoch = archive["epoch"]
    state.step = archive["step"]
    return state


def limit_pairs(table: PairTable, max_pairs: Optional[int], seed: int) -> PairTable:
    if max_pairs is None or max_pairs >= len(table):
        return table
    order = torch.randperm(len(table), generator=make_generator("max-pairs", seed))[:max_pairs]
    return table.subset(order.sort().values)


def validation_kl(state: TrainingState, val_table: PairTable, kl_cfg: Optional[KLConfig] = None) -> float:
    model = NoiseModel(NoiseModelKind.LEARNED, state.init_cfg, state.generator, state.encoder, str(state.device))
    with evaluating(state.generator, state.encoder):
        report = model_kl_eval(model, val_table, kl_cfg, LatentSource.MATCHED, seed=state.config.seed, name="val")
    return report.mean


def _read_metrics(path: Path, up_to_epoch: int) -> List[Dict[str, str]]:
    if not path.is_file():
        return []
    with open(path, newline="", encoding="utf-8") as f:
        return [row for row in csv.DictReader(f) if int(row["epoch"]) <= up_to_epoch]


def _format(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


@dataclass
class TrainResult:
    state: TrainingState
    metrics_path: Path
    checkpoints: List[Path]


def train(
    config: TrainConfig,
    dataset: DatasetHandle,
    out_dir,
    resume_from=None,
    kl_cfg: Optional[KLConfig] = None,
) -> TrainResult:
    """Boucle d'époques: lots du split train, KL de validation sur le split test"""
    out = Path(out_dir)
    device = settings.device
    if config.use_triplet and len(dataset.camera_ids) < 2:
        raise ConfigurationError("use_triplet needs a dataset with at least 2 cameras")

    table = limit_pairs(dataset.load_split("train"), config.max_train_pairs, config.seed)
    val_table = select_patches(dataset.load_split("test"), config.val_patches, config.seed)
    steps = config.steps_per_epoch or math.ceil(len(table) / config.batch_size)

    if resume_from is not None:
        state = restore_state(load_checkpoint(resume_from, map_location=device), config, device)
        logger.info("Reprise depuis %s (époque %d, pas %d)", resume_from, state.epoch, state.step)
    else:
        init_cfg = resolve_init_config(config.init_noise, table.clean, NLFBatch(table.delta_shot, table.delta_read))
        state = build_state(config, dataset.camera_ids, init_cfg, device)

    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / METRICS_FILE
    previous_rows = _read_metrics(metrics_path, state.epoch) if resume_from is not None else []
    with open(metrics_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        writer.writerows(previous_rows)

    logger.info(
        "Entraînement: %d paires, %d caméras, %d pas/époque, époques %d..%d",
        len(table), len(dataset.camera_ids), steps, state.epoch + 1, config.epochs,
    )
    started = time.perf_counter()
    checkpoints = []
    while state.epoch < config.epochs:
        epoch = state.epoch + 1
        totals: Dict[str, List[float]] = {"l_adv": [], "l_fm": [], "l_triplet": [], "l_critic": [], "gp": []}
        for batch in make_loader(table, config, epoch, steps):
            state, metrics = train_step(state, batch)
            for name in totals:
                value = getattr(metrics, name)
                if value is not None:
                    totals[name].append(value)
        state.epoch = epoch

        val_kl = validation_kl(state, val_table, kl_cfg)
        row = {name: _format(sum(v) / len(v) if v else None) for name, v in totals.items()}
        row.update(epoch=epoch, val_kl=_format(val_kl), wall_time=f"{time.perf_counter() - started:.3f}")
        with open(metrics_path, "a", newline="", encoding="utf-8") as f:
            csv.DictWriter(f, fieldnames=METRICS_COLUMNS).writerow(row)
        logger.info(
            "Époque %d: l_adv=%s l_fm=%s l_triplet=%s l_critic=%s gp=%s val_kl=%.6f",
            epoch, row["l_adv"], row["l_fm"] or "-", row["l_triplet"] or "-", row["l_critic"], row["gp"], val_kl,
        )

        if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
            checkpoints.append(save_checkpoint(checkpoint_path(out, epoch), state_payload(state)))

    return TrainResult(state=state, metrics_path=metrics_path, checkpoints=checkpoints)
