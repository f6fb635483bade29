"""Évaluation: KL d'histogrammes, sondes inter-caméras, séparation latente, PSNR/SSIM."""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy.stats import entropy
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from ..errors import ArgumentError, DataError, DimensionError
from ..models.evaluation import KLConfig, KLReport, KLResult, LatentSource, NoiseModelKind, PatchKL
from .dataset_store import PairTable
from .init_noise import NLFBatch, level_matched_sigma
from .noise_model import NoiseModel
from .rng import make_generator
from .sampling import pick_index

logger = logging.getLogger(__name__)

PSNR_INF = float("inf")
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


# KL d'histogrammes

def kl_from_histograms(p_counts, q_counts, epsilon: float = 1e-12) -> float:
    """Σ p·ln(p/q) après normalisation, lissage ε et renormalisation"""
    p = np.asarray(p_counts, dtype=np.float64)
    q = np.asarray(q_counts, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"histograms differ in size: {p.shape} vs {q.shape}")
    p = p / p.sum() if p.sum() > 0 else np.full_like(p, 1.0 / p.size)
    q = q / q.sum() if q.sum() > 0 else np.full_like(q, 1.0 / q.size)
    p = (p + epsilon) / (1.0 + epsilon * p.size)
    q = (q + epsilon) / (1.0 + epsilon * q.size)
    # entropy(p, q) renormalise et calcule Σ p·ln(p/q)
    return float(entropy(p, q))


def _histogram(samples: np.ndarray, cfg: KLConfig) -> Tuple[np.ndarray, float]:
    counts, _ = np.histogram(samples, bins=cfg.bin_count, range=cfg.value_range)
    outside = 1.0 - counts.sum() / samples.size
    return counts, float(outside)


def _as_array(samples) -> np.ndarray:
    if isinstance(samples, torch.Tensor):
        samples = samples.detach().cpu().numpy()
    return np.asarray(samples, dtype=np.float64).ravel()


def histogram_kl(real_noise_samples, synthetic_noise_samples, cfg: Optional[KLConfig] = None) -> KLResult:
    cfg = cfg or KLConfig()
    real = _as_array(real_noise_samples)
    synthetic = _as_array(synthetic_noise_samples)
    if real.size == 0 or synthetic.size == 0:
        raise ArgumentError("histogram_kl needs non-empty sample sets")
    p_counts, outside_real = _histogram(real, cfg)
    q_counts, outside_synthetic = _histogram(synthetic, cfg)
    return KLResult(
        kl=kl_from_histograms(p_counts, q_counts, cfg.smoothing_epsilon),
        out_of_range_real=outside_real,
        out_of_range_synthetic=outside_synthetic,
        clipped=max(outside_real, outside_synthetic) > cfg.out_of_range_warning,
    )


# Choix des images bruitées qui fournissent le vecteur latent

def latent_partners(
    table: PairTable,
    source: LatentSource,
    generator: torch.Generator,
) -> torch.Tensor:
    """Indice de l'image bruitée de référence pour chaque patch de `table`"""
    pools = [torch.nonzero(table.camera_index == c).flatten() for c in range(len(table.camera_ids))]
    populated = [c for c, pool in enumerate(pools) if len(pool) > 0]
    if source == LatentSource.MISMATCHED and len(populated) < 2:
        raise ArgumentError("mismatched latents need at least 2 cameras")
    partners = []
    for idx, cam in enumerate(table.camera_index.tolist()):
        if source == LatentSource.MATCHED:
            partners.append(pick_index(pools[cam], generator, exclude=idx))
        else:
            others = [c for c in populated if c != cam]
            pool = pools[others[int(torch.randint(0, len(others), (1,), generator=generator))]]
            partners.append(pick_index(pool, generator))
    return torch.tensor(partners, dtype=torch.long)


def _check_nlf(table: PairTable) -> None:
    bad = torch.nonzero(~torch.isfinite(table.delta_shot) | ~torch.isfinite(table.delta_read)).flatten()
    if len(bad):
        record = table.records[int(bad[0])]
        raise DataError(f"missing NLF for {record.key}", record.noisy_file)


def _report(name: str, table: PairTable, kls: List[KLResult]) -> KLReport:
    values = np.array([r.kl for r in kls])
    patches = [
        PatchKL(camera_id=rec.camera_id, scene_id=rec.scene_id, kl=r.kl)
        for rec, r in zip(table.records, kls)
    ]
    per_camera = {}
    for camera_id in table.camera_ids:
        cam_values = [p.kl for p in patches if p.camera_id == camera_id]
        if cam_values:
            per_camera[camera_id] = float(np.mean(cam_values))
    clipped = sum(r.clipped for r in kls)
    if clipped:
        logger.warning("%s: %d patches avec plus de 5%% de masse hors plage", name, clipped)
    return KLReport(
        model=name,
        mean=float(values.mean()),
        std=float(values.std()),
        per_camera=per_camera,
        patches=patches,
        clipped_patches=clipped,
    )


def model_kl_eval(
    model: NoiseModel,
    table: PairTable,
    cfg: Optional[KLConfig] = None,
    latent_source: LatentSource = LatentSource.MATCHED,
    seed: int = 0,
    batch_size: int = 64,
    name: Optional[str] = None,
    noisy_refs: Optional[torch.Tensor] = None,
) -> KLReport:
    """KL par patch entre bruit réel et bruit synthétisé, puis moyennes globale et par caméra"""
    cfg = cfg or KLConfig()
    if len(table) == 0:
        raise ArgumentError("model_kl_eval needs at least one pair")
    _check_nlf(table)
    generator = make_generator("kl-eval", seed)
    if noisy_refs is None and model.kind == NoiseModelKind.LEARNED:
        partners = latent_partners(table, latent_source, make_generator("kl-partners", seed, latent_source.value))
        noisy_refs = table.noisy[partners]

    if model.kind == NoiseModelKind.GAUSSIAN and model.init_cfg.gaussian_sigma is None:
        # σ calé sur le niveau moyen de toute la partition évaluée
        sigma = level_matched_sigma(table.clean, NLFBatch(table.delta_shot, table.delta_read))
        model = NoiseModel.baseline(NoiseModelKind.GAUSSIAN, gaussian_sigma=sigma)

    results: List[KLResult] = []
    real_noise = table.real_noise
    for start in range(0, len(table), batch_size):
        sl = slice(start, start + batch_size)
        noisy_ref = noisy_refs[sl] if noisy_refs is not None else None
        synthesis = model.synthesize(
            table.clean[sl],
            NLFBatch(table.delta_shot[sl], table.delta_read[sl]),
            noisy_ref=noisy_ref,
            generator=generator,
        )
        for real, fake in zip(real_noise[sl], synthesis.final):
            results.append(histogram_kl(real, fake, cfg))
    return _report(name or model.kind.value, table, results)


def select_patches(table: PairTable, n_patches: int, seed: int) -> PairTable:
    """Sous-ensemble déterministe de `n_patches` paires"""
    if n_patches >= len(table):
        return table
    order = torch.randperm(len(table), generator=make_generator("select", seed))[:n_patches]
    return table.subset(order.sort().values)


def cross_camera_kl(
    model: NoiseModel,
    table: PairTable,
    cfg: Optional[KLConfig] = None,
    n_patches: int = 100,
    seed: int = 0,
) -> Tuple[KLReport, KLReport]:
    """(latent de la même caméra, latent d'une autre caméra) sur les mêmes patches et le même ñ_init"""
    subset = select_patches(table, n_patches, seed)
    matched = model_kl_eval(model, subset, cfg, LatentSource.MATCHED, seed, name="matched")
    mismatched = model_kl_eval(model, subset, cfg, LatentSource.MISMATCHED, seed, name="mismatched")
    return matched, mismatched


@dataclass
class AnchorStability:
    camera_id: str
    anchors: List[int]
    per_anchor: List[float]

    @property
    def relative_spread(self) -> float:
        values = np.array(self.per_anchor)
        return float((values.max() - values.min()) / values.mean())


def anchor_stability(
    model: NoiseModel,
    table: PairTable,
    camera_id: str,
    cfg: Optional[KLConfig] = None,
    n_anchors: int = 5,
    seed: int = 0,
) -> AnchorStability:
    """KL moyen de la caméra avec une seule image bruitée d'ancrage par passe

    L'ancre est retirée des patches évalués.
    """
    if camera_id not in table.camera_ids:
        raise ArgumentError(f"unknown camera id '{camera_id}'")
    camera_table = table.subset(table.indices_of_camera(camera_id))
    if len(camera_table) < max(n_anchors, 2):
        raise ArgumentError(f"camera {camera_id} has {len(camera_table)} pairs, too few for {n_anchors} anchors")
    anchors = torch.randperm(len(camera_table), generator=make_generator("anchors", seed, camera_id))[:n_anchors]
    per_anchor = []
    for anchor in anchors.tolist():
        evaluated = camera_table.subset(torch.tensor([n for n in range(len(camera_table)) if n != anchor]))
        refs = camera_table.noisy[anchor].expand(len(evaluated), -1, -1, -1)
        report = model_kl_eval(model, evaluated, cfg, seed=seed, noisy_refs=refs, name=f"anchor{anchor}")
        per_anchor.append(report.mean)
    return AnchorStability(camera_id=camera_id, anchors=anchors.tolist(), per_anchor=per_anchor)


# Espace latent

def encode_table(model: NoiseModel, table: PairTable, batch_size: int = 64) -> torch.Tensor:
    if not model.uses_encoder:
        raise ArgumentError("this noise model has no camera encoder")
    chunks = [model.encode(table.noisy[s:s + batch_size]) for s in range(0, len(table), batch_size)]
    return torch.cat(chunks).cpu()


def latent_separation(latents, camera_labels: Sequence[str]) -> float:
    """(distance moyenne entre centroïdes) / (distance moyenne point-centroïde intra-caméra)"""
    points = latents.detach().cpu().numpy() if isinstance(latents, torch.Tensor) else np.asarray(latents)
    points = points.astype(np.float64)
    labels = np.asarray(list(camera_labels))
    if points.ndim != 2 or len(points) != len(labels):
        raise DimensionError(f"expected (N, L) latents with N labels, got {points.shape} and {len(labels)}")
    cameras = sorted(set(labels.tolist()))
    if len(cameras) < 2:
        raise ArgumentError("latent_separation needs at least 2 cameras")

    centroids, intra = [], []
    for camera in cameras:
        members = points[labels == camera]
        if len(members) < 2:
            raise ArgumentError(f"camera {camera} has fewer than 2 latents")
        centroid = members.mean(axis=0)
        centroids.append(centroid)
        intra.extend(np.linalg.norm(members - centroid, axis=1))
    intra_mean = float(np.mean(intra))
    if intra_mean == 0.0:
        raise ArgumentError("latent_separation is undefined: zero intra-camera distance")

    inter = [
        np.linalg.norm(centroids[a] - centroids[b])
        for a in range(len(centroids)) for b in range(a + 1, len(centroids))
    ]
    return float(np.mean(inter)) / intra_mean


def export_latents_csv(path, latents, camera_labels: Sequence[str]) -> Path:
    path = Path(path)
    points = latents.detach().cpu().numpy() if isinstance(latents, torch.Tensor) else np.asarray(latents)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["camera_id"] + [f"v{d:03d}" for d in range(points.shape[1])])
        for label, row in zip(camera_labels, points):
            writer.writerow([label] + [repr(float(x)) for x in row])
    return path


# Qualité d'image

def _check_pair(img_a: torch.Tensor, img_b: torch.Tensor) -> None:
    if img_a.shape != img_b.shape:
        raise DimensionError(f"image shapes differ: {tuple(img_a.shape)} vs {tuple(img_b.shape)}")


def psnr(img_a: torch.Tensor, img_b: torch.Tensor, max_value: float = 1.0) -> float:
    """10·log10(max²/MSE); MSE nulle -> +inf"""
    _check_pair(img_a, img_b)
    a = img_a.detach().cpu().double().numpy()
    b = img_b.detach().cpu().double().numpy()
    if np.array_equal(a, b):
        return PSNR_INF
    return float(peak_signal_noise_ratio(a, b, data_range=max_value))


def ssim(img_a: torch.Tensor, img_b: torch.Tensor, max_value: float = 1.0) -> float:
    """SSIM fenêtre gaussienne 11x11 (σ=1.5) par canal packé, moyenné sur les canaux et le lot"""
    _check_pair(img_a, img_b)
    a = img_a.detach().cpu().double().numpy()
    b = img_b.detach().cpu().double().numpy()
    if a.ndim == 3:
        a, b = a[None], b[None]
    if a.ndim != 4:
        raise DimensionError(f"ssim expects (C, h, w) or (B, C, h, w), got {tuple(img_a.shape)}")
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise DimensionError(f"ssim needs spatial dims >= {SSIM_WINDOW}, got {tuple(a.shape[-2:])}")
    values = [
        structural_similarity(x, y, data_range=max_value, channel_axis=0, gaussian_weights=True,
                              sigma=SSIM_SIGMA, use_sample_covariance=False)
        for x, y in zip(a, b)
    ]
    return float(np.mean(values))


def summarize_reports(reports: Dict[str, KLReport]) -> Dict[str, object]:
    """Résumé JSON: moyennes par modèle et drapeau d'ordre croissant des KL"""
    order = [NoiseModelKind.LEARNED.value, NoiseModelKind.POISSON_GAUSSIAN.value, NoiseModelKind.GAUSSIAN.value]
    present = [name for name in order if name in reports]
    means = [reports[name].mean for name in present]
    return {
        "models": {name: {"mean": r.mean, "std": r.std, "per_camera": r.per_camera,
                          "n_patches": len(r.patches), "clipped_patches": r.clipped_patches}
                   for name, r in reports.items()},
        "ordering": present,
        "ascending_kl": all(x < y for x, y in zip(means, means[1:])),
    }
