import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import torch

from ..errors import ArgumentError, DimensionError
from ..models.camera import VirtualCamera
from ..models.dataset import DatasetManifest, NLFEntry, PairRecord, SceneSplit
from ..models.noise import NoiseLevelFunction
from .bayer import bayer_flip_h, check_packed, ingest, pack_bayer, random_crop, rgb_to_bayer_rggb
from .rng import make_generator

logger = logging.getLogger(__name__)

# Exposants de la loi de gain: δ_shot ∝ gain, δ_read ∝ gain²
SHOT_GAIN_EXPONENT = 1.0
READ_GAIN_EXPONENT = 2.0


def scale_nlf(
    nlf: NoiseLevelFunction,
    gain_ratio: float,
    shot_exponent: float = SHOT_GAIN_EXPONENT,
    read_exponent: float = READ_GAIN_EXPONENT,
) -> NoiseLevelFunction:
    if not gain_ratio > 0:
        raise ArgumentError(f"gain_ratio must be positive, got {gain_ratio}")
    return NoiseLevelFunction(
        delta_shot=nlf.delta_shot * gain_ratio ** shot_exponent,
        delta_read=nlf.delta_read * gain_ratio ** read_exponent,
    )


def simulate_virtual_capture(
    clean: torch.Tensor,
    cam: VirtualCamera,
    gain_ratio: float,
    generator: Optional[torch.Generator] = None,
) -> Tuple[torch.Tensor, NoiseLevelFunction]:
    """Capture bruitée d'un patch packé (4, h, w) par une caméra virtuelle.

    Le NLF retourné ne décrit que la composante Poisson-gaussienne; le bruit
    de ligne et la quantification restent hors du NLF.
    """
    check_packed(clean)
    if clean.dim() != 3:
        raise DimensionError(f"expected a single packed patch (4, h, w), got {tuple(clean.shape)}")
    nlf = scale_nlf(cam.base_nlf, gain_ratio)

    variance = nlf.delta_shot * clean + nlf.delta_read
    noisy = clean + torch.randn(clean.shape, generator=generator, dtype=clean.dtype) * variance.sqrt()

    if cam.row_noise_sigma > 0:
        # Un décalage par ligne RAW: les lignes paires portent R/G1, les impaires G2/B
        h = clean.shape[-2]
        offsets = torch.randn((2, h), generator=generator, dtype=clean.dtype) * cam.row_noise_sigma
        row_map = offsets.repeat_interleave(2, dim=0)[:, :, None]  # (4, h, 1): R,G1 <- pair; G2,B <- impair
        noisy = noisy + row_map

    if cam.quant_step > 0:
        noisy = torch.round(noisy / cam.quant_step) * cam.quant_step

    return noisy, nlf


def make_virtual_cameras(count: int, seed: int = 0) -> List[VirtualCamera]:
    """Caméras virtuelles aux lois de bruit nettement distinctes.

    Le NLF grandit doucement avec l'indice, le bruit de ligne et le pas de
    quantification alternent pour que chaque caméra ait une signature
    que le modèle Poisson-gaussien ne capture pas.
    """
    if count < 1:
        raise ArgumentError("at least one camera is required")
    generator = torch.Generator().manual_seed(seed)
    cameras = []
    for k in range(count):
        jitter = 1.0 + 0.1 * float(torch.rand((), generator=generator))
        cameras.append(VirtualCamera(
            camera_id=f"cam{k:02d}",
            base_nlf=NoiseLevelFunction(
                delta_shot=round(4e-4 * (1.0 + 0.5 * k) * jitter, 9),
                delta_read=round(4e-6 * (1.0 + k) * jitter, 11),
            ),
            row_noise_sigma=round(0.004 * (k % 3), 6),
            quant_step=(1.0 / 512.0) if k % 2 else 0.0,
            seed=seed * 1000 + k,
        ))
    return cameras


def render_scene(scene_id: str, size: int, seed: int) -> torch.Tensor:
    """Scène propre procédurale (mosaïque RGGB size×size dans [0, 1])"""
    generator = make_generator("scene", seed, scene_id)

    ys = torch.linspace(0.0, 1.0, size)[:, None]
    xs = torch.linspace(0.0, 1.0, size)[None, :]
    rgb = torch.empty((3, size, size))
    base = torch.rand(3, generator=generator) * 0.5 + 0.1
    slope = (torch.rand(3, 2, generator=generator) - 0.5) * 0.6
    for c in range(3):
        rgb[c] = base[c] + slope[c, 0] * ys + slope[c, 1] * xs

    # Formes aléatoires (rectangles et disques)
    for _ in range(12):
        color = torch.rand(3, 1, 1, generator=generator)
        cy, cx = torch.rand(2, generator=generator) * size
        radius = float(torch.rand((), generator=generator)) * size / 6 + 2
        if float(torch.rand((), generator=generator)) < 0.5:
            mask = ((ys * size - cy).abs() < radius) & ((xs * size - cx).abs() < radius * 0.7)
        else:
            mask = (ys * size - cy) ** 2 + (xs * size - cx) ** 2 < radius ** 2
        rgb = torch.where(mask[None], color.expand(3, size, size), rgb)

    # Texture fine
    freq = float(torch.rand((), generator=generator)) * 20 + 5
    rgb = rgb + 0.05 * torch.sin(2 * math.pi * freq * (xs + 0.5 * ys))[None]
    return ingest(rgb_to_bayer_rggb(rgb))


def augment_patch(scene: torch.Tensor, patch_size: int, generator: torch.Generator) -> torch.Tensor:
    """Recadrage aléatoire + miroir horizontal, en préservant RGGB"""
    if float(torch.rand((), generator=generator)) < 0.5:
        wide = random_crop(scene, patch_size + 2, generator)
        return bayer_flip_h(wide)[..., :patch_size, :]
    return random_crop(scene, patch_size, generator)


@dataclass
class PairPayload:
    record: PairRecord
    clean: torch.Tensor
    noisy: torch.Tensor


def synthesize_pairs(
    cameras: Sequence[VirtualCamera],
    scenes: SceneSplit,
    patches_per_scene: int,
    gains: Sequence[float],
    seed: int,
    patch_size: int = 64,
    scene_size: int = 256,
) -> Tuple[DatasetManifest, Iterator[PairPayload]]:
    """Prépare le manifeste et l'itérateur des paires simulées.

    Chaque (caméra, scène) reçoit `patches_per_scene` patches; le réglage de
    gain alterne entre les valeurs de `gains`.
    """
    if patches_per_scene <= 0:
        raise ArgumentError("patches_per_scene must be positive")
    if scene_size < patch_size + 2:
        raise ArgumentError("scene_size must exceed patch_size by at least 2")

    nlf_entries = []
    records = []
    for cam in cameras:
        for scene_id in scenes.train + scenes.test:
            for setting, gain in enumerate(gains):
                nlf_entries.append(NLFEntry(
                    camera_id=cam.camera_id, scene_id=scene_id, setting=setting,
                    nlf=scale_nlf(cam.base_nlf, gain),
                ))
            for index in range(patches_per_scene):
                stem = f"{cam.camera_id}/{scene_id}/{index:05d}"
                records.append(PairRecord(
                    camera_id=cam.camera_id, scene_id=scene_id,
                    setting=index % len(gains), index=index,
                    clean_file=f"{stem}_clean.f32", noisy_file=f"{stem}_noisy.f32",
                ))

    manifest = DatasetManifest(
        patch_shape=[4, patch_size // 2, patch_size // 2],
        cameras=list(cameras),
        scenes=scenes,
        gains=list(gains),
        nlf=nlf_entries,
        pairs=records,
        seed=seed,
    )

    def payloads() -> Iterator[PairPayload]:
        scene_cache = {}
        by_camera = {cam.camera_id: cam for cam in cameras}
        for record in records:
            if record.scene_id not in scene_cache:
                scene_cache[record.scene_id] = render_scene(record.scene_id, scene_size, seed)
            cam = by_camera[record.camera_id]
            generator = make_generator("pair", seed, cam.seed, record.scene_id, record.index)
            clean = pack_bayer(augment_patch(scene_cache[record.scene_id], patch_size, generator))
            noisy, _ = simulate_virtual_capture(clean, cam, gains[record.setting], generator)
            yield PairPayload(record=record, clean=clean, noisy=noisy)

    return manifest, payloads()
