"""Mosaïques RGGB: packing 4 canaux et augmentations qui préservent la phase CFA.

Une mosaïque est un tenseur (..., H, W); un patch packé est (..., 4, H/2, W/2)
avec l'ordre de canaux R, G1, G2, B.
"""
from typing import Optional

import torch

from ..errors import ArgumentError, DimensionError


def check_mosaic(mosaic: torch.Tensor) -> None:
    if mosaic.dim() < 2:
        raise DimensionError(f"mosaic must have at least 2 dims, got shape {tuple(mosaic.shape)}")
    height, width = mosaic.shape[-2:]
    if height % 2 or width % 2:
        raise DimensionError(f"mosaic dimensions must be even, got {height}x{width}")


def check_packed(patch: torch.Tensor) -> None:
    if patch.dim() < 3 or patch.shape[-3] != 4:
        raise DimensionError(f"packed patch must have 4 channels, got shape {tuple(patch.shape)}")


def ingest(mosaic: torch.Tensor) -> torch.Tensor:
    """Seul point où les valeurs sont bornées à [0, 1]"""
    if not torch.isfinite(mosaic).all():
        raise ArgumentError("mosaic contains non-finite values")
    check_mosaic(mosaic)
    return mosaic.clamp(0.0, 1.0)


def pack_bayer(mosaic: torch.Tensor) -> torch.Tensor:
    check_mosaic(mosaic)
    return torch.stack((
        mosaic[..., 0::2, 0::2],  # R
        mosaic[..., 0::2, 1::2],  # G1
        mosaic[..., 1::2, 0::2],  # G2
        mosaic[..., 1::2, 1::2],  # B
    ), dim=-3)


def unpack_bayer(patch: torch.Tensor) -> torch.Tensor:
    check_packed(patch)
    h, w = patch.shape[-2:]
    mosaic = patch.new_empty(patch.shape[:-3] + (2 * h, 2 * w))
    mosaic[..., 0::2, 0::2] = patch[..., 0, :, :]
    mosaic[..., 0::2, 1::2] = patch[..., 1, :, :]
    mosaic[..., 1::2, 0::2] = patch[..., 2, :, :]
    mosaic[..., 1::2, 1::2] = patch[..., 3, :, :]
    return mosaic


def bayer_flip_h(mosaic: torch.Tensor) -> torch.Tensor:
    """Miroir horizontal puis suppression d'une colonne de chaque côté.

    Après le miroir la colonne 0 porte un site G (ou B); retirer une colonne
    de chaque bord remet un R en (0, 0). Largeur de sortie W - 2.
    """
    check_mosaic(mosaic)
    width = mosaic.shape[-1]
    if width < 4:
        raise DimensionError(f"bayer_flip_h needs width >= 4, got {width}")
    return torch.flip(mosaic, dims=(-1,))[..., 1:width - 1]


def random_crop(mosaic: torch.Tensor, size: int, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Recadrage carré dont l'origine tombe sur une ligne et une colonne paires"""
    check_mosaic(mosaic)
    if size <= 0 or size % 2:
        raise DimensionError(f"crop size must be a positive even integer, got {size}")
    height, width = mosaic.shape[-2:]
    if size > min(height, width):
        raise DimensionError(f"crop size {size} exceeds mosaic {height}x{width}")
    top = 2 * int(torch.randint(0, (height - size) // 2 + 1, (1,), generator=generator))
    left = 2 * int(torch.randint(0, (width - size) // 2 + 1, (1,), generator=generator))
    return mosaic[..., top:top + size, left:left + size]


def rgb_to_bayer_rggb(rgb: torch.Tensor) -> torch.Tensor:
    """Échantillonne une image (3, H, W) sur la grille RGGB"""
    _, height, width = rgb.shape
    bayer = torch.zeros((height, width), dtype=rgb.dtype)
    bayer[0::2, 0::2] = rgb[0, 0::2, 0::2]  # R
    bayer[0::2, 1::2] = rgb[1, 0::2, 1::2]  # G
    bayer[1::2, 0::2] = rgb[1, 1::2, 0::2]  # G
    bayer[1::2, 1::2] = rgb[2, 1::2, 1::2]  # B
    return bayer


# Domaine réseau: images [0,1] -> [-1,1], bruit multiplié par le même facteur 2

def clean_to_network(clean: torch.Tensor) -> torch.Tensor:
    return clean * 2.0 - 1.0


def noise_to_network(noise: torch.Tensor) -> torch.Tensor:
    return noise * 2.0


def noise_from_network(noise: torch.Tensor) -> torch.Tensor:
    return noise * 0.5
