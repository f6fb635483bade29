"""Aperçus PNG: mosaïque dépackée, bruit amplifié et recentré sur 0.5."""
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .bayer import unpack_bayer


def image_preview(patch: torch.Tensor) -> np.ndarray:
    mosaic = unpack_bayer(patch.detach().cpu()).clamp(0.0, 1.0)
    return mosaic.numpy()


def noise_preview(noise: torch.Tensor, scale: float) -> np.ndarray:
    """0.5 + scale·bruit, borné à [0, 1] après amplification"""
    mosaic = unpack_bayer(noise.detach().cpu())
    return (0.5 + scale * mosaic).clamp(0.0, 1.0).numpy()


def save_png(path, values: np.ndarray) -> Path:
    path = Path(path)
    Image.fromarray(np.round(values * 255.0).astype(np.uint8)).save(path)
    return path
