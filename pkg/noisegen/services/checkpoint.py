"""Archives de points de contrôle (torch.save) écrites de façon atomique."""
import logging
import os
import pickle
from pathlib import Path
from typing import Any, Dict, List, Optional

import torch

from ..config import settings
from ..errors import DatasetIOError, MissingFileError, VersionMismatchError

logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoints"


def checkpoint_path(out_dir, epoch: int) -> Path:
    return Path(out_dir) / CHECKPOINT_DIR / f"epoch_{epoch:04d}.pt"


def list_checkpoints(out_dir) -> List[Path]:
    directory = Path(out_dir) / CHECKPOINT_DIR
    if not directory.is_dir():
        return []
    return sorted(directory.glob("epoch_*.pt"))


def latest_checkpoint(out_dir) -> Optional[Path]:
    found = list_checkpoints(out_dir)
    return found[-1] if found else None


def save_checkpoint(path, payload: Dict[str, Any]) -> Path:
    """Écrit `payload` dans un fichier temporaire puis le renomme"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    archive = dict(payload)
    archive["format_version"] = settings.checkpoint_format_version
    tmp_path = path.with_name(path.name + ".tmp")
    try:
        torch.save(archive, tmp_path)
        os.replace(tmp_path, path)
    except OSError as e:
        raise DatasetIOError(f"cannot write checkpoint ({e})", str(path))
    logger.info("Point de contrôle écrit: %s", path)
    return path


def load_checkpoint(path, map_location: str = "cpu") -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError("checkpoint not found", str(path))
    try:
        archive = torch.load(path, map_location=map_location, weights_only=True)
    except (RuntimeError, EOFError, pickle.UnpicklingError) as e:
        raise DatasetIOError(f"unreadable checkpoint ({e})", str(path))
    version = archive.get("format_version") if isinstance(archive, dict) else None
    if version != settings.checkpoint_format_version:
        raise VersionMismatchError(
            f"checkpoint format_version {version} (expected {settings.checkpoint_format_version})", str(path)
        )
    return archive
