import logging
import shutil
from pathlib import Path

from ..errors import ArgumentError
from ..services.dataset_store import MANIFEST_NAME, DatasetHandle, read_dataset

logger = logging.getLogger(__name__)


def prepare_out_dir(path, force: bool = False) -> Path:
    """Refuse un dossier non vide sans --force; avec --force son contenu est remplacé"""
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ArgumentError(f"--out {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()):
        if not force:
            raise ArgumentError(f"--out {out} is not empty (use --force to overwrite)")
        logger.warning("Contenu de %s remplacé (--force)", out)
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def open_dataset(path) -> DatasetHandle:
    root = Path(path)
    if not (root / MANIFEST_NAME).is_file():
        raise ArgumentError(f"dataset not found: {root} has no {MANIFEST_NAME}")
    return read_dataset(root)


def require_file(path, flag: str) -> Path:
    file_path = Path(path)
    if not file_path.is_file():
        raise ArgumentError(f"{flag} {file_path} does not exist")
    return file_path
