"""Stockage sur disque des paires propre/bruitée.

root/manifest.json
root/<camera>/<scene>/<idx>_clean.f32
root/<camera>/<scene>/<idx>_noisy.f32

Les charges utiles sont des float32 little-endian en ordre C.
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np
import torch
from pydantic import ValidationError

from ..errors import (
    ChecksumError,
    DataError,
    DatasetIOError,
    DatasetValidationError,
    MissingFileError,
    ShapeMismatchError,
    VersionMismatchError,
)
from ..models.dataset import FORMAT_VERSION, DatasetManifest, PairRecord
from .simulator import PairPayload

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
PAYLOAD_DTYPE = np.dtype("<f4")


def write_payload(path: Path, tensor: torch.Tensor) -> str:
    data = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype=PAYLOAD_DTYPE).tobytes(order="C")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_payload(path: Path, shape: List[int], expected_sha256: str = "") -> torch.Tensor:
    if not path.is_file():
        raise MissingFileError("missing payload file", str(path))
    data = path.read_bytes()
    expected_bytes = int(np.prod(shape)) * PAYLOAD_DTYPE.itemsize
    if len(data) != expected_bytes:
        raise ShapeMismatchError(
            f"payload has {len(data)} bytes, expected {expected_bytes} for shape {shape}", str(path)
        )
    if expected_sha256 and hashlib.sha256(data).hexdigest() != expected_sha256:
        raise ChecksumError("payload checksum mismatch", str(path))
    array = np.frombuffer(data, dtype=PAYLOAD_DTYPE).reshape(shape)
    return torch.from_numpy(array.astype(np.float32))


def write_dataset(root_path, manifest: DatasetManifest, pairs: Iterable[PairPayload]) -> DatasetManifest:
    """Écrit les paires puis le manifeste (en dernier, via un renommage atomique).

    Retourne le manifeste complété par les sommes SHA-256.
    """
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    shape = list(manifest.patch_shape)
    expected = {(p.camera_id, p.scene_id, p.index) for p in manifest.pairs}

    records: Dict[Tuple[str, str, int], PairRecord] = {}
    for payload in pairs:
        record = payload.record
        key = (record.camera_id, record.scene_id, record.index)
        if key not in expected:
            raise DatasetValidationError(f"pair {key} is not declared in the manifest")
        for tensor, name in ((payload.clean, record.clean_file), (payload.noisy, record.noisy_file)):
            if list(tensor.shape) != shape:
                raise ShapeMismatchError(f"tensor shape {list(tensor.shape)} != manifest {shape}", name)
        records[key] = record.model_copy(update={
            "clean_sha256": write_payload(root / record.clean_file, payload.clean),
            "noisy_sha256": write_payload(root / record.noisy_file, payload.noisy),
        })

    missing = expected - set(records)
    if missing:
        raise DatasetValidationError(f"{len(missing)} declared pairs were not provided")

    final = manifest.model_copy(update={
        "pairs": [records[(p.camera_id, p.scene_id, p.index)] for p in manifest.pairs],
    })
    tmp_path = root / (MANIFEST_NAME + ".tmp")
    tmp_path.write_text(json.dumps(final.model_dump(mode="json"), indent=2), encoding="utf-8")
    os.replace(tmp_path, root / MANIFEST_NAME)
    logger.info("Jeu de données écrit: %d paires dans %s", len(records), root)
    return final


@dataclass
class PairTable:
    """Paires d'une partition chargées en mémoire, empilées par champ"""
    records: List[PairRecord]
    clean: torch.Tensor  # (N, 4, h, w)
    noisy: torch.Tensor
    delta_shot: torch.Tensor  # (N,)
    delta_read: torch.Tensor
    camera_index: torch.Tensor  # (N,) indice dans camera_ids
    camera_ids: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def real_noise(self) -> torch.Tensor:
        return self.noisy - self.clean

    def indices_of_camera(self, camera_id: str) -> torch.Tensor:
        return torch.nonzero(self.camera_index == self.camera_ids.index(camera_id)).flatten()

    def subset(self, indices: torch.Tensor) -> "PairTable":
        idx = indices.tolist()
        return PairTable(
            records=[self.records[i] for i in idx],
            clean=self.clean[indices],
            noisy=self.noisy[indices],
            delta_shot=self.delta_shot[indices],
            delta_read=self.delta_read[indices],
            camera_index=self.camera_index[indices],
            camera_ids=list(self.camera_ids),
        )


class DatasetHandle:
    """Jeu de données ouvert en lecture; immuable après chargement"""

    def __init__(self, root: Path, manifest: DatasetManifest):
        self.root = root
        self.manifest = manifest
        self._splits: Dict[str, PairTable] = {}

    @property
    def camera_ids(self) -> List[str]:
        return [cam.camera_id for cam in self.manifest.cameras]

    def __iter__(self) -> Iterator[PairPayload]:
        return self.iter_pairs()

    def iter_pairs(self, split: Optional[str] = None) -> Iterator[PairPayload]:
        records = self.manifest.pairs if split is None else self.manifest.pairs_in_split(split)
        shape = list(self.manifest.patch_shape)
        for record in records:
            yield PairPayload(
                record=record,
                clean=read_payload(self.root / record.clean_file, shape, record.clean_sha256),
                noisy=read_payload(self.root / record.noisy_file, shape, record.noisy_sha256),
            )

    def load_split(self, split: str) -> PairTable:
        if split not in ("train", "test"):
            raise DatasetValidationError(f"unknown split '{split}'")
        if split not in self._splits:
            self._splits[split] = self._load(split)
        return self._splits[split]

    def _load(self, split: str) -> PairTable:
        nlf_table = self.manifest.nlf_table()
        camera_ids = self.camera_ids
        records, cleans, noisies, shots, reads, cams = [], [], [], [], [], []
        for payload in self.iter_pairs(split):
            record = payload.record
            nlf = nlf_table.get(record.key)
            if nlf is None:
                raise DataError(f"missing NLF for {record.key}", record.noisy_file)
            records.append(record)
            cleans.append(payload.clean)
            noisies.append(payload.noisy)
            shots.append(nlf.delta_shot)
            reads.append(nlf.delta_read)
            cams.append(camera_ids.index(record.camera_id))
        if not records:
            raise DataError(f"split '{split}' has no pairs", str(self.root))
        logger.info("Partition %s chargée: %d paires", split, len(records))
        return PairTable(
            records=records,
            clean=torch.stack(cleans),
            noisy=torch.stack(noisies),
            delta_shot=torch.tensor(shots, dtype=torch.float32),
            delta_read=torch.tensor(reads, dtype=torch.float32),
            camera_index=torch.tensor(cams, dtype=torch.long),
            camera_ids=camera_ids,
        )


def read_manifest(root_path) -> DatasetManifest:
    root = Path(root_path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingFileError("dataset manifest not found", str(manifest_path))
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetIOError(f"invalid manifest JSON ({e})", str(manifest_path))
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"unsupported format_version {version} (expected {FORMAT_VERSION})", str(manifest_path)
        )
    try:
        return DatasetManifest.model_validate(raw)
    except ValidationError as e:
        raise DatasetValidationError(f"invalid manifest {manifest_path}: {e}")


def read_dataset(root_path) -> DatasetHandle:
    root = Path(root_path)
    return DatasetHandle(root, read_manifest(root))
