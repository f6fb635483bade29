from collections import Counter
from typing import Dict, List, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from .camera import VirtualCamera
from .noise import NoiseLevelFunction

FORMAT_VERSION = 1
PATCH_SHAPE = [4, 32, 32]


class SceneSplit(BaseModel):
    train: List[str] = Field(default_factory=list)
    test: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_disjoint(self):
        overlap = sorted(set(self.train) & set(self.test))
        if overlap:
            raise ValueError(f"train/test scene ids overlap: {', '.join(overlap)}")
        return self


class NLFEntry(BaseModel):
    camera_id: str
    scene_id: str
    setting: int = Field(ge=0)  # indice dans DatasetManifest.gains
    nlf: NoiseLevelFunction

    @field_validator("nlf")
    @classmethod
    def check_noisy(cls, nlf: NoiseLevelFunction) -> NoiseLevelFunction:
        # une capture bruitée a au moins une composante non nulle
        if not nlf.is_noisy:
            raise ValueError("a noisy capture needs delta_shot > 0 or delta_read > 0")
        return nlf

    @property
    def key(self) -> Tuple[str, str, int]:
        return (self.camera_id, self.scene_id, self.setting)


class PairRecord(BaseModel):
    """Une paire propre/bruitée stockée sur disque"""
    camera_id: str
    scene_id: str
    setting: int = Field(ge=0)
    index: int = Field(ge=0)
    clean_file: str
    noisy_file: str
    clean_sha256: str = ""
    noisy_sha256: str = ""

    @property
    def key(self) -> Tuple[str, str, int]:
        return (self.camera_id, self.scene_id, self.setting)


class DatasetManifest(BaseModel):
    format_version: int = FORMAT_VERSION
    patch_shape: List[int] = Field(default_factory=lambda: list(PATCH_SHAPE))
    cameras: List[VirtualCamera]
    scenes: SceneSplit
    gains: List[float] = Field(default_factory=lambda: [1.0])
    nlf: List[NLFEntry] = Field(default_factory=list)
    pairs: List[PairRecord] = Field(default_factory=list)
    seed: int = 0

    @field_validator('patch_shape')
    def validate_patch_shape(cls, v):
        if len(v) != 3 or v[0] != 4 or v[1] != v[2] or v[1] <= 0:
            raise ValueError("patch_shape must be [4, h, h]")
        return v

    @field_validator('gains')
    def validate_gains(cls, v):
        if not v or any(g <= 0 for g in v):
            raise ValueError("gains must be a non-empty list of positive ratios")
        return v

    @model_validator(mode="after")
    def check_consistency(self):
        # Identifiants de caméra uniques et lois de bruit distinctes
        ids = [cam.camera_id for cam in self.cameras]
        if len(set(ids)) != len(ids):
            raise ValueError("camera ids must be unique")
        signatures = [cam.noise_signature() for cam in self.cameras]
        if len(set(signatures)) != len(signatures):
            raise ValueError("distinct cameras must differ in at least one noise parameter")

        known_scenes = set(self.scenes.train) | set(self.scenes.test)
        nlf_keys = {entry.key for entry in self.nlf}
        if len(nlf_keys) != len(self.nlf):
            raise ValueError("duplicate (camera, scene, setting) entries in nlf table")

        # Chaque fichier de patch est référencé exactement une fois
        files = Counter()
        for pair in self.pairs:
            if pair.camera_id not in ids:
                raise ValueError(f"pair references unknown camera {pair.camera_id}")
            if pair.scene_id not in known_scenes:
                raise ValueError(f"pair references unknown scene {pair.scene_id}")
            if pair.setting >= len(self.gains):
                raise ValueError(f"pair references unknown setting {pair.setting}")
            if pair.key not in nlf_keys:
                raise ValueError(f"missing NLF for {pair.key}")
            files[pair.clean_file] += 1
            files[pair.noisy_file] += 1
        duplicated = [name for name, count in files.items() if count > 1]
        if duplicated:
            raise ValueError(f"patch files referenced more than once: {', '.join(sorted(duplicated)[:5])}")
        return self

    def nlf_table(self) -> Dict[Tuple[str, str, int], NoiseLevelFunction]:
        return {entry.key: entry.nlf for entry in self.nlf}

    def camera(self, camera_id: str) -> VirtualCamera:
        for cam in self.cameras:
            if cam.camera_id == camera_id:
                return cam
        raise KeyError(camera_id)

    def pairs_in_split(self, split: str) -> List[PairRecord]:
        scenes = set(self.scenes.train if split == "train" else self.scenes.test)
        return [pair for pair in self.pairs if pair.scene_id in scenes]
