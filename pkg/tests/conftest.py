import os

import pytest
import torch

from noisegen.models import InitNoiseConfig, NoiseModelKind, SceneSplit, TrainConfig, VirtualCamera
from noisegen.models.noise import NoiseLevelFunction
from noisegen.services.dataset_store import read_dataset, write_dataset
from noisegen.services.networks import CameraEncoder, Generator
from noisegen.services.noise_model import NoiseModel
from noisegen.services.simulator import make_virtual_cameras, synthesize_pairs


def pytest_collection_modifyitems(config, items):
    if os.environ.get("NOISEGEN_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set NOISEGEN_RUN_SLOW=1 to run desk-scale tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def site_colored(height: int, width: int) -> torch.Tensor:
    """Mosaïque colorée par site: R=1, G=0.5, B=0"""
    mosaic = torch.empty(height, width)
    mosaic[0::2, 0::2] = 1.0
    mosaic[0::2, 1::2] = 0.5
    mosaic[1::2, 0::2] = 0.5
    mosaic[1::2, 1::2] = 0.0
    return mosaic


def build_dataset(root, cameras, patches_per_scene=4, scenes=None, gains=(1.0, 2.0), seed=0):
    scenes = scenes or SceneSplit(train=["a", "b"], test=["c"])
    manifest, pairs = synthesize_pairs(cameras, scenes, patches_per_scene, list(gains), seed, scene_size=96)
    write_dataset(root, manifest, pairs)
    return read_dataset(root)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """3 caméras, 2 scènes train + 1 test, 4 patches par scène"""
    return build_dataset(tmp_path_factory.mktemp("tiny"), make_virtual_cameras(3, seed=0))


@pytest.fixture(scope="session")
def pg_dataset(tmp_path_factory):
    """Caméras purement Poisson-gaussiennes aux niveaux très différents"""
    cameras = [
        VirtualCamera(camera_id="low", base_nlf=NoiseLevelFunction(delta_shot=0.002, delta_read=1e-5), seed=1),
        VirtualCamera(camera_id="high", base_nlf=NoiseLevelFunction(delta_shot=0.02, delta_read=1e-4), seed=2),
    ]
    return build_dataset(tmp_path_factory.mktemp("pg"), cameras, patches_per_scene=6, gains=(1.0,))


@pytest.fixture
def tiny_config():
    return TrainConfig(base_channels=2, batch_size=4, epochs=1, steps_per_epoch=2, val_patches=6, seed=0)


def zero_residual_model(with_encoder: bool = True) -> NoiseModel:
    """G à sortie nulle: se comporte exactement comme le modèle Poisson-gaussien"""
    torch.manual_seed(0)
    generator = Generator(2)
    generator.zero_init_output()
    encoder = CameraEncoder(2).eval() if with_encoder else None
    return NoiseModel(NoiseModelKind.LEARNED, InitNoiseConfig(), generator.eval(), encoder)
