from .camera import VirtualCamera
from .dataset import DatasetManifest, NLFEntry, PairRecord, SceneSplit
from .denoiser import DenoiseSource, DenoiseTrainRegime, DenoiserConfig, NormKind
from .evaluation import KLConfig, KLReport, KLResult, LatentSource, NoiseModelKind
from .noise import InitNoiseConfig, InitNoiseMode, NoiseLevelFunction
from .training import FMReduction, LossWeights, TrainConfig

__all__ = [
    'VirtualCamera', 'DatasetManifest', 'NLFEntry', 'PairRecord', 'SceneSplit',
    'DenoiseSource', 'DenoiseTrainRegime', 'DenoiserConfig', 'NormKind',
    'KLConfig', 'KLReport', 'KLResult', 'LatentSource', 'NoiseModelKind',
    'InitNoiseConfig', 'InitNoiseMode', 'NoiseLevelFunction',
    'FMReduction', 'LossWeights', 'TrainConfig',
]
