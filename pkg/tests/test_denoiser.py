import pytest
import torch
from pydantic import ValidationError
from torch import nn

from noisegen.errors import ArgumentError, ConfigurationError
from noisegen.models import DenoiseSource, DenoiseTrainRegime, DenoiserConfig, NormKind
from noisegen.services import denoiser as denoiser_module
from noisegen.services.denoiser import (
    DnCNN,
    IdentityDenoiser,
    NoiseSource,
    denoise,
    eval_denoiser,
    is_real_sample,
    load_denoiser,
    save_denoiser,
    train_denoiser,
    write_eval_csv,
)
from noisegen.services.evaluation import psnr
from noisegen.services.init_noise import NLFBatch, variance_map
from noisegen.services.networks import InstanceNorm2d
from noisegen.services.noise_model import Synthesis
from noisegen.services.rng import make_generator

from .conftest import zero_residual_model


def small_config(**update):
    return DenoiserConfig(batch_size=6, steps=10, features=8, seed=0).model_copy(update=update)


def test_layer_layout():
    model = DnCNN()
    convs = model.convs
    assert len(convs) == 9
    assert sum(p.numel() for p in convs[0].parameters()) == 2368
    assert convs[0].in_channels == 4 and convs[-1].out_channels == 4
    norms = [m for m in model.dncnn if isinstance(m, InstanceNorm2d)]
    assert len(norms) == 7


def test_zero_initialized_output_is_identity():
    model = DnCNN(features=8)
    model.zero_init_output()
    for side in (32, 64):
        noisy = torch.rand(2, 4, side, side)
        assert torch.equal(denoise(model, noisy), noisy)
    single = torch.rand(4, 32, 32)
    assert torch.equal(denoise(model, single), single)
    with pytest.raises(ArgumentError):
        denoise(model, torch.rand(2, 3, 8, 8))


@pytest.mark.parametrize("norm", [NormKind.NONE, NormKind.BATCH])
def test_denoising_commutes_with_crops(norm):
    model = DnCNN(features=8, norm=norm).double().eval()
    noisy = torch.rand(1, 4, 64, 64, dtype=torch.float64)
    with torch.no_grad():
        full = denoise(model, noisy)
        cropped = denoise(model, noisy[..., 8:56, 8:56])
    # bord de 9 pixels affecté par le zéro-padding des 9 convolutions
    assert torch.allclose(cropped[..., 9:-9, 9:-9], full[..., 17:47, 17:47], atol=1e-10)


def test_interleaving_ratio():
    for offset in (0, 3, 17):
        real = sum(is_real_sample(offset + n, (5, 1)) for n in range(600))
        assert real == 100
    assert [is_real_sample(n, (5, 1)) for n in range(6)] == [False] * 5 + [True]


def test_regime_validation():
    assert DenoiseTrainRegime(source=DenoiseSource.LEARNED_PLUS_REAL).mix_ratio == (5, 1)
    with pytest.raises(ValidationError):
        DenoiseTrainRegime(source=DenoiseSource.GAUSSIAN, mix_ratio=(5, 1))
    with pytest.raises(ValidationError):
        DenoiseTrainRegime(source=DenoiseSource.LEARNED_PLUS_REAL, mix_ratio=(0, 1))


def test_real_only_never_samples_noise(tiny_dataset, monkeypatch):
    def forbidden(*args, **kwargs):
        raise AssertionError("noise sampler called")

    monkeypatch.setattr(denoiser_module, "sample_init_noise", forbidden)
    monkeypatch.setattr(NoiseSource, "synthetic", forbidden)
    result = train_denoiser(DenoiseTrainRegime(source=DenoiseSource.REAL_ONLY), tiny_dataset, small_config())
    assert result.real_samples == 60 and result.synthetic_samples == 0


def test_learned_plus_real_mix(tiny_dataset):
    regime = DenoiseTrainRegime(source=DenoiseSource.LEARNED_PLUS_REAL)
    result = train_denoiser(regime, tiny_dataset, small_config(), zero_residual_model())
    assert result.real_samples == 10
    assert result.synthetic_samples == 50


def test_learned_regimes_need_a_model(tiny_dataset):
    for source in (DenoiseSource.LEARNED_MODEL, DenoiseSource.LEARNED_PLUS_REAL):
        with pytest.raises(ConfigurationError):
            train_denoiser(DenoiseTrainRegime(source=source), tiny_dataset, small_config())


def test_camera_specific_training(tiny_dataset):
    camera = tiny_dataset.camera_ids[1]
    result = train_denoiser(DenoiseTrainRegime(source=DenoiseSource.POISSON_GAUSSIAN), tiny_dataset,
                            small_config(camera=camera, steps=2))
    assert result.synthetic_samples == 12
    with pytest.raises(ArgumentError):
        train_denoiser(DenoiseTrainRegime(source=DenoiseSource.GAUSSIAN), tiny_dataset, small_config(camera="nope"))


def test_poisson_gaussian_inputs_follow_nlf(tiny_dataset):
    table = tiny_dataset.load_split("train")
    source = NoiseSource(DenoiseTrainRegime(source=DenoiseSource.POISSON_GAUSSIAN), table)
    indices = torch.zeros(50, dtype=torch.long)
    generator = make_generator("nlf-check", 0)
    noise = source.synthetic(indices, generator) - table.clean[indices]
    expected = variance_map(table.clean[:1], NLFBatch(table.delta_shot[:1], table.delta_read[:1])).mean()
    assert float((noise ** 2).mean()) == pytest.approx(float(expected), rel=0.05)


class RecordingModel:
    def __init__(self):
        self.refs = []

    def synthesize(self, clean, nlf, noisy_ref=None, generator=None):
        self.refs.append(noisy_ref)
        zeros = torch.zeros_like(clean)
        return Synthesis(init=zeros, residual=zeros, final=zeros)


def test_learned_inputs_take_latent_from_another_capture(tiny_dataset):
    table = tiny_dataset.load_split("train")
    model = RecordingModel()
    source = NoiseSource(DenoiseTrainRegime(source=DenoiseSource.LEARNED_MODEL), table, noise_model=model)
    indices = torch.arange(len(table)).repeat(3)
    source.synthetic(indices, make_generator("refs", 0))
    refs = model.refs[0]
    for idx, ref in zip(indices.tolist(), refs):
        assert not torch.equal(ref, table.noisy[idx])
        same_camera = table.indices_of_camera(table.records[idx].camera_id).tolist()
        assert any(torch.equal(ref, table.noisy[j]) for j in same_camera)


def test_training_loss_decreases(tiny_dataset):
    config = small_config(steps=100, batch_size=8, lr=1e-3, log_every=1)
    result = train_denoiser(DenoiseTrainRegime(source=DenoiseSource.POISSON_GAUSSIAN), tiny_dataset, config)
    losses = [entry["loss"] for entry in result.log]
    assert len(losses) == 100
    assert sum(losses[-10:]) < sum(losses[:10])


class Oracle(nn.Module):
    """Connaît le bruit réel de la table évaluée (un seul lot)"""

    def __init__(self, noise):
        super().__init__()
        self.noise = noise

    def forward(self, noisy):
        return self.noise


def test_eval_denoiser_bounds(tiny_dataset, tmp_path):
    table = tiny_dataset.load_split("test")
    identity = eval_denoiser(IdentityDenoiser(), table)
    expected = sum(psnr(n, c) for n, c in zip(table.noisy, table.clean)) / len(table)
    assert identity["overall"].psnr == pytest.approx(expected)
    assert set(identity) == set(table.camera_ids) | {"overall"}

    oracle = eval_denoiser(Oracle(table.real_noise), table)
    assert oracle["overall"].psnr > 100.0
    assert oracle["overall"].ssim == pytest.approx(1.0)

    path = write_eval_csv(tmp_path / "eval.csv", {"identity": identity, "oracle": oracle})
    lines = path.read_text().splitlines()
    assert lines[0] == "denoiser,camera,psnr,ssim,n_pairs"
    assert len(lines) == 1 + 2 * len(identity)
    assert lines[-1].startswith("oracle,overall,")
    with pytest.raises(ArgumentError):
        eval_denoiser(IdentityDenoiser(), table.subset(torch.tensor([], dtype=torch.long)))


def test_save_and_load(tiny_dataset, tmp_path):
    regime = DenoiseTrainRegime(source=DenoiseSource.GAUSSIAN)
    result = train_denoiser(regime, tiny_dataset, small_config(steps=2))
    path = save_denoiser(tmp_path / "denoiser.pt", result)
    model, loaded_regime, config = load_denoiser(path)
    assert loaded_regime == regime and config == result.config
    noisy = torch.rand(1, 4, 32, 32)
    result.model.eval()
    assert torch.equal(denoise(model, noisy), denoise(result.model, noisy))
