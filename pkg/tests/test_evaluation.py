import csv
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from skimage.metrics import structural_similarity

from noisegen.errors import ArgumentError, DataError, DimensionError
from noisegen.models import KLConfig, LatentSource, NoiseModelKind
from noisegen.services.evaluation import (
    PSNR_INF,
    anchor_stability,
    cross_camera_kl,
    encode_table,
    export_latents_csv,
    histogram_kl,
    kl_from_histograms,
    latent_partners,
    latent_separation,
    model_kl_eval,
    psnr,
    select_patches,
    ssim,
    summarize_reports,
)
from noisegen.services.noise_model import NoiseModel, Synthesis
from noisegen.services.rng import make_generator

from .conftest import zero_residual_model


def test_two_bin_closed_form():
    expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert kl_from_histograms([1, 1], [1, 3]) == pytest.approx(expected, abs=1e-6)
    assert expected == pytest.approx(0.143841, abs=1e-6)
    cfg = KLConfig(bin_count=2)
    result = histogram_kl([-0.2, 0.2], [-0.2, 0.1, 0.2, 0.3], cfg)
    assert result.kl == pytest.approx(0.143841, abs=1e-6)
    assert not result.clipped


def test_identical_samples_and_asymmetry():
    samples = torch.randn(4096) * 0.05
    assert histogram_kl(samples, samples.clone()).kl < 1e-12
    assert kl_from_histograms([1, 1], [1, 3]) != pytest.approx(kl_from_histograms([1, 3], [1, 1]))


def test_histogram_kl_errors_and_clipping():
    with pytest.raises(ArgumentError):
        histogram_kl([], [0.1])
    result = histogram_kl(np.full(100, 0.9), np.zeros(100))
    assert result.out_of_range_real == 1.0
    assert result.clipped


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=1, max_size=200), st.integers(0, 2 ** 31 - 1))
def test_kl_ignores_order_and_duplication(values, seed):
    real = np.array(values)
    synthetic = np.random.default_rng(seed).normal(0.0, 0.1, 300)
    base = histogram_kl(real, synthetic).kl
    assert base >= 0.0
    shuffled = np.random.default_rng(seed).permutation(real)
    assert histogram_kl(shuffled, synthetic).kl == pytest.approx(base, abs=1e-9)
    assert histogram_kl(np.concatenate([real, real]), synthetic).kl == pytest.approx(base, abs=1e-9)


def test_poisson_gaussian_beats_gaussian_on_matched_data(pg_dataset):
    table = pg_dataset.load_split("test")
    pg = model_kl_eval(NoiseModel.baseline(NoiseModelKind.POISSON_GAUSSIAN), table)
    gaussian = model_kl_eval(NoiseModel.baseline(NoiseModelKind.GAUSSIAN), table)
    assert pg.mean < gaussian.mean
    assert set(pg.per_camera) == {"low", "high"}
    assert len(pg.patches) == len(table)
    summary = summarize_reports({"gaussian": gaussian, "poisson_gaussian": pg})
    assert summary["ordering"] == ["poisson_gaussian", "gaussian"]
    assert summary["ascending_kl"]


def test_zero_residual_model_matches_poisson_gaussian(tiny_dataset):
    table = tiny_dataset.load_split("test")
    learned = model_kl_eval(zero_residual_model(), table, seed=3)
    pg = model_kl_eval(NoiseModel.baseline(NoiseModelKind.POISSON_GAUSSIAN), table, seed=3)
    assert learned.mean == pg.mean


def test_missing_nlf_is_a_data_error(tiny_dataset):
    table = tiny_dataset.load_split("test").subset(torch.arange(4))
    table.delta_shot = table.delta_shot.clone()
    table.delta_shot[1] = float("nan")
    with pytest.raises(DataError):
        model_kl_eval(NoiseModel.baseline(NoiseModelKind.POISSON_GAUSSIAN), table)


def test_latent_partners(tiny_dataset):
    table = tiny_dataset.load_split("test")
    matched = latent_partners(table, LatentSource.MATCHED, make_generator("p", 0))
    assert torch.equal(table.camera_index[matched], table.camera_index)
    assert (matched != torch.arange(len(table))).all()
    mismatched = latent_partners(table, LatentSource.MISMATCHED, make_generator("p", 0))
    assert (table.camera_index[mismatched] != table.camera_index).all()


def test_cross_camera_shares_patches_and_init_noise(tiny_dataset):
    table = tiny_dataset.load_split("test")
    matched, mismatched = cross_camera_kl(zero_residual_model(), table, n_patches=6, seed=1)
    assert [p.scene_id for p in matched.patches] == [p.scene_id for p in mismatched.patches]
    # sans résidu le latent est sans effet
    assert matched.mean == mismatched.mean
    assert len(select_patches(table, 6, 1)) == 6


def test_anchor_stability(tiny_dataset):
    table = tiny_dataset.load_split("test")
    camera = table.camera_ids[0]
    result = anchor_stability(zero_residual_model(), table, camera, n_anchors=4)
    assert len(result.per_anchor) == 4 and len(set(result.anchors)) == 4
    camera_table = table.subset(table.indices_of_camera(camera))
    pg = NoiseModel.baseline(NoiseModelKind.POISSON_GAUSSIAN)
    for anchor, value in zip(result.anchors, result.per_anchor):
        others = torch.tensor([n for n in range(len(camera_table)) if n != anchor])
        assert value == model_kl_eval(pg, camera_table.subset(others)).mean
    assert result.relative_spread >= 0.0
    with pytest.raises(ArgumentError):
        anchor_stability(zero_residual_model(), table, "nope")
    with pytest.raises(ArgumentError):
        anchor_stability(zero_residual_model(), table, camera, n_anchors=50)


class RecordingLearnedModel:
    kind = NoiseModelKind.LEARNED

    def __init__(self):
        self.calls = []

    def synthesize(self, clean, nlf, noisy_ref=None, generator=None):
        self.calls.append((clean, noisy_ref))
        zeros = torch.zeros_like(clean)
        return Synthesis(init=zeros, residual=zeros, final=zeros)


def test_anchor_is_not_among_evaluated_patches(tiny_dataset):
    table = tiny_dataset.load_split("test")
    camera = table.camera_ids[1]
    camera_table = table.subset(table.indices_of_camera(camera))
    model = RecordingLearnedModel()
    result = anchor_stability(model, table, camera, n_anchors=3)
    assert len(model.calls) == 3
    for anchor, (clean, refs) in zip(result.anchors, model.calls):
        others = [n for n in range(len(camera_table)) if n != anchor]
        assert torch.equal(clean, camera_table.clean[others])
        assert all(torch.equal(ref, camera_table.noisy[anchor]) for ref in refs)
    with pytest.raises(ArgumentError):
        anchor_stability(model, table.subset(table.indices_of_camera(camera)[:1]), camera, n_anchors=1)


def ring(center):
    offsets = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    return np.asarray(center) + offsets


def test_latent_separation_clusters():
    latents = np.vstack([ring([0.0, 0.0]), ring([10.0, 0.0])])
    labels = ["a"] * 4 + ["b"] * 4
    assert latent_separation(latents, labels) == pytest.approx(10.0)
    assert latent_separation(torch.tensor(latents), labels) == pytest.approx(10.0)


def test_latent_separation_shuffled_labels():
    rng = np.random.default_rng(0)
    clustered = np.vstack([rng.normal(0, 1, (200, 8)), rng.normal(0, 1, (200, 8)) + 6.0])
    labels = ["a"] * 200 + ["b"] * 200
    shuffled = list(rng.permutation(labels))
    assert latent_separation(clustered, shuffled) < 0.5 * latent_separation(clustered, labels)

    blob = rng.normal(0, 1, (400, 64))
    plain = latent_separation(blob, labels)
    permuted = latent_separation(blob, shuffled)
    assert 0.5 * permuted <= plain <= 1.5 * permuted


def test_latent_separation_errors():
    with pytest.raises(ArgumentError):
        latent_separation(np.ones((4, 3)), ["a", "a", "b", "b"])
    with pytest.raises(ArgumentError):
        latent_separation(np.random.rand(4, 3), ["a"] * 4)
    with pytest.raises(DimensionError):
        latent_separation(np.random.rand(4, 3), ["a", "b"])


def test_encode_and_export_latents(tiny_dataset, tmp_path):
    table = tiny_dataset.load_split("test")
    latents = encode_table(zero_residual_model(), table)
    assert latents.shape == (len(table), 16)
    path = export_latents_csv(tmp_path / "latents.csv", latents, [r.camera_id for r in table.records])
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["camera_id"] + [f"v{d:03d}" for d in range(16)]
    assert len(rows) == len(table) + 1
    with pytest.raises(ArgumentError):
        encode_table(zero_residual_model(with_encoder=False), table)


def test_psnr_examples():
    image = torch.rand(4, 16, 16)
    assert psnr(image, image.clone()) == PSNR_INF
    assert psnr(image, image + 0.1) == pytest.approx(20.0, abs=1e-4)
    assert psnr(torch.zeros(4, 8, 8), torch.full((4, 8, 8), 0.1)) == pytest.approx(20.0, abs=1e-4)
    with pytest.raises(DimensionError):
        psnr(image, image[:2])


def test_psnr_decreases_with_noise():
    generator = torch.Generator().manual_seed(0)
    image = torch.rand(4, 32, 32, generator=generator)
    noise = torch.randn(4, 32, 32, generator=generator)
    values = [psnr(image, image + s * noise) for s in (0.01, 0.05, 0.1)]
    assert values[0] > values[1] > values[2]


def test_ssim():
    generator = torch.Generator().manual_seed(0)
    image = torch.rand(4, 32, 32, generator=generator)
    assert ssim(image, image.clone()) == pytest.approx(1.0)
    assert ssim(image, image + 0.3 * torch.randn(4, 32, 32, generator=generator)) < 0.9
    with pytest.raises(DimensionError):
        ssim(torch.rand(4, 8, 8), torch.rand(4, 8, 8))
    with pytest.raises(DimensionError):
        ssim(image, image[:, :16])


def test_ssim_matches_gaussian_window_reference():
    generator = torch.Generator().manual_seed(1)
    clean = torch.rand(2, 4, 24, 24, generator=generator, dtype=torch.float64)
    noisy = (clean + 0.05 * torch.randn(2, 4, 24, 24, generator=generator, dtype=torch.float64)).clamp(0, 1)
    per_item = [
        structural_similarity(c.numpy(), n.numpy(), data_range=1.0, channel_axis=0, gaussian_weights=True,
                              sigma=1.5, use_sample_covariance=False)
        for c, n in zip(clean, noisy)
    ]
    assert ssim(clean, noisy) == pytest.approx(float(np.mean(per_item)), abs=1e-12)
    assert ssim(clean[0], noisy[0]) == pytest.approx(per_item[0], abs=1e-12)
    mse = float(((clean - noisy) ** 2).mean())
    assert psnr(clean, noisy) == pytest.approx(10 * math.log10(1.0 / mse), abs=1e-9)


def test_summary_flags_wrong_order():
    from noisegen.models import KLReport
    reports = {
        "learned": KLReport(model="learned", mean=0.3, std=0.0),
        "poisson_gaussian": KLReport(model="poisson_gaussian", mean=0.2, std=0.0),
        "gaussian": KLReport(model="gaussian", mean=0.5, std=0.0),
    }
    summary = summarize_reports(reports)
    assert summary["ordering"] == ["learned", "poisson_gaussian", "gaussian"]
    assert not summary["ascending_kl"]
