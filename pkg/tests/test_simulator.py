import pytest
import torch
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from noisegen.errors import ArgumentError
from noisegen.models import NLFEntry, SceneSplit, VirtualCamera
from noisegen.models.noise import NoiseLevelFunction
from noisegen.services.simulator import (
    make_virtual_cameras,
    scale_nlf,
    simulate_virtual_capture,
    synthesize_pairs,
)


def camera(shot=0.0, read=0.0, row=0.0, quant=0.0):
    return VirtualCamera(
        camera_id="c", base_nlf=NoiseLevelFunction(delta_shot=shot, delta_read=read),
        row_noise_sigma=row, quant_step=quant,
    )


def test_scale_nlf_examples():
    nlf = NoiseLevelFunction(delta_shot=0.01, delta_read=1e-4)
    doubled = scale_nlf(nlf, 2.0)
    assert doubled.delta_shot == pytest.approx(0.02)
    assert doubled.delta_read == pytest.approx(4e-4)
    assert scale_nlf(nlf, 4.0).delta_read / nlf.delta_read == pytest.approx(16.0)
    assert scale_nlf(nlf, 1.0) == nlf


def test_scale_nlf_rejects_nonpositive_ratio():
    nlf = NoiseLevelFunction(delta_shot=0.01, delta_read=1e-4)
    for ratio in (0.0, -1.0):
        with pytest.raises(ArgumentError):
            scale_nlf(nlf, ratio)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_scale_nlf_composes(a, b):
    nlf = NoiseLevelFunction(delta_shot=0.003, delta_read=2e-5)
    sequential = scale_nlf(scale_nlf(nlf, a), b)
    direct = scale_nlf(nlf, a * b)
    assert sequential.delta_shot == pytest.approx(direct.delta_shot, rel=1e-9)
    assert sequential.delta_read == pytest.approx(direct.delta_read, rel=1e-9)


def test_capture_variance_follows_nlf():
    clean = torch.full((4, 500, 500), 0.5)
    noisy, nlf = simulate_virtual_capture(clean, camera(shot=0.04, read=0.01), 1.0, torch.Generator().manual_seed(0))
    expected = nlf.variance_at(0.5)
    assert float((noisy - clean).var()) == pytest.approx(expected, rel=0.02)


def test_noise_free_camera_is_identity():
    clean = torch.rand(4, 16, 16)
    noisy, _ = simulate_virtual_capture(clean, camera(), 1.0)
    assert torch.equal(noisy, clean)


def test_dataset_rejects_noise_free_capture():
    with pytest.raises(ValidationError):
        NLFEntry(camera_id="c", scene_id="a", setting=0, nlf=NoiseLevelFunction(delta_shot=0.0, delta_read=0.0))
    assert NLFEntry(camera_id="c", scene_id="a", setting=0, nlf=NoiseLevelFunction(delta_shot=0.0, delta_read=1e-6))
    with pytest.raises(ValidationError):
        synthesize_pairs([camera()], SceneSplit(train=["a"], test=["b"]), 1, [1.0], 0, scene_size=96)


def test_row_noise_shared_per_raw_row():
    offsets = []
    for seed in range(50):
        clean = torch.zeros(4, 200, 8)
        noisy, _ = simulate_virtual_capture(clean, camera(row=0.05), 1.0, torch.Generator().manual_seed(seed))
        # R/G1 partagent la ligne paire, G2/B la ligne impaire
        assert torch.equal(noisy[0], noisy[1])
        assert torch.equal(noisy[2], noisy[3])
        assert torch.equal(noisy[0], noisy[0, :, :1].expand_as(noisy[0]))
        offsets.append(noisy[0, :, 0])
        offsets.append(noisy[2, :, 0])
    assert float(torch.cat(offsets).var()) == pytest.approx(0.05 ** 2, rel=0.05)


def test_quantization_grid():
    step = 1.0 / 512.0
    noisy, _ = simulate_virtual_capture(torch.rand(4, 16, 16), camera(shot=0.01, quant=step), 1.0)
    ratio = noisy / step
    assert torch.allclose(ratio, ratio.round(), atol=1e-3)


def test_virtual_cameras_are_distinct():
    cameras = make_virtual_cameras(5, seed=3)
    assert len({cam.camera_id for cam in cameras}) == 5
    assert len({cam.noise_signature() for cam in cameras}) == 5
    with pytest.raises(ArgumentError):
        make_virtual_cameras(0)


def test_synthesize_pairs_manifest_counts():
    manifest, _ = synthesize_pairs(
        make_virtual_cameras(3), SceneSplit(train=["s0", "s1"], test=["s2"]), 500, [1.0, 2.0], seed=0,
    )
    assert len(manifest.pairs) == 3 * 3 * 500
    assert len(manifest.pairs_in_split("train")) == 3 * 2 * 500
    assert len(manifest.nlf) == 3 * 3 * 2
    assert manifest.patch_shape == [4, 32, 32]


def test_synthesize_pairs_is_seeded():
    args = (make_virtual_cameras(2), SceneSplit(train=["a"], test=["b"]), 2, [1.0], 7)
    _, first = synthesize_pairs(*args, scene_size=96)
    _, second = synthesize_pairs(*args, scene_size=96)
    for left, right in zip(first, second):
        assert left.record == right.record
        assert torch.equal(left.clean, right.clean)
        assert torch.equal(left.noisy, right.noisy)


def test_synthesize_pairs_argument_checks():
    args = (make_virtual_cameras(2), SceneSplit(train=["a"], test=["b"]))
    with pytest.raises(ArgumentError):
        synthesize_pairs(*args, 0, [1.0], 0)
    with pytest.raises(ArgumentError):
        synthesize_pairs(*args, 2, [1.0], 0, patch_size=64, scene_size=64)
