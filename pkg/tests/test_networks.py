import pytest
import torch
from torch.autograd import gradcheck
from torch.func import functional_call

from noisegen.errors import DimensionError
from noisegen.services.networks import (
    CameraEncoder,
    Discriminator,
    Generator,
    InstanceNorm2d,
    SpectralNorm,
    audit_architecture,
    receptive_field,
    request_power_iteration,
    spectral_normalize,
)


def batch(size=2, side=32, seed=0):
    generator = torch.Generator().manual_seed(seed)
    clean = torch.rand(size, 4, side, side, generator=generator) * 2 - 1
    noise = torch.randn(size, 4, side, side, generator=generator) * 0.1
    return clean, noise


@pytest.fixture(scope="module")
def full_width():
    torch.manual_seed(0)
    return Generator(64), Discriminator(64), CameraEncoder(64)


def test_full_width_matches_tables(full_width):
    for model in full_width:
        assert audit_architecture(model) == []


def test_first_layer_parameter_count(full_width):
    generator, _, _ = full_width
    assert sum(p.numel() for p in generator.c1.parameters()) == 8 * 64 * 16 + 64


def test_full_width_shapes(full_width):
    _, discriminator, encoder = full_width
    clean, noise = batch()
    with torch.no_grad():
        scores, features = discriminator(noise, clean)
        latent = encoder(noise)
    assert scores.shape == (2, 1, 2, 2)
    assert features.shape == (2, 256, 4, 4)
    assert latent.shape == (2, 512)


def test_generator_shapes_and_bottleneck():
    generator = Generator(2)
    captured = {}
    generator.c5.register_forward_hook(lambda module, inputs, output: captured.setdefault("c5", output))
    clean, noise = batch()
    final, residual = generator(clean, noise, torch.randn(2, generator.latent_dim))
    assert final.shape == residual.shape == (2, 4, 32, 32)
    assert captured["c5"].shape == (2, 16, 1, 1)


def test_residual_identity_is_exact():
    generator = Generator(2)
    clean, noise = batch(seed=1)
    final, residual = generator(clean, noise)
    assert torch.equal(final - noise, residual)
    assert residual.abs().max() < 1.0


def test_zero_init_output_gives_pure_init_noise():
    generator = Generator(2)
    generator.zero_init_output()
    clean, noise = batch(seed=2)
    final, residual = generator(clean, noise, torch.randn(2, generator.latent_dim))
    assert torch.count_nonzero(residual) == 0
    assert torch.equal(final, noise)


def test_generator_dimension_checks():
    generator = Generator(2)
    clean, noise = batch(side=48)
    with pytest.raises(DimensionError):
        generator(clean, noise)
    clean, noise = batch()
    with pytest.raises(DimensionError):
        generator(clean, noise[:, :, :16])


def test_discriminator_checks_and_frozen_features():
    discriminator = Discriminator(2)
    clean, noise = batch()
    with pytest.raises(DimensionError):
        discriminator(noise, clean[:1])
    discriminator.eval()
    _, features = discriminator(noise, clean)
    assert torch.equal(discriminator.frozen_features(noise, clean), features)


def test_discriminator_receptive_field():
    specs = Discriminator(2).describe()
    assert receptive_field([(spec.kernel, int(spec.stride)) for spec in specs]) == 46
    assert receptive_field([(4, 2), (4, 2), (4, 2), (4, 1)]) == 46


def test_discriminator_score_map_sizes():
    discriminator = Discriminator(2).eval()
    for side, expected in ((32, 2), (64, 6), (96, 10)):
        clean, noise = batch(size=1, side=side)
        scores, features = discriminator(noise, clean)
        assert scores.shape == (1, 1, expected, expected)
        assert features.shape[-1] == side // 8


def test_power_iteration_runs_once_per_request():
    torch.manual_seed(0)
    discriminator = Discriminator(2)
    clean, noise = batch()
    discriminator(noise, clean)
    after_first = {name: b.clone() for name, b in discriminator.named_buffers()}
    for _ in range(4):
        discriminator(noise, clean)
    assert all(torch.equal(after_first[name], b) for name, b in discriminator.named_buffers())

    request_power_iteration(discriminator, None)
    discriminator(noise, clean)
    discriminator(noise, clean)
    assert not torch.equal(after_first["d2.conv.u"], discriminator.d2.conv.u)


def test_encoder_sizes():
    encoder = CameraEncoder(2)
    assert encoder(torch.rand(1, 4, 32, 32)).shape == (1, 16)
    assert encoder(torch.rand(3, 4, 64, 48)).shape == (3, 16)
    with pytest.raises(DimensionError):
        encoder(torch.rand(1, 4, 6, 6))


def test_encoder_zero_input_zero_bias():
    encoder = CameraEncoder(2)
    with torch.no_grad():
        for name, param in encoder.named_parameters():
            if name.endswith("bias"):
                param.zero_()
    assert torch.count_nonzero(encoder(torch.zeros(2, 4, 32, 32))) == 0


def test_instance_norm_on_single_pixel_gives_beta():
    norm = InstanceNorm2d(3)
    with torch.no_grad():
        norm.bias.copy_(torch.tensor([0.1, -0.2, 0.3]))
    out = norm(torch.randn(2, 3, 1, 1))
    assert torch.allclose(out.flatten(1), torch.tensor([[0.1, -0.2, 0.3]] * 2))


def random_with_singular_values(values, seed=0):
    generator = torch.Generator().manual_seed(seed)
    n = len(values)
    left, _ = torch.linalg.qr(torch.randn(n, n, generator=generator, dtype=torch.float64))
    right, _ = torch.linalg.qr(torch.randn(n, n, generator=generator, dtype=torch.float64))
    return left @ torch.diag(torch.tensor(values, dtype=torch.float64)) @ right.T


def test_spectral_normalize_oracles():
    weight = random_with_singular_values([5.0, 2.0, 1.0])
    normalized = spectral_normalize(weight, generator=torch.Generator().manual_seed(1))
    assert float(torch.linalg.matrix_norm(normalized, 2)) == pytest.approx(1.0, rel=0.01)

    orthogonal = random_with_singular_values([1.0, 1.0, 1.0], seed=2)
    assert torch.allclose(spectral_normalize(orthogonal), orthogonal, rtol=0.01, atol=1e-6)

    assert torch.count_nonzero(spectral_normalize(torch.zeros(3, 4))) == 0


def test_spectral_norm_module_converges_in_training_only():
    torch.manual_seed(0)
    wrapped = SpectralNorm(torch.nn.Conv2d(3, 5, 3))
    for _ in range(50):
        request_power_iteration(wrapped)
        weight = wrapped.normalized_weight()
    assert float(torch.linalg.matrix_norm(weight.detach().reshape(5, -1), 2)) == pytest.approx(1.0, abs=1e-3)

    wrapped.eval()
    u, v = wrapped.u.clone(), wrapped.v.clone()
    wrapped(torch.rand(1, 3, 8, 8))
    assert torch.equal(wrapped.u, u) and torch.equal(wrapped.v, v)
    assert {"module.weight", "module.bias", "u", "v"} <= set(wrapped.state_dict())


def parameter_gradcheck(module, name, *inputs, output=0):
    module = module.double().eval()
    value = dict(module.named_parameters())[name].detach().clone().requires_grad_(True)

    def forward(param):
        out = functional_call(module, {name: param}, inputs)
        return out[output] if isinstance(out, tuple) else out

    return gradcheck(forward, (value,), eps=1e-6, atol=1e-5, rtol=1e-3)


def test_generator_gradients():
    clean, noise = (t.double() for t in batch(seed=3))
    latent = torch.randn(2, 16, dtype=torch.float64)
    assert parameter_gradcheck(Generator(2), "out.norm.weight", clean, noise, latent)
    assert parameter_gradcheck(Generator(2), "t4.norm.bias", clean, noise, latent)


def test_discriminator_gradients():
    clean, noise = (t.double() for t in batch(seed=4))
    assert parameter_gradcheck(Discriminator(2), "d2.norm.weight", noise, clean, output=0)
    assert parameter_gradcheck(Discriminator(2), "features.conv.module.bias", noise, clean, output=1)


def test_encoder_gradients():
    noisy = torch.randn(2, 4, 16, 16, dtype=torch.float64)
    assert parameter_gradcheck(CameraEncoder(2), "e2.conv.module.bias", noisy)
    assert parameter_gradcheck(CameraEncoder(2), "e3.norm.weight", noisy)
