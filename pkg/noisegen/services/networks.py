"""Générateur G (U-Net résiduel), discriminateur D (PatchGAN conditionnel) et encodeur caméra E.

Les trois réseaux travaillent dans le domaine réseau: images dans [-1, 1],
bruit multiplié par 2 (voir bayer.clean_to_network / noise_to_network).
Les largeurs suivent les tables d'architecture pour base_channels=64.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F
from torch import nn
from torch.func import functional_call

from ..errors import DimensionError

LEAKY_SLOPE = 0.2
IN_EPS = 1e-5
SN_EPS = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # C, RES, T, POOL
    kernel: int
    in_channels: int
    out_channels: int
    stride: float  # 0.5 = convolution transposée (upsampling x2)
    norm: str  # "-", "SN-IN", "SN"
    activation: str  # "LReLU", "Tanh", "-"


def generator_table(base: int = 64) -> List[LayerSpec]:
    b = base
    return [
        LayerSpec("c1", "C", 4, 8, b, 2, "-", "LReLU"),
        LayerSpec("c2", "C", 4, b, 2 * b, 2, "SN-IN", "LReLU"),
        LayerSpec("c3", "C", 4, 2 * b, 4 * b, 2, "SN-IN", "LReLU"),
        LayerSpec("c4", "C", 4, 4 * b, 8 * b, 2, "SN-IN", "LReLU"),
        LayerSpec("c5", "C", 4, 8 * b, 8 * b, 2, "SN-IN", "LReLU"),
        LayerSpec("res1", "RES", 3, 8 * b, 8 * b, 1, "-", "-"),
        LayerSpec("res2", "RES", 3, 8 * b, 8 * b, 1, "-", "-"),
        LayerSpec("res3", "RES", 3, 16 * b, 16 * b, 1, "-", "-"),
        LayerSpec("res4", "RES", 3, 16 * b, 16 * b, 1, "-", "-"),
        LayerSpec("t1", "T", 4, 16 * b, 8 * b, 0.5, "SN-IN", "LReLU"),
        LayerSpec("t2", "T", 4, 16 * b, 4 * b, 0.5, "SN-IN", "LReLU"),
        LayerSpec("t3", "T", 4, 8 * b, 2 * b, 0.5, "SN-IN", "LReLU"),
        LayerSpec("t4", "T", 4, 4 * b, b, 0.5, "SN-IN", "LReLU"),
        LayerSpec("out", "T", 4, 2 * b, 4, 0.5, "SN-IN", "Tanh"),
    ]


def discriminator_table(base: int = 64) -> List[LayerSpec]:
    b = base
    return [
        LayerSpec("d1", "C", 4, 8, b, 2, "-", "LReLU"),
        LayerSpec("d2", "C", 4, b, 2 * b, 2, "SN-IN", "LReLU"),
        LayerSpec("features", "C", 4, 2 * b, 4 * b, 2, "SN-IN", "LReLU"),
        # Une IN sur la carte de scores mono-canal fixerait sa moyenne à β: SN seule ici
        LayerSpec("score", "C", 4, 4 * b, 1, 1, "SN", "-"),
    ]


def encoder_table(base: int = 64) -> List[LayerSpec]:
    b = base
    return [
        LayerSpec("e1", "C", 7, 4, b, 1, "-", "LReLU"),
        LayerSpec("e2", "C", 4, b, 2 * b, 2, "SN-IN", "LReLU"),
        LayerSpec("e3", "C", 4, 2 * b, 4 * b, 2, "SN-IN", "LReLU"),
        LayerSpec("e4", "C", 4, 4 * b, 8 * b, 2, "SN-IN", "LReLU"),
        LayerSpec("pool", "POOL", 0, 8 * b, 8 * b, 0, "-", "-"),
    ]


def receptive_field(layers: Sequence[Tuple[int, int]]) -> int:
    """Champ réceptif d'une pile de (kernel, stride)"""
    field, jump = 1, 1
    for kernel, stride in layers:
        field += (kernel - 1) * jump
        jump *= stride
    return field


# Normalisations

def _l2normalize(v: torch.Tensor, eps: float = SN_EPS) -> torch.Tensor:
    return v / (v.norm() + eps)


def spectral_normalize(
    weight: torch.Tensor,
    n_power_iterations: int = 5,
    u: Optional[torch.Tensor] = None,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """W / σ_max(W), σ_max estimé par itération de puissance; poids nul -> nul"""
    w = weight.reshape(weight.shape[0], -1)
    if u is None:
        u = torch.randn(w.shape[0], generator=generator, dtype=w.dtype).to(w.device)
    u = _l2normalize(u)
    v = _l2normalize(torch.mv(w.t(), u))
    for _ in range(n_power_iterations):
        v = _l2normalize(torch.mv(w.t(), u))
        u = _l2normalize(torch.mv(w, v))
    sigma = torch.dot(u, torch.mv(w, v))
    return weight / sigma.clamp_min(SN_EPS)


class SpectralNorm(nn.Module):
    """Enveloppe une convolution; vecteurs u, v persistés en buffers.

    En entraînement, une itération de puissance au plus par demande: la première
    passe après `request_power_iteration` avance u, v, les suivantes les réutilisent.
    """

    def __init__(self, module: Union[nn.Conv2d, nn.ConvTranspose2d], power_iterations: int = 1):
        super().__init__()
        self.module = module
        self.power_iterations = power_iterations
        self.pending = True
        w = module.weight.detach().reshape(module.weight.shape[0], -1)
        self.register_buffer("u", _l2normalize(torch.randn(w.shape[0])))
        self.register_buffer("v", _l2normalize(torch.randn(w.shape[1])))

    def normalized_weight(self) -> torch.Tensor:
        weight = self.module.weight
        w = weight.reshape(weight.shape[0], -1)
        if self.training and self.pending:
            with torch.no_grad():
                for _ in range(self.power_iterations):
                    self.v.copy_(_l2normalize(torch.mv(w.t(), self.u)))
                    self.u.copy_(_l2normalize(torch.mv(w, self.v)))
            self.pending = False
        # clones: les buffers peuvent être modifiés avant le backward
        sigma = torch.dot(self.u.clone(), torch.mv(w, self.v.clone()))
        return weight / sigma.clamp_min(SN_EPS)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        m = self.module
        weight = self.normalized_weight()
        if isinstance(m, nn.ConvTranspose2d):
            return F.conv_transpose2d(x, weight, m.bias, m.stride, m.padding, m.output_padding, m.groups, m.dilation)
        return F.conv2d(x, weight, m.bias, m.stride, m.padding, m.dilation, m.groups)


def request_power_iteration(*modules: Optional[nn.Module]) -> None:
    """Autorise une itération de puissance dans chaque SpectralNorm des modules (une par pas)"""
    for module in modules:
        if module is None:
            continue
        for sub in module.modules():
            if isinstance(sub, SpectralNorm):
                sub.pending = True


class InstanceNorm2d(nn.Module):
    """Normalisation d'instance affine; une carte 1x1 se normalise à 0 (sortie = β)"""

    def __init__(self, num_features: int, eps: float = IN_EPS):
        super().__init__()
        self.num_features = num_features
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(num_features))
        self.bias = nn.Parameter(torch.zeros(num_features))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=(2, 3), keepdim=True)
        centered = x - mean
        var = (centered ** 2).mean(dim=(2, 3), keepdim=True)
        normalized = centered * torch.rsqrt(var + self.eps)
        return normalized * self.weight[None, :, None, None] + self.bias[None, :, None, None]


# Blocs

class ConvBlock(nn.Module):
    """Convolution (ou transposée) + normalisation optionnelle + activation"""

    def __init__(
        self,
        kind: str,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int,
        padding: int,
        norm: str,
        activation: str,
        pad: Optional[Tuple[int, int, int, int]] = None,
    ):
        super().__init__()
        if kind == "T":
            conv = nn.ConvTranspose2d(in_channels, out_channels, kernel, stride=stride, padding=padding)
        else:
            conv = nn.Conv2d(in_channels, out_channels, kernel, stride=stride, padding=padding)
        self.pad = nn.ZeroPad2d(pad) if pad is not None else None
        self.conv = SpectralNorm(conv) if norm in ("SN", "SN-IN") else conv
        self.norm = InstanceNorm2d(out_channels) if norm == "SN-IN" else None
        if activation == "LReLU":
            self.act = nn.LeakyReLU(LEAKY_SLOPE)
        elif activation == "Tanh":
            self.act = nn.Tanh()
        else:
            self.act = None

    @property
    def raw_conv(self) -> Union[nn.Conv2d, nn.ConvTranspose2d]:
        return self.conv.module if isinstance(self.conv, SpectralNorm) else self.conv

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.pad is not None:
            x = self.pad(x)
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        if self.act is not None:
            x = self.act(x)
        return x

    def describe(self, name: str) -> LayerSpec:
        conv = self.raw_conv
        transposed = isinstance(conv, nn.ConvTranspose2d)
        if isinstance(self.conv, SpectralNorm):
            norm = "SN-IN" if self.norm is not None else "SN"
        else:
            norm = "IN" if self.norm is not None else "-"
        if isinstance(self.act, nn.LeakyReLU):
            activation = "LReLU"
        elif isinstance(self.act, nn.Tanh):
            activation = "Tanh"
        else:
            activation = "-"
        # Les transposées sont stockées avec (in, out, k, k)
        return LayerSpec(
            name=name,
            kind="T" if transposed else "C",
            kernel=conv.kernel_size[0],
            in_channels=conv.in_channels,
            out_channels=conv.out_channels,
            stride=1 / conv.stride[0] if transposed else conv.stride[0],
            norm=norm,
            activation=activation,
        )


class ResidualBlock(nn.Module):
    """conv3x3 -> LReLU -> conv3x3, plus l'entrée; pas de normalisation"""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.act(self.conv1(x)))

    def describe(self, name: str) -> LayerSpec:
        return LayerSpec(name, "RES", self.conv1.kernel_size[0], self.conv1.in_channels,
                         self.conv2.out_channels, self.conv1.stride[0], "-", "-")


def _down(spec: LayerSpec) -> ConvBlock:
    return ConvBlock("C", spec.in_channels, spec.out_channels, spec.kernel, 2, 1, spec.norm, spec.activation)


def _up(spec: LayerSpec) -> ConvBlock:
    # k=4, s=2, p=1 double exactement la taille: (n-1)*2 - 2 + 4 = 2n
    return ConvBlock("T", spec.in_channels, spec.out_channels, spec.kernel, 2, 1, spec.norm, spec.activation)


class _Audited(nn.Module):
    def table(self) -> List[LayerSpec]:
        raise NotImplementedError

    def layers(self) -> Dict[str, nn.Module]:
        return {spec.name: getattr(self, spec.name) for spec in self.table() if spec.kind != "POOL"}

    def describe(self) -> List[LayerSpec]:
        return [layer.describe(name) for name, layer in self.layers().items()]


class Generator(_Audited):
    def __init__(self, base_channels: int = 64):
        super().__init__()
        self.base_channels = base_channels
        self.latent_dim = 8 * base_channels
        specs = {spec.name: spec for spec in generator_table(base_channels)}
        for name in ("c1", "c2", "c3", "c4", "c5"):
            setattr(self, name, _down(specs[name]))
        for name in ("res1", "res2", "res3", "res4"):
            setattr(self, name, ResidualBlock(specs[name].in_channels))
        for name in ("t1", "t2", "t3", "t4", "out"):
            setattr(self, name, _up(specs[name]))

    def table(self) -> List[LayerSpec]:
        return generator_table(self.base_channels)

    def zero_init_output(self) -> None:
        """γ de la dernière IN à zéro: R ≡ 0 au départ (G = modèle Poisson-gaussien)"""
        with torch.no_grad():
            self.out.norm.weight.zero_()
            self.out.norm.bias.zero_()

    def forward(
        self,
        clean: torch.Tensor,
        init_noise: torch.Tensor,
        latent: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Retourne (ñ, R) avec ñ = ñ_init + R, tout en unités réseau"""
        if clean.shape != init_noise.shape:
            raise DimensionError(f"clean {tuple(clean.shape)} and init noise {tuple(init_noise.shape)} differ")
        h, w = clean.shape[-2:]
        if h % 32 or w % 32:
            raise DimensionError(f"generator input must be divisible by 32, got {h}x{w}")
        batch = clean.shape[0]
        if latent is None:
            latent = clean.new_zeros(batch, self.latent_dim)

        c1 = self.c1(torch.cat([init_noise, clean], dim=1))
        c2 = self.c2(c1)
        c3 = self.c3(c2)
        c4 = self.c4(c3)
        c5 = self.c5(c4)
        x = self.res2(self.res1(c5))
        tiled = latent[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        x = self.res4(self.res3(torch.cat([x, tiled], dim=1)))
        t1 = self.t1(x)
        t2 = self.t2(torch.cat([t1, c4], dim=1))
        t3 = self.t3(torch.cat([t2, c3], dim=1))
        t4 = self.t4(torch.cat([t3, c2], dim=1))
        residual = self.out(torch.cat([t4, c1], dim=1))
        final = init_noise + residual
        # R recalculé depuis ñ: ñ - ñ_init ≡ R à l'identique
        return final, final - init_noise


class Discriminator(_Audited):
    """Critique conditionnel: entrée [bruit, image propre] (8 canaux), sortie sans activation.

    Scores 1x(h/8 - 2)x(w/8 - 2): 2x2 sur les patches 32x32 d'entraînement, 6x6 en 64x64.
    """

    def __init__(self, base_channels: int = 64):
        super().__init__()
        self.base_channels = base_channels
        specs = {spec.name: spec for spec in discriminator_table(base_channels)}
        self.d1 = _down(specs["d1"])
        self.d2 = _down(specs["d2"])
        self.features = _down(specs["features"])
        score = specs["score"]
        # padding (1,0,1,0) puis k4 s1: carte de scores (h/8 - 2)x(w/8 - 2), égale à h/16 seulement en 32x32
        self.score = ConvBlock("C", score.in_channels, score.out_channels, score.kernel, 1, 0,
                               score.norm, score.activation, pad=(1, 0, 1, 0))

    def table(self) -> List[LayerSpec]:
        return discriminator_table(self.base_channels)

    def feature_map(self, noise: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
        if noise.shape != clean.shape:
            raise DimensionError(f"noise {tuple(noise.shape)} and clean {tuple(clean.shape)} differ")
        return self.features(self.d2(self.d1(torch.cat([noise, clean], dim=1))))

    def forward(self, noise: torch.Tensor, clean: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        features = self.feature_map(noise, clean)
        return self.score(features), features

    def frozen_features(self, noise: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
        """D_f avec paramètres détachés: aucun gradient ne remonte vers D"""
        params = {name: p.detach() for name, p in self.named_parameters()}
        return functional_call(self, params, (noise, clean))[1]


class CameraEncoder(_Audited):
    def __init__(self, base_channels: int = 64):
        super().__init__()
        self.base_channels = base_channels
        self.latent_dim = 8 * base_channels
        specs = {spec.name: spec for spec in encoder_table(base_channels)}
        e1 = specs["e1"]
        self.e1 = ConvBlock("C", e1.in_channels, e1.out_channels, e1.kernel, 1, 3, e1.norm, e1.activation)
        self.e2 = _down(specs["e2"])
        self.e3 = _down(specs["e3"])
        self.e4 = _down(specs["e4"])
        self.pool = nn.AdaptiveAvgPool2d(1)

    def table(self) -> List[LayerSpec]:
        return encoder_table(self.base_channels)

    def describe(self) -> List[LayerSpec]:
        specs = super().describe()
        channels = self.e4.raw_conv.out_channels
        return specs + [LayerSpec("pool", "POOL", 0, channels, channels, 0, "-", "-")]

    def forward(self, noisy: torch.Tensor) -> torch.Tensor:
        h, w = noisy.shape[-2:]
        if h < 8 or w < 8:
            raise DimensionError(f"encoder input must be at least 8x8, got {h}x{w}")
        x = self.e4(self.e3(self.e2(self.e1(noisy))))
        return self.pool(x).flatten(1)


def audit_architecture(model: _Audited) -> List[str]:
    """Écarts entre les couches construites et la table de référence (liste vide = conforme)"""
    expected = {spec.name: spec for spec in model.table()}
    actual = {spec.name: spec for spec in model.describe()}
    problems = []
    for name, spec in expected.items():
        if name not in actual:
            problems.append(f"{name}: missing layer")
        elif actual[name] != spec:
            problems.append(f"{name}: expected {spec}, got {actual[name]}")
    for name in actual.keys() - expected.keys():
        problems.append(f"{name}: unexpected layer")
    return problems
