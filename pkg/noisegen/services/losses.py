"""Objectifs d'entraînement: WGAN-GP, feature matching, triplet et perte totale du générateur."""
from typing import Callable, Optional, Tuple, Union

import torch
import torch.nn.functional as F

from ..errors import ArgumentError, CapabilityError, DimensionError
from ..models.training import FMReduction, LossWeights

CriticOutput = Union[torch.Tensor, Tuple[torch.Tensor, ...]]
Critic = Callable[[torch.Tensor, torch.Tensor], CriticOutput]
FeatureExtractor = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def _scores(output: CriticOutput) -> torch.Tensor:
    # Discriminator retourne (scores, features)
    return output[0] if isinstance(output, tuple) else output


def adv_loss_g(scores_fake: torch.Tensor) -> torch.Tensor:
    if scores_fake.numel() == 0:
        raise ArgumentError("adv_loss_g needs at least one score")
    return -scores_fake.mean()


def critic_loss(
    scores_fake: torch.Tensor,
    scores_real: torch.Tensor,
    gp: Union[torch.Tensor, float],
    lambda_gp: float,
) -> torch.Tensor:
    return scores_fake.mean() - scores_real.mean() + lambda_gp * gp


def gradient_penalty(
    critic: Critic,
    fake_noise: torch.Tensor,
    real_noise: torch.Tensor,
    clean: torch.Tensor,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """E[(‖∇ D(n̂|clean)‖₂ - 1)²] sur n̂ = u·réel + (1-u)·faux, u ~ U(0,1) par échantillon"""
    if fake_noise.shape != real_noise.shape or fake_noise.shape != clean.shape:
        raise DimensionError(
            f"gradient penalty shapes differ: fake {tuple(fake_noise.shape)}, "
            f"real {tuple(real_noise.shape)}, clean {tuple(clean.shape)}"
        )
    if not torch.is_grad_enabled():
        raise CapabilityError("gradient penalty needs autograd (called under no_grad)")

    batch = fake_noise.shape[0]
    u_shape = (batch,) + (1,) * (fake_noise.dim() - 1)
    u = torch.rand(u_shape, generator=generator, dtype=fake_noise.dtype).to(fake_noise.device)
    interpolated = (u * real_noise.detach() + (1 - u) * fake_noise.detach()).requires_grad_(True)

    scores = _scores(critic(interpolated, clean))
    gradients = None
    if scores.requires_grad:
        gradients, = torch.autograd.grad(
            outputs=scores,
            inputs=interpolated,
            grad_outputs=torch.ones_like(scores),
            create_graph=True,
            allow_unused=True,
        )
    if gradients is None:
        # Critique constant: gradient nul
        gradients = torch.zeros_like(interpolated)

    norm = gradients.reshape(batch, -1).norm(2, dim=-1)
    return torch.mean((norm - 1) ** 2)


def feature_matching_loss(
    features: FeatureExtractor,
    fake_noise: torch.Tensor,
    clean: torch.Tensor,
    reduction: FMReduction = FMReduction.SUM,
) -> torch.Tensor:
    """Moyenne sur le lot de ‖D_f(ñ|I_C) - D_f(I_C|I_C)‖₁.

    `features` doit déjà être gelé (Discriminator.frozen_features); la cible
    D_f(I_C|I_C) est calculée sans graphe.
    """
    if fake_noise.shape != clean.shape:
        raise DimensionError(f"fake {tuple(fake_noise.shape)} and clean {tuple(clean.shape)} differ")
    fake_features = features(fake_noise, clean)
    with torch.no_grad():
        target = features(clean, clean)
    diff = (fake_features - target).abs().reshape(fake_features.shape[0], -1)
    per_sample = diff.sum(dim=1) if FMReduction(reduction) == FMReduction.SUM else diff.mean(dim=1)
    return per_sample.mean()


def triplet_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negative: torch.Tensor,
    alpha: float = 0.2,
) -> torch.Tensor:
    """max(0, ‖a-p‖₂ - ‖a-n‖₂ + α), moyenne sur le lot; distances non élevées au carré"""
    if anchor.shape != positive.shape or anchor.shape != negative.shape:
        raise DimensionError(
            f"triplet shapes differ: {tuple(anchor.shape)}, {tuple(positive.shape)}, {tuple(negative.shape)}"
        )
    anchor, positive, negative = (torch.atleast_2d(t) for t in (anchor, positive, negative))
    pos_dist = torch.linalg.vector_norm(anchor - positive, dim=-1)
    neg_dist = torch.linalg.vector_norm(anchor - negative, dim=-1)
    return F.relu(pos_dist - neg_dist + alpha).mean()


def full_generator_loss(adv, fm, triplet, weights: LossWeights):
    return adv + weights.lambda_fm * fm + weights.lambda_triplet * triplet
