"""Loss terms for the joint translation-GAN / classifier objective.

All functions take and return tensors so gradients flow through them; the
scalar helpers in tests call them with plain float tensors.

Conventions:
  - Discriminators and the classifier output probabilities (post-sigmoid /
    softmax), not logits. Probabilities are clamped to [EPS, 1 - EPS]
    before any log.
  - Expectations are means over every element of the input tensor, so a
    patch discriminator's output grid is averaged together with the batch
    dimension.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import torch

from .errors import ContractViolation, NumericalError

logger = logging.getLogger(__name__)

EPS = 1e-7

GAN_LOSS_FORMS = ("bce", "lsq")

_clamp_warned = False


def _safe_log(p: torch.Tensor) -> torch.Tensor:
    global _clamp_warned
    if not _clamp_warned and ((p < EPS) | (p > 1.0 - EPS)).any():
        logger.warning("probability clamped to [%g, %g] before log", EPS, 1 - EPS)
        _clamp_warned = True
    return torch.log(p.clamp(EPS, 1.0 - EPS))


@dataclass(frozen=True)
class LossWeights:
    """Objective weights: cycle beta, identity alpha, imbalance gamma."""

    alpha: float = 5.0
    beta: float = 10.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ContractViolation(f"gamma must be >= 1, got {self.gamma}")
        if self.alpha < 0 or self.beta < 0:
            raise ContractViolation("alpha and beta must be non-negative")


@dataclass
class LossBreakdown:
    """Per-term values of the full objective, plus the weighted total."""

    gan_ab: torch.Tensor
    gan_ba: torch.Tensor
    cyc_a: torch.Tensor
    cyc_b: torch.Tensor
    ide: torch.Tensor
    cls_a: torch.Tensor
    cls_b: torch.Tensor
    total: torch.Tensor | None = field(default=None)

    def detached(self) -> dict[str, float]:
        out = {}
        for name in ("gan_ab", "gan_ba", "cyc_a", "cyc_b", "ide", "cls_a", "cls_b", "total"):
            v = getattr(self, name)
            out[name] = float(v.detach()) if v is not None else float("nan")
        return out


def _check_gan_loss_form(form: str) -> None:
    if form not in GAN_LOSS_FORMS:
        raise ContractViolation(
            f"gan loss form must be one of {GAN_LOSS_FORMS}, got {form!r}"
        )


def discriminator_loss(
    d_real: torch.Tensor, d_fake: torch.Tensor, form: str = "bce"
) -> torch.Tensor:
    """Adversarial loss as seen by the discriminator.

    "bce": -E[log D(real)] - E[log(1 - D(fake))], means over all elements.
    "lsq": E[(D(real) - 1)^2] + E[D(fake)^2] on the same (0,1) patch
    scores; a flatter-gradient alternative when the log terms destabilize
    training.
    """
    _check_gan_loss_form(form)
    if form == "lsq":
        return ((d_real - 1.0) ** 2).mean() + (d_fake**2).mean()
    return -_safe_log(d_real).mean() - _safe_log(1.0 - d_fake).mean()


def generator_adversarial_loss(d_fake: torch.Tensor, form: str = "bce") -> torch.Tensor:
    """Generator's adversarial objective: non-saturating -E[log D(fake)]
    for "bce", E[(D(fake) - 1)^2] for "lsq"."""
    _check_gan_loss_form(form)
    if form == "lsq":
        return ((d_fake - 1.0) ** 2).mean()
    return -_safe_log(d_fake).mean()


def cycle_loss(reconstructed: torch.Tensor, original: torch.Tensor) -> torch.Tensor:
    """Mean absolute reconstruction error E[|G(F(x)) - x|]."""
    if reconstructed.shape != original.shape:
        raise ContractViolation(
            f"cycle shapes differ: {tuple(reconstructed.shape)} vs {tuple(original.shape)}"
        )
    return (reconstructed - original).abs().mean()


def identity_loss(
    g_ab_of_b: torch.Tensor,
    b: torch.Tensor,
    g_ba_of_a: torch.Tensor,
    a: torch.Tensor,
) -> torch.Tensor:
    """E[|G_AB(b) - b|] + E[|G_BA(a) - a|]: translators should leave
    targets of their own domain untouched."""
    if g_ab_of_b.shape != b.shape or g_ba_of_a.shape != a.shape:
        raise ContractViolation("identity shapes differ")
    return (g_ab_of_b - b).abs().mean() + (g_ba_of_a - a).abs().mean()


def classifier_loss_minority(
    z_real_b: torch.Tensor, z_fake_b: torch.Tensor
) -> torch.Tensor:
    """-E[log z(b)] - E[log z(G_AB(a))]: push minority-class probability up
    on real and translated minority images."""
    return -_safe_log(z_real_b).mean() - _safe_log(z_fake_b).mean()


def classifier_loss_majority(
    z_real_a: torch.Tensor, z_fake_a: torch.Tensor
) -> torch.Tensor:
    """-E[log(1 - z(a))] - E[log(1 - z(G_BA(b)))]: push minority-class
    probability down on real and translated majority images."""
    return -_safe_log(1.0 - z_real_a).mean() - _safe_log(1.0 - z_fake_a).mean()


def classifier_loss_combined(
    loss_b: torch.Tensor, loss_a: torch.Tensor, gamma: float
) -> torch.Tensor:
    """L_B + (1/gamma) L_A: the majority term is down-weighted by the
    imbalance ratio so each real image contributes equally."""
    if gamma < 1.0:
        raise ContractViolation(f"gamma must be >= 1, got {gamma}")
    return loss_b + loss_a / gamma


def full_objective(
    parts: LossBreakdown,
    weights: LossWeights,
    eq7_unweighted: bool = False,
) -> torch.Tensor:
    """Weighted total the generators minimize.

    GAN + beta * cycle + alpha * identity + classifier feedback. By default
    the classifier terms enter with the same 1/gamma weighting used to
    train the classifier itself; ``eq7_unweighted`` adds them unweighted
    instead.
    """
    if eq7_unweighted:
        cls_term = parts.cls_a + parts.cls_b
    else:
        cls_term = classifier_loss_combined(parts.cls_b, parts.cls_a, weights.gamma)
    total = (
        parts.gan_ab
        + parts.gan_ba
        + weights.beta * (parts.cyc_a + parts.cyc_b)
        + weights.alpha * parts.ide
        + cls_term
    )
    if not torch.isfinite(total):
        for name in ("gan_ab", "gan_ba", "cyc_a", "cyc_b", "ide", "cls_a", "cls_b"):
            v = getattr(parts, name)
            if not torch.isfinite(v):
                raise NumericalError(f"loss term {name} is non-finite: {float(v)}")
        raise NumericalError("total loss is non-finite")
    parts.total = total
    return total
