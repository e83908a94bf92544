"""Training objectives: pixel MAE, feature-space perceptual loss, and GAN losses."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ShapeError
from .layers import log_sigmoid
from .models import FeatureExtractor
from .tensor import Tensor, absolute, mean, neg


@dataclass(frozen=True)
class LossWeights:
    w_percep: float = 1.0
    w_img_gan: float = 1e-3
    w_feat_gan: float = 1e-3

    def __post_init__(self):
        ws = (self.w_percep, self.w_img_gan, self.w_feat_gan)
        if any(w < 0 for w in ws):
            raise ValueError("loss weights must be non-negative")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one loss weight must be positive")


def mae_loss(sr: Tensor, hr: Tensor) -> Tensor:
    if sr.shape != hr.shape:
        raise ShapeError(f"mae_loss shapes differ: {sr.shape} vs {hr.shape}")
    return mean(absolute(sr - hr.detach()))


def perceptual_loss(fe: FeatureExtractor, sr: Tensor, hr: Tensor, sr_features: Tensor | None = None) -> Tensor:
    """Mean squared distance between extracted features; ``hr`` is treated as constant.

    ``sr_features`` may carry an already computed ``fe(sr)`` to avoid a second pass.
    """
    if sr.shape != hr.shape:
        raise ShapeError(f"perceptual_loss shapes differ: {sr.shape} vs {hr.shape}")
    phi_sr = fe(sr) if sr_features is None else sr_features
    diff = phi_sr - fe(hr.detach()).detach()
    return mean(diff * diff)


def gan_d_loss(real_logit: Tensor, fake_logit: Tensor) -> Tensor:
    """``-mean(log s(real)) - mean(log(1 - s(fake)))`` using ``log(1 - s(x)) = log s(-x)``."""
    return neg(mean(log_sigmoid(real_logit))) - mean(log_sigmoid(neg(fake_logit)))


def gan_g_loss(fake_logit: Tensor) -> Tensor:
    """Non-saturating generator loss ``-mean(log s(fake))``."""
    return neg(mean(log_sigmoid(fake_logit)))


def total_generator_loss(w: LossWeights, fe: FeatureExtractor, sr: Tensor, hr: Tensor,
                         img_fake_logit: Tensor | None, feat_fake_logit: Tensor | None,
                         sr_features: Tensor | None = None) -> Tensor:
    """Weighted sum of the three generator terms.  Zero-weight terms are skipped entirely."""
    terms = []
    if w.w_percep:
        terms.append(perceptual_loss(fe, sr, hr, sr_features) * w.w_percep)
    if w.w_img_gan:
        terms.append(gan_g_loss(img_fake_logit) * w.w_img_gan)
    if w.w_feat_gan:
        terms.append(gan_g_loss(feat_fake_logit) * w.w_feat_gan)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total
