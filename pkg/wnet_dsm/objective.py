"""
Least-squares adversarial terms plus the lambda weighted L1 reconstruction.

All losses operate in normalized (tanh) units and return scalar tensors.
"""

from dataclasses import dataclass, asdict

import torch

from .errors import ParameterError


@dataclass(frozen=True)
class LossWeights:

    lambda_l1: float = 100.0
    real_label: float = 1.0
    fake_label: float = 0.0

    def __post_init__(self):

        if self.lambda_l1 < 0:
            raise ParameterError(f'lambda_l1 must be non-negative, got {self.lambda_l1}')

    def to_dict(self):

        return asdict(self)


def _nonempty(*tensors):

    for t in tensors:
        if t.numel() == 0:
            raise ParameterError('Loss evaluated on an empty map')


def d_loss(d_on_real, d_on_fake, weights=LossWeights()):

    _nonempty(d_on_real, d_on_fake)

    return ((d_on_real - weights.real_label) ** 2).mean() + \
           ((d_on_fake - weights.fake_label) ** 2).mean()


def g_adv_loss(d_on_fake, weights=LossWeights()):

    _nonempty(d_on_fake)

    return ((d_on_fake - weights.real_label) ** 2).mean()


def l1_loss(generated, ground_truth, valid_mask=None):
    """Mean absolute difference over pixels where ``valid_mask`` is 1."""

    if generated.shape != ground_truth.shape:
        raise ParameterError(f'Shape mismatch {tuple(generated.shape)} vs {tuple(ground_truth.shape)}')

    diff = (generated - ground_truth).abs()

    if valid_mask is None:
        _nonempty(diff)
        return diff.mean()

    valid_mask = valid_mask.to(diff.dtype).expand_as(diff)
    n = valid_mask.sum()
    if n.item() == 0:
        raise ParameterError('L1 loss has no valid pixels')

    return (diff * valid_mask).sum() / n


def g_total_loss(d_on_fake, generated, ground_truth, weights=LossWeights(), valid_mask=None):

    return g_adv_loss(d_on_fake, weights) + \
        weights.lambda_l1 * l1_loss(generated, ground_truth, valid_mask)


class Objective(object):
    """Evaluates every loss component of a training step in one place."""

    def __init__(self, weights: LossWeights):

        self.weights = weights

    def discriminator(self, d_on_real, d_on_fake):

        return d_loss(d_on_real, d_on_fake, self.weights)

    def generator(self, d_on_fake, generated, ground_truth, valid_mask=None):

        adv = g_adv_loss(d_on_fake, self.weights)
        l1 = l1_loss(generated, ground_truth, valid_mask)

        return adv, l1, adv + self.weights.lambda_l1 * l1


def is_finite(*losses):

    return all(torch.isfinite(t).all().item() for t in losses)
