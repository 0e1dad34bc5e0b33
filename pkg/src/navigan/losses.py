"""Training objectives. Every function works on leading batch dimensions."""

from __future__ import annotations

import torch
import torch.nn.functional as F


class LengthMismatch(ValueError):
    pass


def _tensor(x, like=None):
    if isinstance(x, torch.Tensor):
        return x
    dtype = like.dtype if isinstance(like, torch.Tensor) else torch.float64
    return torch.as_tensor(x, dtype=dtype)


def safe_norm(x, dim=-1):
    """Euclidean norm with a zero (not NaN) gradient at the origin."""
    sq = (x * x).sum(dim=dim)
    zero = sq == 0  # NaN stays NaN so divergence is not masked
    return torch.where(zero, torch.zeros_like(sq), torch.sqrt(torch.where(zero, torch.ones_like(sq), sq)))


def l2_loss(truth, pred):
    """Norm of the stacked residual over all steps: (..., T, 2) -> (...)."""
    truth, pred = _tensor(truth, pred), _tensor(pred, truth)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth shape {tuple(truth.shape)} != prediction shape {tuple(pred.shape)}")
    return safe_norm((truth - pred).flatten(start_dim=-2))


def fde_loss(truth_final, intention_final):
    """Distance between final truth point and the intention branch's final point."""
    truth_final, intention_final = _tensor(truth_final, intention_final), _tensor(intention_final, truth_final)
    return safe_norm(truth_final - intention_final)


def resistance_loss(waypoints, others_future, d_safe=0.5, mask=None):
    """Norm of the ``max(d_safe - d, 0)`` terms over all (step, other agent) pairs.

    waypoints (..., T, 2), others_future (..., N, T, 2). Without ``mask``,
    NaN rows in ``others_future`` mark absent agents.
    """
    if d_safe <= 0:
        raise ValueError("d_safe must be positive")
    waypoints = _tensor(waypoints, others_future)
    others_future = _tensor(others_future, waypoints)
    if mask is None:
        mask = ~torch.isnan(others_future[..., 0])
    others_future = torch.where(mask.unsqueeze(-1), others_future, torch.zeros_like(others_future))
    if others_future.shape[-2] != waypoints.shape[-2]:
        raise LengthMismatch("others_future and waypoints differ in length")
    dist = safe_norm(waypoints.unsqueeze(-3) - others_future)
    excess = torch.clamp(d_safe - dist, min=0.0) * mask
    return safe_norm(excess.flatten(start_dim=-2))


def adversarial_losses(logit_real, logit_fake):
    """Non-saturating binary cross-entropy losses ``(d_loss, g_loss)``."""
    logit_real = _tensor(logit_real, logit_fake)
    logit_fake = _tensor(logit_fake, logit_real)
    # -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    d_loss = F.softplus(-logit_real) + F.softplus(logit_fake)
    g_loss = F.softplus(-logit_fake)
    return d_loss, g_loss

