"""Displacement-sensitive max pooling over the other agents in a scene."""

from __future__ import annotations

import torch
from torch import nn


class DimensionMismatch(ValueError):
    pass


def mlp(dim_in, dim_hidden, dim_out):
    """Two linear layers with a ReLU between them; the output is linear."""
    return nn.Sequential(nn.Linear(dim_in, dim_hidden), nn.ReLU(), nn.Linear(dim_hidden, dim_out))


def masked_max(values, mask):
    """Max over dim -2 of ``values`` (..., N, E) restricted to ``mask`` (..., N).

    Rows with no valid entry reduce to zero. Gradients flow to the index
    ``torch.max`` reports for each coordinate.
    """
    fill = torch.finfo(values.dtype).min
    filled = values.masked_fill(~mask.unsqueeze(-1), fill)
    if filled.shape[-2] == 0:
        return values.new_zeros(values.shape[:-2] + values.shape[-1:])
    pooled = filled.max(dim=-2).values
    any_valid = mask.any(dim=-1, keepdim=True)
    return torch.where(any_valid, pooled, torch.zeros_like(pooled))


class PoolNet(nn.Module):
    """Pools ``(position, context)`` pairs of other agents against a target.

    Each other agent j contributes
    ``e_j = embed([context_j ; pos(position_j - target_position)])`` and the
    output is the coordinate-wise max of the ``e_j``.
    """

    def __init__(self, context_dim=32, pool_dim=32, pos_dim=16, hidden_dim=64):
        super().__init__()
        self.context_dim = context_dim
        self.pool_dim = pool_dim
        self.pos_net = mlp(2, hidden_dim, pos_dim)
        self.embed_net = mlp(context_dim + pos_dim, hidden_dim, pool_dim)

    def embeddings(self, target_pos, others_pos, others_ctx):
        if others_ctx.shape[-1] != self.context_dim:
            raise DimensionMismatch(
                f"context dimension {others_ctx.shape[-1]} != {self.context_dim}")
        disp = others_pos - target_pos.unsqueeze(-2)
        return self.embed_net(torch.cat([others_ctx, self.pos_net(disp)], dim=-1))

    def forward(self, target_pos, others_pos, others_ctx, mask=None):
        """Batched pooling.

        target_pos (..., 2), others_pos (..., N, 2), others_ctx (..., N, H),
        mask (..., N) bool. Returns (..., pool_dim).
        """
        if mask is None:
            mask = torch.ones(others_pos.shape[:-1], dtype=torch.bool, device=others_pos.device)
        if others_pos.shape[-2] == 0:
            return others_pos.new_zeros(others_pos.shape[:-2] + (self.pool_dim,))
        # masked rows may hold padding; zero them so NaN never enters the nets
        others_pos = torch.where(mask.unsqueeze(-1), others_pos, torch.zeros_like(others_pos))
        return masked_max(self.embeddings(target_pos, others_pos, others_ctx), mask)


def pool(target_position, others, net: PoolNet):
    """Pool a single target's crowd.

    ``others`` is a list of ``(position, context)`` pairs; an empty list
    gives the zero vector.
    """
    param = next(net.parameters())
    target = torch.as_tensor(target_position, dtype=param.dtype)
    if len(others) == 0:
        return target.new_zeros(net.pool_dim)
    for _, ctx in others:
        if torch.as_tensor(ctx).shape != (net.context_dim,):
            raise DimensionMismatch(
                f"context shape {tuple(torch.as_tensor(ctx).shape)} != ({net.context_dim},)")
    pos = torch.stack([torch.as_tensor(p, dtype=param.dtype) for p, _ in others])
    ctx = torch.stack([torch.as_tensor(c, dtype=param.dtype) for _, c in others])
    return net(target, pos, ctx)
