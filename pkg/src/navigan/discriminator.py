"""Social-aware discriminator scoring a full observed+future target sequence."""

from __future__ import annotations

import torch
from torch import nn

from .poolnet import DimensionMismatch, PoolNet, mlp


class EmptySequence(ValueError):
    pass


class Discriminator(nn.Module):
    """Per-step crowd pooling followed by an LSTM over time and a logit head.

    At every step the other agents' states are embedded, pooled against the
    target's state, and concatenated with the embedding of the target's own
    state before entering the recurrent cell.
    """

    def __init__(self, hidden_dim=32, embed_dim=32, pool_dim=32, mlp_dim=64):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.state_embed = nn.Sequential(nn.Linear(2, embed_dim), nn.ReLU())
        self.pool = PoolNet(embed_dim, pool_dim, hidden_dim=mlp_dim)
        self.cell = nn.LSTMCell(embed_dim + pool_dim, hidden_dim)
        self.head = mlp(hidden_dim, mlp_dim, 1)

    def forward(self, target_seq, others_seq, others_mask):
        """target_seq (B, T, 2), others_seq (B, N, T, 2), others_mask (B, N, T) -> (B,) logits."""
        if target_seq.ndim != 3 or target_seq.shape[-1] != 2:
            raise DimensionMismatch(f"target sequence shape {tuple(target_seq.shape)} is not (B, T, 2)")
        B, T, _ = target_seq.shape
        if T == 0:
            raise EmptySequence("target sequence has no steps")
        if others_seq.shape[:1] != (B,) or others_seq.shape[2:] != (T, 2):
            raise DimensionMismatch(
                f"others shape {tuple(others_seq.shape)} incompatible with target {tuple(target_seq.shape)}")
        others_seq = torch.where(others_mask.unsqueeze(-1), others_seq, torch.zeros_like(others_seq))
        # time-major views: (B, T, N, .)
        o_pos = others_seq.transpose(1, 2)
        o_mask = others_mask.transpose(1, 2)
        pooled = self.pool(target_seq, o_pos, self.state_embed(o_pos), o_mask)
        steps = torch.cat([self.state_embed(target_seq), pooled], dim=-1)
        h = target_seq.new_zeros(B, self.hidden_dim)
        c = torch.zeros_like(h)
        for t in range(T):
            h, c = self.cell(steps[:, t], (h, c))
        return self.head(h).squeeze(-1)


def discriminate(disc: Discriminator, batch, future=None):
    """Logits for the batch's target with ``future`` (truth by default) appended."""
    others, mask = batch.others_sequence()
    return disc(batch.target_sequence(future), others, mask)
