"""Intention-force and social-force generators and the goal-conditioned baseline.

All tensors live in the target-centric frame. Decoders are autoregressive:
each step feeds the previous output back as input.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .batch import Batch
from .poolnet import DimensionMismatch, PoolNet, mlp

GOAL_SOCIAL = "GOAL_SOCIAL"
NAVI_L2 = "NAVI_L2"
NAVIGAN = "NAVIGAN"
NAVIGAN_R = "NAVIGAN_R"
VARIANTS = (GOAL_SOCIAL, NAVI_L2, NAVIGAN, NAVIGAN_R)
ADVERSARIAL_VARIANTS = (NAVIGAN, NAVIGAN_R)


class SequenceEncoder(nn.Module):
    """LSTM cell run over a sequence of 2D states from a zero state."""

    def __init__(self, hidden_dim=32):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.cell = nn.LSTMCell(2, hidden_dim)

    def forward(self, seq, mask=None):
        """seq (M, T, 2); mask (M, T) marks steps that update the state.

        Masked steps leave (h, c) untouched, so an agent that appears late is
        encoded from its first observed state.
        """
        M, T, _ = seq.shape
        h = seq.new_zeros(M, self.hidden_dim)
        c = seq.new_zeros(M, self.hidden_dim)
        for t in range(T):
            h_new, c_new = self.cell(seq[:, t], (h, c))
            if mask is None:
                h, c = h_new, c_new
            else:
                m = mask[:, t].unsqueeze(-1)
                h = torch.where(m, h_new, h)
                c = torch.where(m, c_new, c)
        return h, c


def encode_sequence(encoder: SequenceEncoder, seq):
    """Encode one (T, 2) sequence; returns the final (h, c) as 1-D tensors."""
    seq = torch.as_tensor(seq, dtype=next(encoder.parameters()).dtype)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError("sequence must be a non-empty (T, 2) array")
    h, c = encoder(seq.unsqueeze(0))
    return h[0], c[0]


def decode(cell: nn.LSTMCell, head: nn.Module, h, first_input, steps, residual=False):
    """Autoregressive rollout from hidden ``h`` and a zero cell state.

    With ``residual`` the head output is a displacement added to the
    previous output instead of the output itself.
    """
    c = torch.zeros_like(h)
    prev = first_input
    outputs = []
    for _ in range(steps):
        h, c = cell(prev, (h, c))
        prev = prev + head(h) if residual else head(h)
        outputs.append(prev)
    return torch.stack(outputs, dim=1)


@dataclass
class GeneratorOutput:
    intention_path: torch.Tensor   # (B, T_pred, 2)
    social_forces: torch.Tensor    # (B, T_pred, 2)
    waypoints: torch.Tensor        # (B, T_pred, 2)


class IntentionGenerator(nn.Module):
    def __init__(self, hidden_dim=32, mlp_dim=64):
        super().__init__()
        self.encoder = SequenceEncoder(hidden_dim)
        self.decoder = nn.LSTMCell(2, hidden_dim + 2)
        self.spatial = mlp(hidden_dim + 2, mlp_dim, 2)

    def forward(self, obs, goal, t_pred):
        h, _ = self.encoder(obs)
        return decode(self.decoder, self.spatial, torch.cat([h, goal], dim=-1), obs[:, -1], t_pred,
                      residual=True)


def _encode_crowd(encoder, batch: Batch):
    """Encode the target and every other agent with one encoder."""
    h_target, _ = encoder(batch.obs)
    B, N, T, _ = batch.others_obs.shape
    if N == 0:
        return h_target, h_target.new_zeros(B, 0, encoder.hidden_dim)
    h_others, _ = encoder(batch.others_obs.reshape(B * N, T, 2), batch.others_obs_mask.reshape(B * N, T))
    return h_target, h_others.reshape(B, N, -1)


def _pool_at_last_obs(pool: PoolNet, batch: Batch, h_others):
    # agents absent at the last observed step do not take part
    return pool(batch.obs[:, -1], batch.others_obs[:, :, -1], h_others, batch.others_obs_mask[:, :, -1])


class SocialForceGenerator(nn.Module):
    def __init__(self, hidden_dim=32, pool_dim=32, noise_dim=8, mlp_dim=64):
        super().__init__()
        self.noise_dim = noise_dim
        self.encoder = SequenceEncoder(hidden_dim)
        self.pool = PoolNet(hidden_dim, pool_dim, hidden_dim=mlp_dim)
        self.decoder = nn.LSTMCell(2, hidden_dim + pool_dim + noise_dim)
        self.social = mlp(hidden_dim + pool_dim + noise_dim, mlp_dim, 2)
        # forces start at exactly zero so an untrained branch leaves the intention path intact
        nn.init.zeros_(self.social[-1].weight)
        nn.init.zeros_(self.social[-1].bias)

    def forward(self, batch: Batch, noise, t_pred=None):
        if noise.shape != (len(batch), self.noise_dim):
            raise DimensionMismatch(f"noise shape {tuple(noise.shape)} != ({len(batch)}, {self.noise_dim})")
        h_target, h_others = _encode_crowd(self.encoder, batch)
        pooled = _pool_at_last_obs(self.pool, batch, h_others)
        h0 = torch.cat([h_target, pooled, noise], dim=-1)
        first = h_target.new_zeros(len(batch), 2)
        return decode(self.decoder, self.social, h0, first, t_pred or batch.t_pred)


class NaviGANGenerator(nn.Module):
    """Intention branch plus social/fluctuation branch; waypoints are their sum."""

    def __init__(self, hidden_dim=32, pool_dim=32, noise_dim=8, mlp_dim=64):
        super().__init__()
        self.noise_dim = noise_dim
        self.intention = IntentionGenerator(hidden_dim, mlp_dim)
        self.social = SocialForceGenerator(hidden_dim, pool_dim, noise_dim, mlp_dim)

    def forward(self, batch: Batch, noise, t_pred=None):
        t_pred = t_pred or batch.t_pred
        intention = self.intention(batch.obs, batch.goal, t_pred)
        forces = self.social(batch, noise, t_pred)
        return GeneratorOutput(intention, forces, intention + forces)

    def intention_path(self, batch: Batch, t_pred=None):
        return self.intention(batch.obs, batch.goal, t_pred or batch.t_pred)


class GoalSocialLSTM(nn.Module):
    """Single encoder-pool-decoder path with the goal appended after pooling."""

    def __init__(self, hidden_dim=32, pool_dim=32, mlp_dim=64):
        super().__init__()
        self.noise_dim = 0
        self.encoder = SequenceEncoder(hidden_dim)
        self.pool = PoolNet(hidden_dim, pool_dim, hidden_dim=mlp_dim)
        self.decoder = nn.LSTMCell(2, hidden_dim + pool_dim + 2)
        self.spatial = mlp(hidden_dim + pool_dim + 2, mlp_dim, 2)

    def forward(self, batch: Batch, noise=None, t_pred=None):
        h_target, h_others = _encode_crowd(self.encoder, batch)
        pooled = _pool_at_last_obs(self.pool, batch, h_others)
        h0 = torch.cat([h_target, pooled, batch.goal], dim=-1)
        path = decode(self.decoder, self.spatial, h0, batch.obs[:, -1], t_pred or batch.t_pred, residual=True)
        return GeneratorOutput(path, torch.zeros_like(path), path)

    def intention_path(self, batch: Batch, t_pred=None):
        return self.forward(batch, t_pred=t_pred).waypoints


def build_generator(variant, hidden_dim=32, pool_dim=32, noise_dim=8, mlp_dim=64):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == GOAL_SOCIAL:
        return GoalSocialLSTM(hidden_dim, pool_dim, mlp_dim)
    return NaviGANGenerator(hidden_dim, pool_dim, noise_dim, mlp_dim)


def generate(generator, batch: Batch, noise=None, intention_only=False) -> GeneratorOutput:
    """Run a generator; ``intention_only`` drops the social branch (dagger variants)."""
    dtype = next(generator.parameters()).dtype
    if batch.obs.dtype != dtype:
        batch = batch.to(dtype)
    if intention_only:
        path = generator.intention_path(batch)
        return GeneratorOutput(path, torch.zeros_like(path), path)
    if noise is None:
        noise = batch.obs.new_zeros(len(batch), generator.noise_dim)
    return generator(batch, noise)
