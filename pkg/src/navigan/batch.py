"""Padding a list of samples into dense tensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass
class Batch:
    obs: torch.Tensor               # (B, T_obs, 2)
    goal: torch.Tensor              # (B, 2)
    future: torch.Tensor            # (B, T_pred, 2), zeros where unknown
    others_obs: torch.Tensor        # (B, N, T_obs, 2)
    others_obs_mask: torch.Tensor   # (B, N, T_obs) bool
    others_fut: torch.Tensor        # (B, N, T_pred, 2)
    others_fut_mask: torch.Tensor   # (B, N, T_pred) bool

    def __len__(self):
        return self.obs.shape[0]

    @property
    def t_obs(self):
        return self.obs.shape[1]

    @property
    def t_pred(self):
        return self.future.shape[1]

    def target_sequence(self, future=None):
        """Observed target states followed by ``future`` (truth by default)."""
        return torch.cat([self.obs, self.future if future is None else future], dim=1)

    def others_sequence(self):
        return (torch.cat([self.others_obs, self.others_fut], dim=2),
                torch.cat([self.others_obs_mask, self.others_fut_mask], dim=2))

    def to(self, dtype):
        kw = {}
        for name in ("obs", "goal", "future", "others_obs", "others_fut"):
            kw[name] = getattr(self, name).to(dtype)
        return Batch(others_obs_mask=self.others_obs_mask, others_fut_mask=self.others_fut_mask, **kw)


def collate(samples, t_pred=None, dtype=torch.float64) -> Batch:
    """Stack samples; other agents are ordered by id and padded to the batch max."""
    if not samples:
        raise ValueError("cannot collate an empty list of samples")
    t_obs = len(samples[0].target_observed)
    if t_pred is None:
        known = [s.future_truth for s in samples if s.future_truth is not None]
        t_pred = len(known[0]) if known else 0
    B = len(samples)
    N = max(len(s.other_ids) for s in samples)
    obs = np.zeros((B, t_obs, 2))
    goal = np.zeros((B, 2))
    future = np.zeros((B, t_pred, 2))
    o_obs = np.full((B, N, t_obs, 2), np.nan)
    o_fut = np.full((B, N, t_pred, 2), np.nan)
    for b, s in enumerate(samples):
        if len(s.target_observed) != t_obs:
            raise ValueError(f"sample {s.key}: observed length {len(s.target_observed)} != {t_obs}")
        obs[b] = s.target_observed
        goal[b] = s.goal
        if s.future_truth is not None:
            if len(s.future_truth) != t_pred:
                raise ValueError(f"sample {s.key}: future length {len(s.future_truth)} != {t_pred}")
            future[b] = s.future_truth
        for n, agent in enumerate(s.other_ids):
            o_obs[b, n] = s.observed[agent]
            if agent in s.others_future and t_pred:
                o_fut[b, n] = s.others_future[agent]
    o_obs_mask = ~np.isnan(o_obs[..., 0])
    o_fut_mask = ~np.isnan(o_fut[..., 0])
    t = lambda a: torch.as_tensor(np.nan_to_num(a, nan=0.0), dtype=dtype)  # noqa: E731
    return Batch(
        obs=t(obs), goal=t(goal), future=t(future),
        others_obs=t(o_obs), others_obs_mask=torch.as_tensor(o_obs_mask),
        others_fut=t(o_fut), others_fut_mask=torch.as_tensor(o_fut_mask),
    )
