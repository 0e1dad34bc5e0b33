"""Alternating adversarial training for every model variant.

Randomness comes from three independent streams seeded from one integer:
batch order, generator-step noise, and discriminator-step noise. A
generator run therefore sees the same noise whether or not a discriminator
is being trained alongside it.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .batch import Batch, collate
from .bundle import ModelBundle, ModelConfig
from .discriminator import discriminate
from .generators import ADVERSARIAL_VARIANTS, GOAL_SOCIAL, NAVI_L2, NAVIGAN_R, VARIANTS
from .losses import adversarial_losses, fde_loss, l2_loss, resistance_loss

log = logging.getLogger(__name__)


class DivergenceDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class LossWeights:
    w_l2: float = 1.0
    w_fde: float = 1.0
    w_resist: float = 1.0
    w_adv: float = 1.0
    d_safe: float = 0.5

    def __post_init__(self):
        for name in ("w_l2", "w_fde", "w_resist", "w_adv", "d_safe"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "NAVIGAN"
    batch_size: int = 32
    epochs: int = 500
    learning_rate: float = 1e-3
    seed: int = 0
    grad_clip: float = 10.0
    checkpoint_every: int = 0
    dtype: str = "float32"
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("batch_size, epochs and learning_rate must be positive")


def log_columns(variant: str) -> list[str]:
    cols = ["epoch"]
    if variant in ADVERSARIAL_VARIANTS:
        cols += ["d_loss", "g_loss"]
    cols.append("l2")
    if variant != GOAL_SOCIAL:
        cols.append("fde")
    if variant == NAVIGAN_R:
        cols.append("resist")
    return cols


def seed_streams(seed: int, n: int = 4) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def select(batch: Batch, idx) -> Batch:
    """Rows ``idx`` of a padded batch, trimmed to the widest crowd among them."""
    mask = batch.others_obs_mask[idx]
    width = int((mask.any(dim=-1)).sum(dim=-1).max()) if mask.shape[1] else 0
    return Batch(
        obs=batch.obs[idx], goal=batch.goal[idx], future=batch.future[idx],
        others_obs=batch.others_obs[idx, :width], others_obs_mask=mask[:, :width],
        others_fut=batch.others_fut[idx, :width], others_fut_mask=batch.others_fut_mask[idx, :width],
    )


class Trainer:
    """Owns the bundle's parameters and both optimizers during training."""

    def __init__(self, bundle: ModelBundle, cfg: TrainConfig, weights: LossWeights = LossWeights()):
        self.bundle = bundle
        self.cfg = cfg
        self.weights = weights
        self.variant = bundle.config.variant
        s_shuffle, s_gnoise, s_dnoise, _ = seed_streams(cfg.seed)
        self.shuffle_rng = torch.Generator().manual_seed(s_shuffle)
        self.g_noise_rng = torch.Generator().manual_seed(s_gnoise)
        self.d_noise_rng = torch.Generator().manual_seed(s_dnoise)
        self.opt_g = torch.optim.Adam(bundle.generator.parameters(), lr=cfg.learning_rate)
        self.opt_d = None
        if self.adversarial:
            self.opt_d = torch.optim.Adam(bundle.discriminator.parameters(), lr=cfg.learning_rate)

    @property
    def adversarial(self) -> bool:
        return self.variant in ADVERSARIAL_VARIANTS

    def noise(self, n: int, rng: torch.Generator):
        dim = self.bundle.noise_dim
        dtype = next(self.bundle.generator.parameters()).dtype
        if self.variant in (GOAL_SOCIAL, NAVI_L2):
            # the L2-only variants run the social branch without fluctuation noise
            return torch.zeros(n, dim, dtype=dtype)
        return torch.randn(n, dim, generator=rng, dtype=dtype)

    def discriminator_step(self, batch: Batch) -> float:
        gen, disc = self.bundle.generator, self.bundle.discriminator
        with torch.no_grad():
            fake = gen(batch, self.noise(len(batch), self.d_noise_rng)).waypoints
        d_loss, _ = adversarial_losses(discriminate(disc, batch), discriminate(disc, batch, fake))
        d_loss = d_loss.mean()
        _check_finite({"d_loss": d_loss})
        self.opt_d.zero_grad()
        d_loss.backward()
        torch.nn.utils.clip_grad_norm_(disc.parameters(), self.cfg.grad_clip)
        self.opt_d.step()
        return d_loss.item()

    def generator_terms(self, batch: Batch, noise) -> dict[str, torch.Tensor]:
        out = self.bundle.generator(batch, noise)
        w = self.weights
        terms = {"l2": l2_loss(batch.future, out.waypoints).mean()}
        total = w.w_l2 * terms["l2"]
        if self.variant != GOAL_SOCIAL:
            terms["fde"] = fde_loss(batch.future[:, -1], out.intention_path[:, -1]).mean()
            total = total + w.w_fde * terms["fde"]
        if self.adversarial:
            disc = self.bundle.discriminator
            _, g_loss = adversarial_losses(torch.zeros(()), discriminate(disc, batch, out.waypoints))
            terms["g_loss"] = g_loss.mean()
            total = total + w.w_adv * terms["g_loss"]
        if self.variant == NAVIGAN_R:
            terms["resist"] = resistance_loss(out.waypoints, batch.others_fut, w.d_safe,
                                              mask=batch.others_fut_mask).mean()
            total = total + w.w_resist * terms["resist"]
        terms["total"] = total
        return terms

    def generator_step(self, batch: Batch) -> dict[str, float]:
        disc = self.bundle.discriminator
        if disc is not None:
            disc.requires_grad_(False)
        try:
            terms = self.generator_terms(batch, self.noise(len(batch), self.g_noise_rng))
            _check_finite(terms)
            self.opt_g.zero_grad()
            terms["total"].backward()
        finally:
            if disc is not None:
                disc.requires_grad_(True)
        torch.nn.utils.clip_grad_norm_(self.bundle.generator.parameters(), self.cfg.grad_clip)
        self.opt_g.step()
        return {k: v.item() for k, v in terms.items()}

    def epoch_order(self, n: int):
        perm = torch.randperm(n, generator=self.shuffle_rng)
        return [perm[i:i + self.cfg.batch_size] for i in range(0, n, self.cfg.batch_size)]

    def run_epoch(self, data: Batch, epoch: int) -> dict:
        sums: dict[str, float] = {}
        count = 0
        for idx in self.epoch_order(len(data)):
            batch = select(data, idx)
            if self.adversarial:
                sums["d_loss"] = sums.get("d_loss", 0.0) + self.discriminator_step(batch) * len(idx)
            for k, v in self.generator_step(batch).items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
            count += len(idx)
        record = {"epoch": epoch}
        for col in log_columns(self.variant)[1:]:
            record[col] = sums[col] / count
        return record

    def fit(self, samples, log_path=None, checkpoint_dir=None, on_epoch=None) -> list[dict]:
        if not samples:
            raise ValueError("no training samples")
        dtype = next(self.bundle.generator.parameters()).dtype
        data = collate(samples, t_pred=self.bundle.config.t_pred, dtype=dtype)
        history = []
        log_fh = open(log_path, "w") if log_path else None
        try:
            for epoch in range(1, self.cfg.epochs + 1):
                record = self.run_epoch(data, epoch)
                history.append(record)
                log.debug("epoch %d %s", epoch, record)
                if log_fh:
                    log_fh.write(json.dumps(record) + "\n")
                    log_fh.flush()
                if checkpoint_dir and self.cfg.checkpoint_every and epoch % self.cfg.checkpoint_every == 0:
                    self.bundle.save(Path(checkpoint_dir) / f"checkpoint_{epoch:05d}.safetensors")
                if on_epoch:
                    on_epoch(record)
        finally:
            if log_fh:
                log_fh.close()
        return history


def _check_finite(terms):
    for name, value in terms.items():
        if not torch.isfinite(value).all():
            raise DivergenceDetected(f"{name} became non-finite ({value.item()})")


def train(samples, cfg: TrainConfig, weights: LossWeights = LossWeights(), log_path=None,
          checkpoint_dir=None, bundle: ModelBundle | None = None):
    """Train a fresh (or given) bundle; returns ``(bundle, history)``."""
    if bundle is None:
        model_cfg = ModelConfig(**{**cfg.model.__dict__, "variant": cfg.variant})
        bundle = ModelBundle.build(model_cfg, seed=seed_streams(cfg.seed)[3], dtype=getattr(torch, cfg.dtype))
    trainer = Trainer(bundle, cfg, weights)
    history = trainer.fit(samples, log_path, checkpoint_dir)
    return bundle, history
