"""scikit-learn style front end: ``NaviGANPlanner().fit(samples).predict(samples)``."""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .batch import collate
from .bundle import ModelBundle, ModelConfig
from .generators import GOAL_SOCIAL, NAVI_L2, VARIANTS, generate
from .metrics import ade_fde
from .scene import TrainingSample
from .training import LossWeights, TrainConfig, seed_streams, train


def check_samples(X, t_obs, t_pred=None, require_future=False) -> list[TrainingSample]:
    """Validate a list of samples against the window lengths an estimator expects."""
    if isinstance(X, TrainingSample):
        raise TypeError("expected a list of TrainingSample, got a single sample")
    X = list(X)
    if not X:
        raise ValueError("expected at least one sample")
    for s in X:
        if not isinstance(s, TrainingSample):
            raise TypeError(f"expected TrainingSample, got {type(s).__name__}")
        if len(s.target_observed) != t_obs:
            raise ValueError(f"sample {s.key}: {len(s.target_observed)} observed steps, expected {t_obs}")
        if require_future:
            if s.future_truth is None:
                raise ValueError(f"sample {s.key}: no future_truth")
            if t_pred is not None and len(s.future_truth) != t_pred:
                raise ValueError(f"sample {s.key}: {len(s.future_truth)} future steps, expected {t_pred}")
    return X


class NaviGANPlanner(BaseEstimator):
    """Trainable goal-conditioned path generator for one of the model variants.

    ``fit`` takes a list of :class:`TrainingSample`; ``predict`` returns the
    planned waypoints, shape (n_samples, t_pred, 2), in each sample's
    target-centric frame. ``intention_only=True`` gives the intention-force
    ablation of the same fitted model.
    """

    def __init__(self, variant="NAVIGAN", t_obs=8, t_pred=12, hidden_dim=32, pool_dim=32, noise_dim=8,
                 mlp_dim=64, batch_size=32, epochs=500, learning_rate=1e-3, w_l2=1.0, w_fde=1.0,
                 w_resist=1.0, w_adv=1.0, d_safe=0.5, grad_clip=10.0, dtype="float32", random_state=0):
        self.variant = variant
        self.t_obs = t_obs
        self.t_pred = t_pred
        self.hidden_dim = hidden_dim
        self.pool_dim = pool_dim
        self.noise_dim = noise_dim
        self.mlp_dim = mlp_dim
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.w_l2 = w_l2
        self.w_fde = w_fde
        self.w_resist = w_resist
        self.w_adv = w_adv
        self.d_safe = d_safe
        self.grad_clip = grad_clip
        self.dtype = dtype
        self.random_state = random_state

    def _model_config(self):
        return ModelConfig(self.variant, self.t_obs, self.t_pred, self.hidden_dim, self.pool_dim,
                           self.noise_dim, self.mlp_dim)

    def _train_config(self):
        return TrainConfig(variant=self.variant, batch_size=self.batch_size, epochs=self.epochs,
                           learning_rate=self.learning_rate, seed=self.random_state,
                           grad_clip=self.grad_clip, dtype=self.dtype, model=self._model_config())

    def _weights(self):
        return LossWeights(self.w_l2, self.w_fde, self.w_resist, self.w_adv, self.d_safe)

    def fit(self, X, y=None, log_path=None, checkpoint_dir=None):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        X = check_samples(X, self.t_obs, self.t_pred, require_future=True)
        self.bundle_, self.history_ = train(X, self._train_config(), self._weights(),
                                            log_path=log_path, checkpoint_dir=checkpoint_dir)
        return self

    @classmethod
    def from_bundle(cls, bundle: ModelBundle, **params):
        c = bundle.config
        est = cls(variant=c.variant, t_obs=c.t_obs, t_pred=c.t_pred, hidden_dim=c.hidden_dim,
                  pool_dim=c.pool_dim, noise_dim=c.noise_dim, mlp_dim=c.mlp_dim, **params)
        est.bundle_ = bundle
        est.history_ = []
        return est

    def _noise(self, n):
        dim = self.bundle_.noise_dim
        dtype = next(self.bundle_.generator.parameters()).dtype
        if self.variant in (GOAL_SOCIAL, NAVI_L2) or dim == 0:
            return torch.zeros(n, dim, dtype=dtype)
        rng = torch.Generator().manual_seed(seed_streams(self.random_state)[2])
        return torch.randn(n, dim, generator=rng, dtype=dtype)

    def generate(self, X, noise=None, intention_only=False):
        """Intention path, social forces and waypoints as numpy arrays."""
        check_is_fitted(self, "bundle_")
        X = check_samples(X, self.t_obs)
        batch = collate(X, t_pred=self.t_pred)
        if noise is None:
            noise = self._noise(len(X))
        with torch.no_grad():
            out = generate(self.bundle_.generator, batch, torch.as_tensor(noise), intention_only)
        return {k: getattr(out, k).double().numpy() for k in ("intention_path", "social_forces", "waypoints")}

    def predict(self, X, intention_only=False):
        return self.generate(X, intention_only=intention_only)["waypoints"]

    def score(self, X, y=None):
        """Negative mean ADE against each sample's recorded future."""
        X = check_samples(X, self.t_obs, self.t_pred, require_future=True)
        pred = self.predict(X)
        return -float(np.mean([ade_fde(s.future_truth, p)[0] for s, p in zip(X, pred)]))
