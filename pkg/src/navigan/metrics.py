"""Episode-level navigation metrics: social score, comfort rate, arrival rate, ADE/FDE."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .losses import LengthMismatch


class EmptySet(ValueError):
    pass


COMFORT_DISTANCE = 0.2


def step_reward(d_t: float, reached_goal: bool) -> float:
    """Per-step reward; branches are checked in this order."""
    if d_t <= 0:
        return -0.25
    if d_t < 0.2:
        return -0.1 + d_t / 2
    if reached_goal:
        return 1.0
    return 0.0


def episode_rewards(ep) -> list[float]:
    """Rewards of every executed step; the goal bonus goes to the terminating step.

    An episode that starts inside the arrival tolerance is scored as one
    terminal step with nobody measured nearby.
    """
    if ep.steps_used == 0:
        return [step_reward(math.inf, ep.success)]
    last = ep.steps_used - 1
    return [step_reward(float(d), ep.success and k == last) for k, d in enumerate(ep.min_separations)]


def episode_score(ep) -> float:
    return float(sum(episode_rewards(ep)))


def _require(episodes):
    episodes = list(episodes)
    if not episodes:
        raise EmptySet("metric needs at least one episode")
    return episodes


def social_score(episodes) -> float:
    episodes = _require(episodes)
    return float(np.mean([episode_score(ep) for ep in episodes]))


def violates_comfort(ep, comfort_distance=COMFORT_DISTANCE) -> bool:
    return bool(np.any(np.asarray(ep.min_separations) < comfort_distance))


def comfort_rate(episodes, comfort_distance=COMFORT_DISTANCE) -> float:
    """Fraction of episodes that never come closer than ``comfort_distance``."""
    episodes = _require(episodes)
    return sum(not violates_comfort(ep, comfort_distance) for ep in episodes) / len(episodes)


def arrival_rate(episodes) -> float:
    episodes = _require(episodes)
    return sum(bool(ep.success) for ep in episodes) / len(episodes)


def ade_fde(truth, pred) -> tuple[float, float]:
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth shape {truth.shape} != prediction shape {pred.shape}")
    if len(truth) == 0:
        raise LengthMismatch("empty sequences")
    dist = np.linalg.norm(truth - pred, axis=-1)
    return float(dist.mean()), float(dist[-1])


def episode_ade_fde(ep) -> tuple[float, float] | None:
    """Executed path against the recorded one over the steps both cover."""
    n = min(len(ep.executed), len(ep.recorded))
    if n == 0:
        return None
    return ade_fde(ep.recorded[:n], ep.executed[:n])


@dataclass
class MetricsReport:
    social_score: float
    comfort_rate: float
    arrival_rate: float
    ade: float
    fde: float
    n_episodes: int

    def to_json(self, **keys) -> str:
        return json.dumps({**keys, **asdict(self)}, sort_keys=True)


def evaluate_episodes(episodes, comfort_distance=COMFORT_DISTANCE) -> MetricsReport:
    episodes = _require(episodes)
    errors = [e for e in (episode_ade_fde(ep) for ep in episodes) if e is not None]
    ade = float(np.mean([e[0] for e in errors])) if errors else 0.0
    fde = float(np.mean([e[1] for e in errors])) if errors else 0.0
    return MetricsReport(
        social_score=social_score(episodes),
        comfort_rate=comfort_rate(episodes, comfort_distance),
        arrival_rate=arrival_rate(episodes),
        ade=ade, fde=fde, n_episodes=len(episodes),
    )


def append_ledger(path, report: MetricsReport, variant: str, split: str, seed: int, **extra) -> None:
    """Append one JSON line keyed by (variant, split, seed)."""
    with open(path, "a") as fh:
        fh.write(report.to_json(variant=variant, split=split, seed=seed, **extra) + "\n")
