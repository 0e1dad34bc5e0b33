"""Pinned toy-scale training runs shared by the acceptance and training tests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from navigan.batch import collate
from navigan.bundle import ModelBundle
from navigan.cli import episodes, load_config, loss_weights, resolve_data, train_config, windows
from navigan.generators import NAVI_L2, NAVIGAN, NAVIGAN_R
from navigan.losses import resistance_loss
from navigan.metrics import evaluate_episodes
from navigan.scene import FrameConfig, extract_windows, load_dataset
from navigan.sim import ModelPolicy, rollout_episodes
from navigan.training import train

SEEDS = (0, 1, 2)
VARIANTS = (NAVI_L2, NAVIGAN, NAVIGAN_R)

# every setting not listed comes from the bundled default config
OVERRIDES = {
    "stride": 8,
    "episode_stride": 1,
    "epochs": 40,
    "dtype": "float32",
}


@dataclass
class Run:
    variant: str
    seed: int
    history: list
    report: dict
    held_out_resist: float
    bundle: ModelBundle


def config(seed):
    cfg = load_config()
    cfg.update(OVERRIDES, seed=seed)
    return cfg


def held_out_resistance(bundle, samples, d_safe=0.5):
    """Mean resistance loss of the full model's plans on held-out windows, zero noise."""
    dtype = next(bundle.generator.parameters()).dtype
    batch = collate(samples, dtype=dtype)
    with torch.no_grad():
        wp = bundle.generator(batch, torch.zeros(len(samples), bundle.noise_dim, dtype=dtype)).waypoints
        return float(resistance_loss(wp, batch.others_fut, d_safe, mask=batch.others_fut_mask).mean())


def run_one(variant, seed, cache_dir=None) -> Run:
    cfg = config(seed)
    cfg["variant"] = variant
    cache = Path(cache_dir) / f"{variant}_{seed}" if cache_dir else None
    if cache and (cache / "model.safetensors").exists():
        bundle = ModelBundle.load(cache / "model.safetensors")
        history = [json.loads(line) for line in (cache / "train_log.jsonl").read_text().splitlines()]
    else:
        samples = windows(cfg, load_dataset(resolve_data(cfg["train_data"])))
        bundle, history = train(samples, train_config(cfg), loss_weights(cfg))
        if cache:
            cache.mkdir(parents=True, exist_ok=True)
            bundle.save(cache / "model.safetensors")
            (cache / "train_log.jsonl").write_text("".join(json.dumps(r) + "\n" for r in history))
    test_scenes = load_dataset(resolve_data(cfg["test_data"]))
    results = rollout_episodes(ModelPolicy(bundle, seed=seed), episodes(cfg, test_scenes))
    report = evaluate_episodes(results, cfg["comfort_distance"])
    held = [w for sc in test_scenes for w in extract_windows(sc, FrameConfig(cfg["t_obs"], cfg["t_pred"]),
                                                            stride=cfg["stride"])]
    return Run(variant, seed, history, report.__dict__, held_out_resistance(bundle, held, cfg["d_safe"]), bundle)


def all_runs(cache_dir=None) -> dict[tuple[str, int], Run]:
    return {(v, s): run_one(v, s, cache_dir) for s in SEEDS for v in VARIANTS}


if __name__ == "__main__":
    import sys

    torch.set_num_threads(1)
    runs = all_runs(sys.argv[1] if len(sys.argv) > 1 else None)
    for (v, s), r in runs.items():
        print(v, s, r.history[0]["l2"], r.history[-1]["l2"], r.report, r.held_out_resist)
