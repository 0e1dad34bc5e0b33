"""Command-line entry point: ``navigan {ingest,train,evaluate,plot}``.

Every command reads one flat YAML config (the bundled ``default.yaml``
unless ``--config`` is given) and applies ``--set key=value`` overrides.
Failures exit nonzero with a single ``error:`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .bundle import ModelBundle, ModelConfig, ModelDimensionMismatch
from .metrics import EmptySet, append_ledger, evaluate_episodes
from .scene import FrameConfig, SceneError, WindowExtractor, load_dataset, read_shard, write_shard
from .sim import (HumanPlayback, ModelPolicy, Stationary, build_episode_set, read_results,
                  rollout_episodes, write_results)
from .toy import toy_dataset_dir
from .training import DivergenceDetected, LossWeights, TrainConfig, train

log = logging.getLogger("navigan")

EXIT_ERROR = 2
EXIT_DIVERGED = 3


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = (resources.files("navigan") / "data" / "default.yaml").read_text()
    return yaml.safe_load(text)


def load_config(path=None, overrides=()) -> dict:
    cfg = default_config()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        user = yaml.safe_load(path.read_text()) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: expected a mapping of flat keys")
        _merge(cfg, user, str(path))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        _merge(cfg, {key.strip(): yaml.safe_load(value)}, "--set")
    for key in ("goal_multiplier", "cutoff_multiplier"):
        if not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive, got {cfg[key]}")
    return cfg


def _merge(cfg, new, origin):
    for key, value in new.items():
        if key not in cfg:
            raise ConfigError(f"{origin}: unknown config key {key!r}")
        cfg[key] = value


def resolve_data(spec: str) -> Path:
    if spec.startswith("toy:"):
        path = toy_dataset_dir() / spec[4:]
    else:
        path = Path(spec)
    if not path.exists():
        raise ConfigError(f"dataset path does not exist: {spec}")
    return path


def frame_config(cfg) -> FrameConfig:
    return FrameConfig(cfg["t_obs"], cfg["t_pred"])


def goal_horizon(cfg):
    lo, hi = cfg["goal_horizon_min"], cfg["goal_horizon_max"]
    return None if (lo, hi) == (0, 0) else (lo, hi)


def windows(cfg, scenes):
    ext = WindowExtractor(cfg["t_obs"], cfg["t_pred"], cfg["stride"], goal_horizon(cfg), cfg["seed"])
    return ext.fit_transform(scenes)


def episodes(cfg, scenes):
    fc = frame_config(cfg)
    out = []
    for scene in scenes:
        out.extend(build_episode_set(scene, fc, cfg["goal_multiplier"], cfg["cutoff_multiplier"],
                                     cfg["arrival_tolerance"], cfg["comfort_distance"],
                                     stride=cfg["episode_stride"]))
    return out


def out_dir(cfg) -> Path:
    path = Path(cfg["out_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def train_config(cfg) -> TrainConfig:
    model = ModelConfig(cfg["variant"], cfg["t_obs"], cfg["t_pred"], cfg["hidden_dim"], cfg["pool_dim"],
                        cfg["noise_dim"], cfg["mlp_dim"])
    return TrainConfig(variant=cfg["variant"], batch_size=cfg["batch_size"], epochs=cfg["epochs"],
                       learning_rate=cfg["learning_rate"], seed=cfg["seed"], grad_clip=cfg["grad_clip"],
                       checkpoint_every=cfg["checkpoint_every"], dtype=cfg["dtype"], model=model)


def loss_weights(cfg) -> LossWeights:
    return LossWeights(cfg["w_l2"], cfg["w_fde"], cfg["w_resist"], cfg["w_adv"], cfg["d_safe"])


# -- commands -----------------------------------------------------------------

def cmd_ingest(cfg) -> dict:
    """Write ``train.jsonl`` / ``test.jsonl`` shards and ``summary.json``."""
    out = out_dir(cfg)
    fc = frame_config(cfg)
    summary = {"t_obs": fc.t_obs, "t_pred": fc.t_pred, "sets": {}}
    for split in ("train", "test"):
        scenes = load_dataset(resolve_data(cfg[f"{split}_data"]), cfg["frame_rate"])
        samples = windows(cfg, scenes)
        write_shard(out / f"{split}.jsonl", samples, fc, meta={"split": split, "seed": cfg["seed"]})
        for scene in scenes:
            summary["sets"][f"{split}/{scene.name}"] = {
                "agents": len(scene.agent_ids),
                "samples": sum(s.scene == scene.name for s in samples),
                "episodes": len(episodes(cfg, [scene])),
            }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_train(cfg, shard=None) -> Path:
    """Train the configured variant; writes ``model.safetensors`` and ``train_log.jsonl``."""
    out = out_dir(cfg)
    if shard is not None:
        fc, samples = read_shard(shard)
        if fc != frame_config(cfg):
            raise ConfigError(f"shard windows {fc} do not match the config")
    else:
        samples = windows(cfg, load_dataset(resolve_data(cfg["train_data"]), cfg["frame_rate"]))
    ckpt_dir = out / "checkpoints" if cfg["checkpoint_every"] else None
    if ckpt_dir:
        ckpt_dir.mkdir(exist_ok=True)
    bundle, _ = train(samples, train_config(cfg), loss_weights(cfg), log_path=out / "train_log.jsonl",
                      checkpoint_dir=ckpt_dir)
    path = out / "model.safetensors"
    bundle.save(path)
    return path


POLICIES = ("model", "intention", "human", "stationary")


def cmd_evaluate(cfg, checkpoint=None, policy="model", dump_paths=None, ledger=None, label=None):
    """Roll out the held-out episode set and append the metrics to the results ledger."""
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}")
    scenes = load_dataset(resolve_data(cfg["test_data"]), cfg["frame_rate"])
    specs = episodes(cfg, scenes)
    if not specs:
        raise EmptySet("test data yields no playback episodes")
    if policy == "human":
        pol, variant = HumanPlayback(), "human"
    elif policy == "stationary":
        pol, variant = Stationary(), "stationary"
    else:
        if checkpoint is None:
            raise ConfigError(f"policy {policy!r} needs --checkpoint")
        bundle = ModelBundle.load(checkpoint, expect={"t_obs": cfg["t_obs"], "t_pred": cfg["t_pred"]})
        pol = ModelPolicy(bundle, intention_only=policy == "intention", seed=cfg["seed"])
        variant = bundle.config.variant + ("+intention_only" if policy == "intention" else "")
    results = rollout_episodes(pol, specs)
    report = evaluate_episodes(results, cfg["comfort_distance"])
    if dump_paths:
        write_results(dump_paths, results)
    ledger = Path(ledger) if ledger else out_dir(cfg) / "results.jsonl"
    append_ledger(ledger, report, variant=label or variant, split=cfg["test_data"], seed=cfg["seed"])
    return report


def cmd_plot(cfg, dumps, episode, out, step=None, titles=None) -> Path:
    """One panel per episode dump, all showing the same episode at the same step."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .sim import scene_grid

    runs = []
    for path in dumps:
        found = [r for r in read_results(path) if r.key == episode]
        if not found:
            raise KeyError(f"episode {episode!r} not in {path}")
        runs.append(found[0])
    scene_name, target, start = episode.rsplit(":", 2)
    scenes = {s.name: s for s in load_dataset(resolve_data(cfg["test_data"]), cfg["frame_rate"])}
    if scene_name not in scenes:
        raise KeyError(f"scene {scene_name!r} not found in {cfg['test_data']}")
    grid = scene_grid(scenes[scene_name])
    target, start = int(target), int(start)
    fig, axes = plt.subplots(1, len(runs), figsize=(5 * len(runs), 5), squeeze=False)
    for k, (ax, res) in enumerate(zip(axes[0], runs)):
        t = res.steps_used if step is None else min(step, res.steps_used)
        frame = start + t * grid.step
        trail = grid.rows(frame - 2 * grid.step, 3)
        for a in range(trail.shape[1]):
            if grid.agents[a] == target or np.isnan(trail[-1, a, 0]):
                continue
            ax.plot(trail[:, a, 0], trail[:, a, 1], ":", color="0.5")
            ax.plot(trail[-1, a, 0], trail[-1, a, 1], "o", color="0.35", ms=7)
        path = np.vstack([res.start[None], res.executed[:t]])
        ax.plot(path[:, 0], path[:, 1], "-", color="tab:red", lw=2)
        ax.plot(path[-1, 0], path[-1, 1], "o", color="tab:red", ms=9)
        if len(res.recorded):
            rec = np.vstack([res.start[None], res.recorded])
            ax.plot(rec[:, 0], rec[:, 1], "--", color="tab:blue", lw=1)
        ax.plot(*res.goal, "*", color="gold", ms=16, mec="k")
        ax.set_aspect("equal")
        ax.set_title(titles[k] if titles else Path(dumps[k]).stem)
    fig.suptitle(f"{episode}  step {t}")
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return Path(out)


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navigan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file (defaults to the bundled one)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        return p

    common(sub.add_parser("ingest", help="window datasets into sample shards"))
    p = common(sub.add_parser("train", help="train a model variant"))
    p.add_argument("--shard", help="train from an ingested shard instead of raw data")
    p = common(sub.add_parser("evaluate", help="playback navigation metrics"))
    p.add_argument("--checkpoint")
    p.add_argument("--policy", choices=POLICIES, default="model")
    p.add_argument("--human-playback", action="store_true", help="shorthand for --policy human")
    p.add_argument("--dump-paths", metavar="FILE", help="write per-episode executed paths")
    p.add_argument("--ledger", metavar="FILE", help="results ledger (default OUT_DIR/results.jsonl)")
    p.add_argument("--label", help="ledger label instead of the variant name")
    p = common(sub.add_parser("plot", help="render one episode from one or more path dumps"))
    p.add_argument("dumps", nargs="+")
    p.add_argument("--episode", required=True, help="episode key scene:agent:frame")
    p.add_argument("--step", type=int)
    p.add_argument("--titles", nargs="+")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command == "ingest":
            print(json.dumps(cmd_ingest(cfg), sort_keys=True))
        elif args.command == "train":
            print(cmd_train(cfg, args.shard))
        elif args.command == "evaluate":
            policy = "human" if args.human_playback else args.policy
            report = cmd_evaluate(cfg, args.checkpoint, policy, args.dump_paths, args.ledger, args.label)
            print(report.to_json())
        elif args.command == "plot":
            print(cmd_plot(cfg, args.dumps, args.episode, args.out, args.step, args.titles))
    except DivergenceDetected as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, SceneError, ModelDimensionMismatch, EmptySet, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
