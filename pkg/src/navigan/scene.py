"""Trajectory recordings, training windows and target-centric frames.

Recordings use the 4-column whitespace layout common to the ETH/UCY
preprocessed files: ``frame agent_id x y`` per line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

SHARD_FORMAT = "navigan-samples"
SHARD_VERSION = 1


class SceneError(ValueError):
    pass


class MalformedLine(SceneError):
    pass


class DuplicateObservation(SceneError):
    pass


class EmptyScene(SceneError):
    pass


@dataclass(frozen=True)
class FrameConfig:
    t_obs: int = 8
    t_pred: int = 12

    def __post_init__(self):
        if self.t_obs < 2:
            raise ValueError(f"t_obs must be >= 2, got {self.t_obs}")
        if self.t_pred < 1:
            raise ValueError(f"t_pred must be >= 1, got {self.t_pred}")

    @property
    def t_end(self) -> int:
        return self.t_obs + self.t_pred


@dataclass
class Scene:
    """A recorded crowd.

    ``tracks`` maps agent id to ``(frames, positions)`` where ``frames`` is a
    strictly increasing int array of shape (n,) and ``positions`` is (n, 2).
    """

    tracks: dict[int, tuple[np.ndarray, np.ndarray]]
    frame_rate: float = 2.5
    name: str = ""
    frame_step: int = field(default=0)

    def __post_init__(self):
        for agent, (frames, pos) in self.tracks.items():
            if pos.shape != (len(frames), 2):
                raise SceneError(f"agent {agent}: positions must be (n, 2)")
            if len(frames) > 1 and np.any(np.diff(frames) <= 0):
                raise SceneError(f"agent {agent}: frames not strictly increasing")
            if not np.all(np.isfinite(pos)):
                raise SceneError(f"agent {agent}: non-finite position")
        if not self.frame_step:
            self.frame_step = infer_frame_step(self.tracks)

    @property
    def agent_ids(self) -> list[int]:
        return sorted(self.tracks)

    def position_at(self, agent: int, frame: int) -> np.ndarray | None:
        frames, pos = self.tracks[agent]
        k = np.searchsorted(frames, frame)
        if k < len(frames) and frames[k] == frame:
            return pos[k]
        return None

    def positions_at(self, frame: int) -> dict[int, np.ndarray]:
        out = {}
        for agent in self.agent_ids:
            p = self.position_at(agent, frame)
            if p is not None:
                out[agent] = p
        return out

    def window(self, agent: int, first_frame: int, length: int) -> np.ndarray:
        """Positions of ``agent`` over ``length`` steps; NaN where absent."""
        frames, pos = self.tracks[agent]
        wanted = first_frame + self.frame_step * np.arange(length)
        out = np.full((length, 2), np.nan)
        k = np.searchsorted(frames, wanted)
        k = np.minimum(k, len(frames) - 1)
        hit = frames[k] == wanted
        out[hit] = pos[k[hit]]
        return out


def infer_frame_step(tracks) -> int:
    """Greatest common divisor of all frame gaps (1 if there are none)."""
    frames = np.unique(np.concatenate([f for f, _ in tracks.values()])) if tracks else []
    gaps = np.diff(frames).astype(np.int64)
    if len(gaps) == 0:
        return 1
    return int(reduce(math.gcd, gaps.tolist()))


def _as_int(token: str, lineno: int, path) -> int:
    value = float(token)
    if not value.is_integer():
        raise MalformedLine(f"{path}:{lineno}: expected integral value, got {token!r}")
    return int(value)


def parse_trajectory_file(path, frame_rate: float = 2.5, name: str | None = None) -> Scene:
    path = Path(path)
    rows: dict[int, dict[int, tuple[float, float]]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise MalformedLine(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                frame = _as_int(parts[0], lineno, path)
                agent = _as_int(parts[1], lineno, path)
                x, y = float(parts[2]), float(parts[3])
            except ValueError as exc:
                if isinstance(exc, MalformedLine):
                    raise
                raise MalformedLine(f"{path}:{lineno}: non-numeric field in {line.strip()!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise MalformedLine(f"{path}:{lineno}: non-finite coordinate")
            track = rows.setdefault(agent, {})
            if frame in track:
                raise DuplicateObservation(f"{path}:{lineno}: agent {agent} already observed at frame {frame}")
            track[frame] = (x, y)
    if not rows:
        raise EmptyScene(f"{path}: no observations")
    tracks = {}
    for agent, obs in rows.items():
        frames = np.array(sorted(obs), dtype=np.int64)
        pos = np.array([obs[f] for f in frames], dtype=np.float64)
        tracks[agent] = (frames, pos)
    return Scene(tracks=tracks, frame_rate=frame_rate, name=name if name is not None else path.stem)


def load_dataset(path, frame_rate: float = 2.5) -> list[Scene]:
    """Parse one file, or every ``*.txt`` file of a directory (sorted)."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.txt"))
        if not files:
            raise EmptyScene(f"{path}: no .txt trajectory files")
        return [parse_trajectory_file(f, frame_rate) for f in files]
    return [parse_trajectory_file(path, frame_rate)]


def to_target_frame(points, origin) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) - np.asarray(origin, dtype=np.float64)


def from_target_frame(points, origin) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) + np.asarray(origin, dtype=np.float64)


@dataclass
class TrainingSample:
    """One window, expressed in the target-centric frame.

    Sequences of other agents carry NaN rows at steps where the agent is
    absent. ``future_truth`` is None for inference-only windows.
    """

    target_id: int
    observed: dict[int, np.ndarray]
    future_truth: np.ndarray | None
    goal: np.ndarray
    origin: np.ndarray
    others_future: dict[int, np.ndarray] = field(default_factory=dict)
    scene: str = ""
    start_frame: int = 0

    @property
    def target_observed(self) -> np.ndarray:
        return self.observed[self.target_id]

    @property
    def other_ids(self) -> list[int]:
        return sorted(a for a in self.observed if a != self.target_id)

    @property
    def key(self) -> str:
        return f"{self.scene}:{self.target_id}:{self.start_frame}"


def make_sample(target_id, target_obs, others_obs, goal, future_truth=None,
                others_future=None, scene="", start_frame=0) -> TrainingSample:
    """Build a sample from world-frame arrays; the origin is the first observed point."""
    target_obs = np.asarray(target_obs, dtype=np.float64)
    origin = target_obs[0].copy()
    observed = {target_id: to_target_frame(target_obs, origin)}
    for agent, seq in others_obs.items():
        observed[agent] = to_target_frame(seq, origin)
    return TrainingSample(
        target_id=target_id,
        observed=observed,
        future_truth=None if future_truth is None else to_target_frame(future_truth, origin),
        goal=to_target_frame(goal, origin),
        origin=origin,
        others_future={a: to_target_frame(s, origin) for a, s in (others_future or {}).items()},
        scene=scene,
        start_frame=int(start_frame),
    )


def qualifying_starts(scene: Scene, agent: int, length: int) -> list[int]:
    """First frames of every fully-present run of ``length`` consecutive steps."""
    frames, _ = scene.tracks[agent]
    if len(frames) < length:
        return []
    return [int(f) for f in frames[_run_lengths(scene, agent) >= length]]


def _run_lengths(scene: Scene, agent: int) -> np.ndarray:
    frames, _ = scene.tracks[agent]
    run = np.ones(len(frames), dtype=np.int64)
    for k in range(len(frames) - 2, -1, -1):
        if frames[k + 1] - frames[k] == scene.frame_step:
            run[k] = run[k + 1] + 1
    return run


def extract_windows(scene: Scene, cfg: FrameConfig = FrameConfig(), stride: int = 1,
                    goal_horizon: tuple[int, int] | None = None, seed: int = 0) -> list[TrainingSample]:
    """Every (target, start) window where the target is present for ``t_end`` steps.

    By default the goal is the target's last future position. With
    ``goal_horizon=(lo, hi)`` the goal is instead the recorded position a
    random ``lo..hi`` steps after the last observation, drawn among the
    horizons the track actually covers.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rng = np.random.default_rng(seed) if goal_horizon else None
    step = scene.frame_step
    samples = []
    for agent in scene.agent_ids:
        starts = qualifying_starts(scene, agent, cfg.t_end)
        if not starts:
            continue
        frames, positions = scene.tracks[agent]
        run = _run_lengths(scene, agent) if goal_horizon else None
        last_taken = None
        for start in starts:
            if last_taken is not None and (start - last_taken) < stride * step:
                continue
            last_taken = start
            sample = _window_sample(scene, agent, start, cfg)
            if goal_horizon:
                k = int(np.searchsorted(frames, start))
                covered = int(run[k]) - cfg.t_obs
                lo = max(1, goal_horizon[0])
                hi = max(lo, min(goal_horizon[1], covered))
                h = int(rng.integers(lo, hi + 1))
                sample.goal = positions[k + cfg.t_obs - 1 + h] - sample.origin
            samples.append(sample)
    return samples


def _window_sample(scene: Scene, agent: int, start: int, cfg: FrameConfig) -> TrainingSample:
    step = scene.frame_step
    full = scene.window(agent, start, cfg.t_end)
    obs_frames = start + step * np.arange(cfg.t_obs)
    others_obs, others_fut = {}, {}
    for other in scene.agent_ids:
        if other == agent:
            continue
        frames, _ = scene.tracks[other]
        if frames[-1] < obs_frames[0] or frames[0] > obs_frames[-1]:
            continue
        seq = scene.window(other, start, cfg.t_end)
        if np.all(np.isnan(seq[: cfg.t_obs, 0])):
            continue
        others_obs[other] = seq[: cfg.t_obs]
        others_fut[other] = seq[cfg.t_obs:]
    return make_sample(
        agent, full[: cfg.t_obs], others_obs, goal=full[-1], future_truth=full[cfg.t_obs:],
        others_future=others_fut, scene=scene.name, start_frame=start,
    )


class WindowExtractor(TransformerMixin, BaseEstimator):
    """Transformer turning a list of scenes into a flat list of samples."""

    def __init__(self, t_obs=8, t_pred=12, stride=1, goal_horizon=None, random_state=0):
        self.t_obs = t_obs
        self.t_pred = t_pred
        self.stride = stride
        self.goal_horizon = goal_horizon
        self.random_state = random_state

    def fit(self, scenes, y=None):
        self.frame_config_ = FrameConfig(self.t_obs, self.t_pred)
        return self

    def transform(self, scenes):
        check_is_fitted(self)
        out = []
        for k, scene in enumerate(scenes):
            out.extend(extract_windows(scene, self.frame_config_, self.stride, self.goal_horizon,
                                       seed=self.random_state + k))
        return out


# -- shards -----------------------------------------------------------------

def _encode_seq(arr):
    return [[None if math.isnan(v) else float(v) for v in row] for row in np.asarray(arr)]


def _decode_seq(rows):
    return np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=np.float64).reshape(-1, 2)


def sample_to_record(s: TrainingSample) -> dict:
    return {
        "scene": s.scene,
        "start_frame": s.start_frame,
        "target_id": s.target_id,
        "origin": [float(v) for v in s.origin],
        "goal": [float(v) for v in s.goal],
        "future_truth": None if s.future_truth is None else _encode_seq(s.future_truth),
        "observed": {str(a): _encode_seq(s.observed[a]) for a in sorted(s.observed)},
        "others_future": {str(a): _encode_seq(s.others_future[a]) for a in sorted(s.others_future)},
    }


def record_to_sample(rec: dict) -> TrainingSample:
    return TrainingSample(
        target_id=int(rec["target_id"]),
        observed={int(a): _decode_seq(v) for a, v in rec["observed"].items()},
        future_truth=None if rec["future_truth"] is None else _decode_seq(rec["future_truth"]),
        goal=np.array(rec["goal"], dtype=np.float64),
        origin=np.array(rec["origin"], dtype=np.float64),
        others_future={int(a): _decode_seq(v) for a, v in rec["others_future"].items()},
        scene=rec["scene"],
        start_frame=int(rec["start_frame"]),
    )


def write_shard(path, samples, cfg: FrameConfig, meta: dict | None = None) -> None:
    """Line-delimited JSON: a header line, then one sample per line."""
    header = {"format": SHARD_FORMAT, "version": SHARD_VERSION,
              "t_obs": cfg.t_obs, "t_pred": cfg.t_pred, "n_samples": len(samples)}
    if meta:
        header["meta"] = meta
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in samples:
            fh.write(json.dumps(sample_to_record(s), sort_keys=True) + "\n")


def read_shard(path) -> tuple[FrameConfig, list[TrainingSample]]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != SHARD_FORMAT:
            raise SceneError(f"{path}: not a sample shard")
        if header.get("version") != SHARD_VERSION:
            raise SceneError(f"{path}: unsupported shard version {header.get('version')}")
        samples = [record_to_sample(json.loads(line)) for line in fh if line.strip()]
    return FrameConfig(header["t_obs"], header["t_pred"]), samples
