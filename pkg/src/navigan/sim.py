"""Long-term playback navigation in a recorded crowd.

Recorded pedestrians replay their tracks and do not react to the agent.
The agent replans at every step and executes only the first waypoint of
each plan.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
import torch

from .batch import collate
from .bundle import ModelBundle, ModelDimensionMismatch
from .generators import GOAL_SOCIAL, NAVI_L2, generate
from .scene import FrameConfig, Scene, TrainingSample, make_sample, qualifying_starts


class InsufficientHistory(ValueError):
    pass


class SceneGrid:
    """Dense (frame, agent) position table of a scene; NaN where absent."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self.step = scene.frame_step
        self.agents = scene.agent_ids
        self.column = {a: k for k, a in enumerate(self.agents)}
        first = min(int(f[0]) for f, _ in scene.tracks.values())
        last = max(int(f[-1]) for f, _ in scene.tracks.values())
        self.first = first
        self.n_frames = (last - first) // self.step + 1
        self.pos = np.full((self.n_frames, len(self.agents), 2), np.nan)
        for a, (frames, p) in scene.tracks.items():
            self.pos[(frames - first) // self.step, self.column[a]] = p

    def rows(self, first_frame: int, length: int) -> np.ndarray:
        """Positions for ``length`` steps from ``first_frame``: (length, A, 2)."""
        out = np.full((length, len(self.agents), 2), np.nan)
        k0 = (first_frame - self.first) // self.step
        lo, hi = max(k0, 0), min(k0 + length, self.n_frames)
        if lo < hi:
            out[lo - k0:hi - k0] = self.pos[lo:hi]
        return out

    def at(self, frame: int) -> np.ndarray:
        return self.rows(frame, 1)[0]


_GRIDS: dict[int, SceneGrid] = {}


def scene_grid(scene: Scene) -> SceneGrid:
    grid = _GRIDS.get(id(scene))
    if grid is None or grid.scene is not scene:
        grid = _GRIDS[id(scene)] = SceneGrid(scene)
    return grid


@dataclass
class EpisodeSpec:
    scene: Scene
    target_id: int
    start_frame: int           # last observed frame; the agent stands here at step 0
    goal: np.ndarray
    cutoff: int = 60
    arrival_tolerance: float = 0.5
    comfort_distance: float = 0.2
    t_obs: int = 8

    @property
    def key(self) -> str:
        return f"{self.scene.name}:{self.target_id}:{self.start_frame}"

    def recorded_history(self) -> np.ndarray:
        step = self.scene.frame_step
        hist = self.scene.window(self.target_id, self.start_frame - (self.t_obs - 1) * step, self.t_obs)
        if np.isnan(hist).any():
            raise InsufficientHistory(f"{self.key}: target lacks {self.t_obs} observed steps")
        return hist

    def recorded_future(self, steps: int) -> np.ndarray:
        return self.scene.window(self.target_id, self.start_frame + self.scene.frame_step, steps)


@dataclass
class EpisodeResult:
    key: str
    executed: np.ndarray           # (steps_used, 2)
    min_separations: np.ndarray    # (steps_used,), inf when nobody is around
    success: bool
    steps_used: int
    goal: np.ndarray = field(default_factory=lambda: np.zeros(2))
    start: np.ndarray = field(default_factory=lambda: np.zeros(2))
    recorded: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def to_record(self) -> dict:
        return {
            "key": self.key,
            "success": bool(self.success),
            "steps_used": int(self.steps_used),
            "goal": [float(v) for v in self.goal],
            "start": [float(v) for v in self.start],
            "executed": [[float(x), float(y)] for x, y in self.executed],
            "min_separations": [None if math.isinf(d) else float(d) for d in self.min_separations],
            "recorded": [[float(x), float(y)] for x, y in self.recorded],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "EpisodeResult":
        return cls(
            key=rec["key"],
            executed=np.array(rec["executed"], dtype=np.float64).reshape(-1, 2),
            min_separations=np.array([math.inf if d is None else d for d in rec["min_separations"]],
                                     dtype=np.float64),
            success=bool(rec["success"]),
            steps_used=int(rec["steps_used"]),
            goal=np.array(rec["goal"], dtype=np.float64),
            start=np.array(rec["start"], dtype=np.float64),
            recorded=np.array(rec["recorded"], dtype=np.float64).reshape(-1, 2),
        )


def write_results(path, results) -> None:
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")


def read_results(path) -> list[EpisodeResult]:
    with open(path) as fh:
        return [EpisodeResult.from_record(json.loads(line)) for line in fh if line.strip()]


def build_episode_set(scene: Scene, cfg: FrameConfig = FrameConfig(), goal_multiplier=3,
                      cutoff_multiplier=5, arrival_tolerance=0.5, comfort_distance=0.2,
                      stride=1) -> list[EpisodeSpec]:
    """One episode per (agent, start) with ``t_obs`` history and the goal horizon recorded."""
    horizon = goal_multiplier * cfg.t_pred
    step = scene.frame_step
    specs = []
    for agent in scene.agent_ids:
        last_taken = None
        for first in qualifying_starts(scene, agent, cfg.t_obs + horizon):
            if last_taken is not None and first - last_taken < stride * step:
                continue
            last_taken = first
            start = first + (cfg.t_obs - 1) * step
            goal = scene.position_at(agent, start + horizon * step)
            specs.append(EpisodeSpec(scene, agent, start, goal.copy(), cutoff_multiplier * cfg.t_pred,
                                     arrival_tolerance, comfort_distance, cfg.t_obs))
    return specs


@dataclass
class EpisodeState:
    spec: EpisodeSpec
    index: int
    path: list                      # world positions: recorded history then executed
    step: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.path[-1]

    @property
    def frame(self) -> int:
        return self.spec.start_frame + self.step * self.spec.scene.frame_step

    def observation(self) -> TrainingSample:
        """Window ending now: the agent's last ``t_obs`` states plus the replayed crowd."""
        spec = self.spec
        t_obs = spec.t_obs
        grid = scene_grid(spec.scene)
        rows = grid.rows(self.frame - (t_obs - 1) * grid.step, t_obs)
        present = ~np.isnan(rows[..., 0])
        present[:, grid.column[spec.target_id]] = False
        others = {grid.agents[a]: rows[:, a] for a in np.flatnonzero(present.any(axis=0))}
        return make_sample(spec.target_id, np.array(self.path[-t_obs:]), others, spec.goal,
                           scene=spec.scene.name, start_frame=self.frame)


class Policy:
    """Maps active episode states to the next world-frame position of each."""

    def next_positions(self, states: list[EpisodeState]) -> np.ndarray:
        raise NotImplementedError


class HumanPlayback(Policy):
    """Replays the target's own recorded track."""

    def next_positions(self, states):
        out = []
        for s in states:
            p = s.spec.scene.position_at(s.spec.target_id, s.frame + s.spec.scene.frame_step)
            out.append(s.position if p is None else p)
        return np.array(out)


class Stationary(Policy):
    def next_positions(self, states):
        return np.array([s.position for s in states])


class ModelPolicy(Policy):
    """Plans with a trained bundle and takes the first waypoint.

    Each episode owns a noise stream seeded from ``(seed, episode key)`` and
    draws one fluctuation vector per replanning step, so results do not
    depend on which other episodes share the batch.
    """

    def __init__(self, bundle: ModelBundle, intention_only=False, seed=0):
        self.bundle = bundle
        self.intention_only = intention_only
        self.seed = seed
        self._rngs: dict[str, torch.Generator] = {}

    def _noise(self, states):
        dim = self.bundle.noise_dim
        dtype = next(self.bundle.generator.parameters()).dtype
        if self.bundle.config.variant in (GOAL_SOCIAL, NAVI_L2) or dim == 0:
            return torch.zeros(len(states), dim, dtype=dtype)
        rows = []
        for s in states:
            rng = self._rngs.get(s.spec.key)
            if rng is None:
                rng = self._rngs[s.spec.key] = torch.Generator().manual_seed(
                    zlib.crc32(f"{self.seed}:{s.spec.key}".encode()))
            rows.append(torch.randn(dim, generator=rng, dtype=dtype))
        return torch.stack(rows)

    def next_positions(self, states):
        samples = [s.observation() for s in states]
        dtype = next(self.bundle.generator.parameters()).dtype
        batch = collate(samples, t_pred=self.bundle.config.t_pred, dtype=dtype)
        with torch.no_grad():
            out = generate(self.bundle.generator, batch, self._noise(states), self.intention_only)
        first = out.waypoints[:, 0].numpy()
        return np.array([first[k] + samples[k].origin for k in range(len(samples))])


def _min_separation(spec: EpisodeSpec, frame: int, position) -> float:
    grid = scene_grid(spec.scene)
    crowd = np.delete(grid.at(frame), grid.column[spec.target_id], axis=0)
    crowd = crowd[~np.isnan(crowd[:, 0])]
    if len(crowd) == 0:
        return math.inf
    return float(np.min(np.linalg.norm(crowd - position, axis=1)))


def rollout_episodes(policy: Policy, specs: list[EpisodeSpec]) -> list[EpisodeResult]:
    """Roll out all episodes in lock-step, batching policy calls across them."""
    if isinstance(policy, ModelPolicy):
        for spec in specs:
            if spec.t_obs != policy.bundle.config.t_obs:
                raise ModelDimensionMismatch(
                    f"episode uses t_obs={spec.t_obs}, model was built for {policy.bundle.config.t_obs}")
    states = [EpisodeState(spec, k, list(spec.recorded_history())) for k, spec in enumerate(specs)]
    seps: list[list[float]] = [[] for _ in specs]
    done: dict[int, bool] = {}
    for s in states:
        if np.linalg.norm(s.position - s.spec.goal) <= s.spec.arrival_tolerance:
            done[s.index] = True
        elif s.spec.cutoff <= 0:
            done[s.index] = False
    while True:
        active = [s for s in states if s.index not in done]
        if not active:
            break
        moves = policy.next_positions(active)
        for s, p in zip(active, moves):
            s.path.append(np.asarray(p, dtype=np.float64))
            s.step += 1
            seps[s.index].append(_min_separation(s.spec, s.frame, s.position))
            if np.linalg.norm(s.position - s.spec.goal) <= s.spec.arrival_tolerance:
                done[s.index] = True
            elif s.step >= s.spec.cutoff:
                done[s.index] = False
    results = []
    for s in states:
        executed = np.array(s.path[s.spec.t_obs:]).reshape(-1, 2)
        recorded = s.spec.recorded_future(s.step)
        gaps = np.flatnonzero(np.isnan(recorded[:, 0]))
        if len(gaps):
            recorded = recorded[:gaps[0]]
        results.append(EpisodeResult(
            key=s.spec.key, executed=executed, min_separations=np.array(seps[s.index], dtype=np.float64),
            success=done[s.index], steps_used=s.step, goal=s.spec.goal.copy(),
            start=np.asarray(s.path[s.spec.t_obs - 1]).copy(), recorded=recorded,
        ))
    return results


def rollout_episode(bundle_or_policy, spec: EpisodeSpec, seed=0) -> EpisodeResult:
    policy = bundle_or_policy
    if isinstance(policy, ModelBundle):
        policy = ModelPolicy(policy, seed=seed)
    return rollout_episodes(policy, [spec])[0]
