"""Synthetic "toy crossing" recordings: two pedestrian streams crossing at right angles.

Pedestrians follow a basic social force model (goal relaxation plus
exponential repulsion from neighbours) integrated at 10 Hz and sampled at
2.5 fps. Output files use the 4-column ``frame id x y`` layout with frame
indices spaced by 10.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

FRAME_SPACING = 10
SUBSTEPS = 4           # integration steps per recorded frame
DT = 0.4 / SUBSTEPS


def simulate_crossing(seed, duration=80.0, spawn_interval=2.2, half_length=14.0, half_width=1.6,
                      speed_mean=1.25, speed_sd=0.12, repulsion=2.1, range_=0.3, radius=0.45,
                      relax=0.5, jitter=0.05):
    """Return rows ``(frame, agent, x, y)`` of one simulated scene."""
    rng = np.random.default_rng(seed)
    # spawn schedule per stream: stream 0 walks +x, stream 1 walks +y
    spawns = []
    for stream in (0, 1):
        t = rng.uniform(0, spawn_interval)
        while t < duration:
            spawns.append((t, stream))
            t += rng.exponential(spawn_interval) + 0.6
    spawns.sort()
    pos, vel, goal, speed, ids, alive, streams = [], [], [], [], [], [], []
    rows = []
    next_id = 1
    n_steps = int(round((duration + 2 * half_length / speed_mean + 10) / DT))
    k_spawn = 0
    for k in range(n_steps):
        t = k * DT
        while k_spawn < len(spawns) and spawns[k_spawn][0] <= t:
            stream = spawns[k_spawn][1]
            lateral = rng.uniform(-half_width, half_width)
            if stream == 0:
                start, end = np.array([-half_length, lateral]), np.array([half_length + 5, lateral])
            else:
                start, end = np.array([lateral, -half_length]), np.array([lateral, half_length + 5])
            v0 = max(0.6, rng.normal(speed_mean, speed_sd))
            pos.append(start)
            vel.append((end - start) / np.linalg.norm(end - start) * v0)
            goal.append(end)
            speed.append(v0)
            ids.append(next_id)
            alive.append(True)
            streams.append(stream)
            next_id += 1
            k_spawn += 1
        if not pos:
            continue
        P = np.array(pos)
        V = np.array(vel)
        live = np.array(alive)
        to_goal = np.array(goal) - P
        direction = to_goal / np.linalg.norm(to_goal, axis=1, keepdims=True)
        force = (direction * np.array(speed)[:, None] - V) / relax
        diff = P[:, None, :] - P[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        dist[:, ~live] = np.inf
        unit = diff / np.where(np.isfinite(dist), dist, 1.0)[..., None]
        push = repulsion * np.exp((radius - dist) / range_)
        push[~np.isfinite(dist)] = 0.0
        force += (push[..., None] * unit).sum(axis=1)
        force += rng.normal(0, jitter, size=force.shape)
        V = V + DT * force
        vmax = 1.3 * np.array(speed)[:, None]
        norm = np.linalg.norm(V, axis=1, keepdims=True)
        V = np.where(norm > vmax, V / norm * vmax, V)
        P = P + DT * V
        for i in range(len(pos)):
            if not alive[i]:
                continue
            pos[i], vel[i] = P[i], V[i]
            if P[i, streams[i]] > half_length:
                alive[i] = False
                continue
            if (k + 1) % SUBSTEPS == 0:
                frame = (k + 1) // SUBSTEPS * FRAME_SPACING
                rows.append((frame, ids[i], float(P[i, 0]), float(P[i, 1])))
    return rows


def write_rows(path, rows) -> None:
    with open(path, "w") as fh:
        for frame, agent, x, y in sorted(rows):
            fh.write(f"{frame}\t{agent}\t{x:.4f}\t{y:.4f}\n")


TOY_SETS = {"train": (11, 12), "test": (21,)}


def generate_toy_dataset(out_dir) -> dict[str, list[Path]]:
    """Write the bundled toy dataset: one sub-directory per split."""
    out_dir = Path(out_dir)
    written = {}
    for split, seeds in TOY_SETS.items():
        (out_dir / split).mkdir(parents=True, exist_ok=True)
        written[split] = []
        for seed in seeds:
            path = out_dir / split / f"crossing_{seed}.txt"
            write_rows(path, simulate_crossing(seed))
            written[split].append(path)
    return written


def toy_dataset_dir() -> Path:
    return Path(resources.files("navigan") / "data" / "toy_crossing")


if __name__ == "__main__":
    import sys

    generate_toy_dataset(sys.argv[1] if len(sys.argv) > 1 else toy_dataset_dir())
