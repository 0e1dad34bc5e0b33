import os

import numpy as np
import pytest
import torch

from navigan.scene import FrameConfig, Scene, extract_windows, load_dataset, make_sample
from navigan.toy import toy_dataset_dir
from navigan.training import LossWeights, TrainConfig, train

torch.set_num_threads(1)


def scene_from_rows(rows, name="synthetic", frame_rate=2.5):
    """rows: iterable of (frame, agent, x, y)."""
    tracks = {}
    for frame, agent, x, y in sorted(rows):
        tracks.setdefault(agent, []).append((frame, x, y))
    return Scene(
        tracks={a: (np.array([r[0] for r in v], dtype=np.int64), np.array([r[1:] for r in v], dtype=float))
                for a, v in tracks.items()},
        frame_rate=frame_rate, name=name,
    )


def straight_walker(agent, first_frame, n, start, velocity, step=10):
    start, velocity = np.asarray(start, float), np.asarray(velocity, float)
    return [(first_frame + k * step, agent, *(start + k * velocity)) for k in range(n)]


def random_samples(n, n_others=3, seed=0, t_obs=8, t_pred=12, partial=True):
    """World-frame random-walk samples with a few partially present neighbours."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        base = rng.normal(0, 5, size=2)
        steps = rng.normal([0.4, 0.1], 0.05, size=(t_obs + t_pred, 2))
        track = base + np.cumsum(steps, axis=0)
        others_obs, others_fut = {}, {}
        for j in range(n_others):
            o = track + rng.normal(0, 2, size=2) + np.cumsum(rng.normal(0, 0.1, size=(t_obs + t_pred, 2)), 0)
            if partial and j == 0:
                o[:3] = np.nan
            others_obs[100 + j] = o[:t_obs]
            others_fut[100 + j] = o[t_obs:]
        out.append(make_sample(i, track[:t_obs], others_obs, track[-1], track[t_obs:], others_fut,
                               scene="rand", start_frame=10 * i))
    return out


@pytest.fixture(scope="session")
def toy_train_scenes():
    return load_dataset(toy_dataset_dir() / "train")


@pytest.fixture(scope="session")
def toy_test_scenes():
    return load_dataset(toy_dataset_dir() / "test")


@pytest.fixture(scope="session")
def toy_windows(toy_train_scenes):
    return [w for sc in toy_train_scenes
            for w in extract_windows(sc, FrameConfig(), stride=8, goal_horizon=(1, 36))]


@pytest.fixture(scope="session")
def trained_navigan(toy_windows):
    """A briefly trained NAVIGAN model shared by behavioural tests."""
    bundle, history = train(toy_windows, TrainConfig(variant="NAVIGAN", epochs=8, seed=0))
    return bundle, history


@pytest.fixture(scope="session")
def acceptance_runs():
    """Pinned toy-scale runs: 3 seeds x (NAVI_L2, NAVIGAN, NAVIGAN_R).

    Set NAVIGAN_RUNS_CACHE to reuse trained models between sessions.
    """
    from acceptance_runs import all_runs

    return all_runs(os.environ.get("NAVIGAN_RUNS_CACHE"))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
