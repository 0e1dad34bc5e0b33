import numpy as np
import pytest
import torch

from navigan.batch import collate
from navigan.bundle import ModelBundle, ModelConfig
from navigan.generators import (
    GOAL_SOCIAL, NAVIGAN, DimensionMismatch, GoalSocialLSTM, NaviGANGenerator, SequenceEncoder,
    build_generator, encode_sequence, generate,
)
from navigan.losses import l2_loss
from navigan.scene import FrameConfig, TrainingSample, extract_windows, make_sample
from navigan.training import TrainConfig, train

from conftest import random_samples
from fdcheck import REL_TOL, check_parameters


def fresh(variant=NAVIGAN, seed=0):
    return ModelBundle.build(ModelConfig(variant), seed=seed).generator


def relabel(sample: TrainingSample, mapping):
    """Same sample with other agents renamed, which changes their packing order."""
    observed = {(mapping.get(a, a)): v for a, v in sample.observed.items()}
    future = {(mapping.get(a, a)): v for a, v in sample.others_future.items()}
    return TrainingSample(sample.target_id, observed, sample.future_truth, sample.goal, sample.origin,
                          future, sample.scene, sample.start_frame)


def noise(n, seed, dim=8):
    return torch.randn(n, dim, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


# -- encoder ------------------------------------------------------------------

def test_zero_encoder_gives_zero_state():
    enc = SequenceEncoder(32).double()
    for p in enc.parameters():
        torch.nn.init.zeros_(p)
    h, c = encode_sequence(enc, np.random.default_rng(0).normal(size=(8, 2)))
    assert (h == 0).all() and (c == 0).all()


@pytest.mark.parametrize("length", [1, 3, 8, 20])
def test_encoder_dimension(length):
    torch.manual_seed(0)
    h, _ = encode_sequence(SequenceEncoder(32).double(), np.zeros((length, 2)))
    assert h.shape == (32,)


def test_history_matters():
    torch.manual_seed(0)
    enc = SequenceEncoder(32).double()
    a = np.cumsum(np.full((8, 2), 0.3), axis=0)
    b = a.copy()
    b[:-1] = b[:-1][::-1]
    assert (a[-1] == b[-1]).all()
    assert not torch.allclose(encode_sequence(enc, a)[0], encode_sequence(enc, b)[0])


def test_masked_steps_keep_state():
    torch.manual_seed(0)
    enc = SequenceEncoder(32).double()
    seq = torch.randn(1, 8, 2, dtype=torch.float64)
    mask = torch.tensor([[False] * 3 + [True] * 5])
    assert torch.equal(enc(seq, mask)[0], enc(seq[:, 3:])[0])


# -- intention and social branches -------------------------------------------

def test_shapes_and_hidden_sizes():
    gen = fresh()
    assert gen.intention.decoder.hidden_size == 34
    assert gen.social.decoder.hidden_size == 32 + 32 + 8
    batch = collate(random_samples(3))
    out = generate(gen, batch, noise(3, 0))
    for t in (out.intention_path, out.social_forces, out.waypoints):
        assert t.shape == (3, 12, 2)


def test_zeroed_spatial_head_holds_position():
    gen = fresh()
    torch.nn.init.zeros_(gen.intention.spatial[-1].weight)
    torch.nn.init.zeros_(gen.intention.spatial[-1].bias)
    batch = collate(random_samples(2))
    path = gen.intention_path(batch)
    # the head predicts displacements, so a zero head stays at the last observed point
    assert torch.equal(path, batch.obs[:, -1:].expand(-1, 12, -1))


def test_zeroed_social_head_gives_zero_forces():
    gen = fresh()
    with torch.no_grad():
        for p in gen.social.social.parameters():
            p.normal_()
    torch.nn.init.zeros_(gen.social.social[-1].weight)
    torch.nn.init.zeros_(gen.social.social[-1].bias)
    out = generate(gen, collate(random_samples(4)), noise(4, 1))
    assert (out.social_forces == 0).all()
    assert torch.equal(out.waypoints, out.intention_path)


def test_composition_identity_bit_exact():
    gen = fresh()
    with torch.no_grad():
        for p in gen.social.social[-1].parameters():
            p.normal_(0, 0.5)
    out = generate(gen, collate(random_samples(5)), noise(5, 2))
    assert (out.social_forces != 0).any()
    assert torch.equal(out.waypoints, out.intention_path + out.social_forces)


def test_noise_shape_checked():
    with pytest.raises(DimensionMismatch):
        fresh()(collate(random_samples(2)), noise(2, 0, dim=3))


def test_deterministic_given_noise():
    gen = fresh()
    batch = collate(random_samples(3))
    a = generate(gen, batch, noise(3, 5)).waypoints
    b = generate(gen, batch, noise(3, 5)).waypoints
    assert torch.equal(a, b)
    assert torch.equal(fresh(seed=1).intention.spatial[0].weight, fresh(seed=1).intention.spatial[0].weight)


@pytest.mark.parametrize("variant", [NAVIGAN, GOAL_SOCIAL])
def test_permuting_others_bit_exact(variant):
    gen = fresh(variant)
    if variant == NAVIGAN:
        with torch.no_grad():
            gen.social.social[-1].weight.normal_()
    samples = random_samples(3, n_others=4)
    permuted = [relabel(s, {100: 203, 101: 201, 102: 200, 103: 202}) for s in samples]
    z = noise(3, 3) if variant == NAVIGAN else None
    a = generate(gen, collate(samples), z)
    b = generate(gen, collate(permuted), z)
    assert torch.equal(a.waypoints, b.waypoints)
    assert torch.equal(a.social_forces, b.social_forces)


def test_world_translation_equivariance():
    gen = fresh()
    with torch.no_grad():
        gen.social.social[-1].weight.normal_()
    rng = np.random.default_rng(0)
    track = np.cumsum(rng.normal(0.4, 0.1, size=(20, 2)), axis=0)
    other = track + [1.0, 0.5]
    shift = np.array([512.3, -97.1])
    outs = []
    for d in (np.zeros(2), shift):
        s = make_sample(1, track[:8] + d, {2: other[:8] + d}, track[-1] + d, track[8:] + d, {2: other[8:] + d})
        wp = generate(gen, collate([s]), noise(1, 0)).waypoints[0].detach().numpy()
        outs.append(wp + s.origin)
    assert np.abs(outs[1] - outs[0] - shift).max() <= 1e-9


def test_goal_social_baseline_shapes_and_no_forces():
    gen = fresh(GOAL_SOCIAL)
    assert isinstance(gen, GoalSocialLSTM) and gen.noise_dim == 0
    out = generate(gen, collate(random_samples(2)))
    assert out.waypoints.shape == (2, 12, 2)
    assert (out.social_forces == 0).all()


def test_build_generator_rejects_unknown():
    with pytest.raises(ValueError):
        build_generator("SOMETHING")


def test_gradient_through_generator():
    gen = fresh()
    with torch.no_grad():
        gen.social.social[-1].weight.normal_(0, 0.3)
    batch = collate(random_samples(3))
    z = noise(3, 4)
    err = check_parameters(lambda: l2_loss(batch.future, gen(batch, z).waypoints).sum(), gen.parameters())
    assert err < REL_TOL


# -- trained behaviour ---------------------------------------------------------

@pytest.fixture(scope="module")
def held_out(toy_test_scenes):
    return extract_windows(toy_test_scenes[0], FrameConfig(), stride=12)


def test_goal_changes_rollout(trained_navigan, held_out):
    bundle, _ = trained_navigan
    samples = held_out[:20]
    # pull every goal halfway back toward the agent
    moved = [TrainingSample(s.target_id, s.observed, s.future_truth,
                            s.target_observed[-1] + 0.5 * (s.goal - s.target_observed[-1]), s.origin,
                            s.others_future, s.scene, s.start_frame) for s in samples]
    with torch.no_grad():
        a = generate(bundle.generator, collate(samples), intention_only=True).waypoints
        b = generate(bundle.generator, collate(moved), intention_only=True).waypoints
    assert float((a - b)[:, -1].norm(dim=-1).mean()) > 0.02


def test_noise_changes_forces(trained_navigan, held_out):
    bundle, _ = trained_navigan
    batch = collate(held_out[:8])
    with torch.no_grad():
        f1 = generate(bundle.generator, batch, noise(8, 1).float()).social_forces
        f2 = generate(bundle.generator, batch, noise(8, 2).float()).social_forces
    assert (f1 - f2).abs().max() > 1e-3


def split_by_crowd(samples, near=1.5, far=4.0):
    """Samples whose nearest other agent at the last observation is within ``near`` / beyond ``far``."""
    close, distant = [], []
    for s in samples:
        last = [s.observed[a][-1] - s.target_observed[-1] for a in s.other_ids]
        last = [np.linalg.norm(v) for v in last if not np.isnan(v).any()]
        d = min(last) if last else np.inf
        if d < near:
            close.append(s)
        elif d > far:
            distant.append(s)
    return close, distant


def social_gap(bundle, samples):
    """Mean distance between full and intention-only plans at zero noise."""
    with torch.no_grad():
        out = generate(bundle.generator, collate(samples, dtype=torch.float32), torch.zeros(len(samples), 8))
    return float((out.waypoints - out.intention_path).norm(dim=-1).mean())


def test_social_branch_matters_more_in_crowds(acceptance_runs, held_out):
    """Full and intention-only plans differ more when someone is close at the last observation."""
    bundle = acceptance_runs[(NAVIGAN, 0)].bundle
    near, far = split_by_crowd(held_out)
    assert near and far
    assert social_gap(bundle, near) > social_gap(bundle, far)


COINCIDE_TOL = 0.1  # metres; indistinguishable at the scale of a crowd plot


def test_plans_coincide_when_crowd_far(acceptance_runs, held_out):
    """With nobody within 4 m the intention-only plan should match the full plan."""
    bundle = acceptance_runs[(NAVIGAN, 0)].bundle
    _, far = split_by_crowd(held_out)
    assert social_gap(bundle, far) < COINCIDE_TOL


def test_goal_social_training_beats_init(toy_windows):
    subset = toy_windows[:256]
    init = ModelBundle.build(ModelConfig(GOAL_SOCIAL), seed=7, dtype=torch.float32)
    batch = collate(subset, dtype=torch.float32)

    def mean_l2(gen):
        with torch.no_grad():
            return float(l2_loss(batch.future, generate(gen, batch).waypoints).mean())

    before = mean_l2(init.generator)
    trained, _ = train(subset, TrainConfig(variant=GOAL_SOCIAL, epochs=5, seed=7))
    after = mean_l2(trained.generator)
    assert np.isfinite(after) and after < before
