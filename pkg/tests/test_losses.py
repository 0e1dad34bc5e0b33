import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from navigan.losses import LengthMismatch, adversarial_losses, fde_loss, l2_loss, resistance_loss, safe_norm

finite = st.floats(-100, 100, allow_nan=False)


def test_l2_oracles():
    assert l2_loss([[0.0, 0.0]], [[0.0, 0.0]]).item() == 0.0
    assert l2_loss([[0.0, 0.0]], [[3.0, 4.0]]).item() == pytest.approx(5.0, abs=1e-12)


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=12), st.integers(0, 1000))
def test_l2_homogeneous(truth, seed):
    truth = np.array(truth)
    pred = truth + np.random.default_rng(seed).normal(size=truth.shape)
    one = l2_loss(truth, pred).item()
    two = l2_loss(truth, truth + 2 * (pred - truth)).item()
    assert two == pytest.approx(2 * one, rel=1e-9, abs=1e-12)


def test_l2_length_mismatch():
    with pytest.raises(LengthMismatch):
        l2_loss(np.zeros((3, 2)), np.zeros((4, 2)))


def test_fde_oracles():
    assert fde_loss([1.0, 2.0], [1.0, 2.0]).item() == 0.0
    assert fde_loss([0.0, 0.0], [1.0, 0.0]).item() == 1.0


@given(finite, finite, finite, finite, finite, finite)
def test_fde_translation_invariant(ax, ay, bx, by, dx, dy):
    a = fde_loss([ax, ay], [bx, by]).item()
    b = fde_loss([ax + dx, ay + dy], [bx + dx, by + dy]).item()
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


def test_resistance_zero_when_far():
    wp = np.zeros((3, 2))
    others = np.full((2, 3, 2), 0.5)
    others[..., 1] = 0.0
    assert resistance_loss(wp, others, 0.5).item() == 0.0


def test_resistance_single_pair():
    wp = np.zeros((1, 2))
    others = np.array([[[0.3, 0.0]]])
    assert resistance_loss(wp, others, 0.5).item() == pytest.approx(0.2, abs=1e-12)


def test_resistance_two_pairs():
    wp = np.zeros((2, 2))
    others = np.array([[[0.3, 0.0], [5.0, 5.0]], [[9.0, 9.0], [0.0, 0.4]]])
    assert resistance_loss(wp, others, 0.5).item() == pytest.approx(math.sqrt(0.2**2 + 0.1**2), abs=1e-12)
    assert resistance_loss(wp, others, 0.5).item() == pytest.approx(0.2236, abs=1e-4)


def test_resistance_ignores_absent_agents():
    wp = np.zeros((2, 2))
    others = np.array([[[0.3, 0.0], [np.nan, np.nan]]])
    assert resistance_loss(wp, others, 0.5).item() == pytest.approx(0.2, abs=1e-12)


@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=3), st.integers(0, 1000))
def test_resistance_zero_iff_no_close_pair(points, seed):
    wp = np.array(points)
    others = wp[None] + np.random.default_rng(seed).normal(0, 0.6, size=(4, 3, 2))
    dist = np.linalg.norm(others - wp[None], axis=-1)
    loss = resistance_loss(wp, others, 0.5).item()
    assert (loss == 0.0) == bool((dist >= 0.5).all())


def test_resistance_gradient_points_away():
    wp = torch.zeros(1, 2, dtype=torch.float64, requires_grad=True)
    resistance_loss(wp, torch.tensor([[[0.3, 0.0]]], dtype=torch.float64)).backward()
    assert wp.grad[0, 0] > 0  # descending moves the waypoint toward -x, away from the neighbour


def test_adversarial_at_zero():
    d, g = adversarial_losses(0.0, 0.0)
    assert d.item() == pytest.approx(2 * math.log(2), abs=1e-15)
    assert g.item() == pytest.approx(math.log(2), abs=1e-15)


def test_adversarial_perfect_discriminator_limit():
    d, _ = adversarial_losses(50.0, -50.0)
    assert d.item() < 1e-20


def test_generator_loss_monotone():
    z = torch.linspace(-30, 30, 601, dtype=torch.float64)
    _, g = adversarial_losses(torch.zeros_like(z), z)
    assert (g[1:] < g[:-1]).all()


def test_safe_norm_gradient_at_zero():
    x = torch.zeros(3, 2, dtype=torch.float64, requires_grad=True)
    safe_norm(x).sum().backward()
    assert torch.isfinite(x.grad).all() and (x.grad == 0).all()
