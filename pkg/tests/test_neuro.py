import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoss.neuro import (
    N_PARAMS,
    LayerNet,
    forward,
    select_action,
    self_teach,
    sigmoid,
    squared_error,
)
from evoss.world import INPUTS

from oracles import finite_difference_grad, linear_argmax, loss, naive_forward


def random_net(rng, scale=1.0):
    return LayerNet.from_flat(scale * rng.standard_normal(N_PARAMS))


def test_sigmoid_values():
    assert sigmoid(0) == 0.5
    assert abs(sigmoid(40) - 1.0) < 1e-12
    assert sigmoid(-2) == pytest.approx(1 / (1 + math.e ** 2), abs=1e-15)


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_sigmoid_monotone_and_open_interval(a, b):
    lo, hi = sorted((a, b))
    assert 0.0 < sigmoid(lo) <= sigmoid(hi) < 1.0


def test_forward_zero_net():
    hidden, out = forward(LayerNet.zeros(), INPUTS[5])
    assert np.all(hidden == 0.5) and np.all(out == 0.5)


def test_forward_zero_input_ignores_w1():
    rng = np.random.default_rng(3)
    flat = rng.standard_normal(N_PARAMS)
    flat[70:80] = 0.0
    flat[130:] = 0.0
    net = LayerNet.from_flat(flat)
    hidden, out = forward(net, np.zeros(7))
    assert np.all(hidden == 0.5)
    expected = 1 / (1 + np.exp(-0.5 * net.w2.sum(axis=1)))
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)


def test_forward_matches_naive_loops():
    rng = np.random.default_rng(11)
    for _ in range(200):
        flat = rng.standard_normal(N_PARAMS)
        x = INPUTS[rng.integers(13)]
        hidden, out = forward(LayerNet.from_flat(flat), x)
        h_ref, o_ref = naive_forward(flat, x)
        np.testing.assert_allclose(hidden, h_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(out, o_ref, rtol=0, atol=1e-12)


def test_forward_is_deterministic():
    net = random_net(np.random.default_rng(0))
    a = forward(net, INPUTS[2])
    b = forward(net, INPUTS[2])
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_output_range_for_large_weights():
    rng = np.random.default_rng(5)
    for _ in range(50):
        _, out = forward(random_net(rng, scale=5.0), INPUTS[rng.integers(13)])
        assert np.all((out > 0) & (out < 1))


def test_layout_round_trip():
    flat = np.arange(N_PARAMS, dtype=float)
    net = LayerNet.from_flat(flat)
    assert net.w1[0, 6] == 6 and net.w1[1, 0] == 7
    assert net.b1[0] == 70 and net.w2[0, 0] == 80 and net.w2[4, 9] == 129 and net.b2[4] == 134
    assert np.array_equal(net.flat(), flat)


def test_select_action_examples():
    assert select_action([0.1, 0.9, 0.2, 0.2, 0.1]) == 1
    assert select_action([0.5] * 5) == 0
    assert select_action([0.2, 0.7, 0.1, 0.7, 0.0]) == 1


def test_select_action_matches_linear_scan():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        v = rng.random(5)
        if rng.random() < 0.2:
            v[rng.integers(5)] = v.max()
        assert select_action(v) == linear_argmax(list(v))


def test_self_teach_zero_gradient_when_target_equals_output():
    net = random_net(np.random.default_rng(1))
    x = INPUTS[4]
    _, out = forward(net, x)
    assert self_teach(net, x, out) == net


def test_self_teach_does_not_mutate_argument():
    rng = np.random.default_rng(2)
    net = random_net(rng)
    before = net.flat().copy()
    self_teach(net, INPUTS[0], rng.random(5))
    assert np.array_equal(net.flat(), before)


def test_self_teach_step_is_gradient_step():
    """The parameter change equals -lr times the finite-difference gradient."""
    rng = np.random.default_rng(13)
    for _ in range(20):
        flat = rng.standard_normal(N_PARAMS)
        x = INPUTS[rng.integers(13)]
        target = rng.random(5)
        lr = 0.01
        new = self_teach(LayerNet.from_flat(flat), x, target, lr).flat()
        analytic = (flat - new) / lr
        fd = finite_difference_grad(flat, x, target)
        rel = np.abs(analytic - fd) / (np.abs(analytic) + 1e-8)
        # tiny gradients are dominated by finite-difference noise
        mask = np.abs(fd) > 1e-7
        assert np.max(rel[mask]) < 1e-5
        assert np.max(np.abs(analytic - fd)) < 1e-9


def test_self_teach_converges():
    rng = np.random.default_rng(21)
    net = random_net(rng)
    x = INPUTS[6]
    target = rng.random(5)
    start = squared_error(net, x, target)
    losses = [start]
    for _ in range(500):
        net = self_teach(net, x, target, 0.5)
        losses.append(squared_error(net, x, target))
    assert losses[-1] < start / 10
    # non-increasing on average over windows of 50
    windows = [np.mean(losses[i:i + 50]) for i in range(0, 500, 50)]
    assert all(b <= a for a, b in zip(windows, windows[1:]))


def test_self_teach_lr_001_decreases_loss():
    rng = np.random.default_rng(22)
    net = random_net(rng)
    x = INPUTS[1]
    target = rng.random(5)
    start = loss(net.flat(), x, target)
    for _ in range(500):
        net = self_teach(net, x, target)
    assert loss(net.flat(), x, target) < start


def test_self_teach_no_bias_leaves_biases():
    rng = np.random.default_rng(4)
    flat = rng.standard_normal(N_PARAMS)
    flat[70:80] = 0
    flat[130:] = 0
    new = self_teach(LayerNet.from_flat(flat), INPUTS[3], rng.random(5), use_bias=False)
    assert np.all(new.b1 == 0) and np.all(new.b2 == 0)
    assert not np.array_equal(new.w2, LayerNet.from_flat(flat).w2)


def test_self_teach_rejects_bad_learning_rate():
    with pytest.raises(ValueError):
        self_teach(LayerNet.zeros(), INPUTS[0], np.zeros(5), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_self_teach_pure(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng)
    x = INPUTS[rng.integers(13)]
    t = rng.random(5)
    assert self_teach(net, x, t) == self_teach(net, x, t)
