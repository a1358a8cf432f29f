import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_params, random_history
from rcl.expandable import (ExpandableNetwork, UnknownTaskError, evaluate, expand, forward_task,
                            init_base, load_network, param_count, save_network, train_new)
from rcl.netcore import SgdConfig


def test_base_count_examples():
    rng = np.random.default_rng(0)
    assert param_count(init_base([784, 312, 128, 10], rng), 1) == 286_274
    assert param_count(init_base([2, 3, 2], rng), 1) == 17


def test_expand_3_2_adds_3007():
    rng = np.random.default_rng(0)
    net = init_base([784, 312, 128, 10], rng)
    wide = expand(net, (3, 2), 2, rng)
    assert param_count(wide, 2) - param_count(wide, 1) == 3_007
    assert param_count(wide, 1) == 286_274
    assert enumerate_params(wide, 2) == 286_274 + 3_007


def test_zero_expansion_keeps_count_and_weights():
    rng = np.random.default_rng(1)
    net = init_base([5, 4, 3, 2], rng)
    same = expand(net, (0, 0), 2, rng)
    assert param_count(same, 2) == param_count(net, 1)
    for a, b in zip(net.state_arrays().values(), same.state_arrays().values()):
        np.testing.assert_array_equal(a, b)
    assert same.history == {1: (4, 3), 2: (4, 3)}


def test_two_step_expansion_matches_oracle():
    rng = np.random.default_rng(2)
    net = expand(expand(init_base([6, 4, 3, 2], rng), (1, 1), 2, rng), (1, 1), 3, rng)
    for t in (1, 2, 3):
        assert param_count(net, t) == enumerate_params(net, t)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_count_matches_enumeration_oracle(seed):
    net, _, _ = random_history(seed)
    for t in net.history:
        assert param_count(net, t) == enumerate_params(net, t)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_structural_zeros(seed):
    """A newer unit never feeds an older one."""
    net, _, _ = random_history(seed)
    stamps = net.parameter_stamps()
    for key, arr in net.state_arrays().items():
        absent = stamps[key] < 0
        assert not arr[absent].any(), key


def test_expand_is_pure_and_validates():
    rng = np.random.default_rng(3)
    net = init_base([5, 4, 2], rng)
    before = {k: v.copy() for k, v in net.state_arrays().items()}
    wide = expand(net, (3,), 2, rng)
    for k, v in net.state_arrays().items():
        np.testing.assert_array_equal(v, before[k])
    assert wide.stamps[0].tolist() == [1] * 4 + [2] * 3
    with pytest.raises(ValueError):
        expand(net, (1, 1), 2, rng)
    with pytest.raises(ValueError):
        expand(net, (1,), 3, rng)  # skips a task id
    with pytest.raises(ValueError):
        expand(wide, (1,), 2, rng)  # repeats one
    with pytest.raises(ValueError):
        expand(net, (-1,), 2, rng)


def test_unknown_task():
    net = init_base([3, 2, 2], np.random.default_rng(0))
    with pytest.raises(UnknownTaskError):
        forward_task(net, np.zeros((1, 3)), 2)


def test_forward_task_equals_truncated_dense_net(rng):
    """The task-t view equals a plain MLP built from the visible slices."""
    net, sizes, _ = random_history(11)
    x = rng.random((7, net.n_in))
    for t in net.history:
        h = x
        prev = net.n_in
        for p, n in zip(net.hidden, net.sizes(t)):
            h = np.maximum(h @ p.weights[:prev, :n] + p.bias[:n], 0)
            prev = n
        ref = h @ net.output.weights[:prev] + net.output.bias
        np.testing.assert_allclose(forward_task(net, x, t), ref, rtol=1e-12, atol=1e-12)


def _frozen_arrays(net: ExpandableNetwork, task_id: int):
    stamps = net.parameter_stamps()
    return {k: (v.copy(), (stamps[k] >= 0) & (stamps[k] < task_id))
            for k, v in net.state_arrays().items()}


def test_training_new_task_freezes_old_parameters(tiny_tasks):
    rng = np.random.default_rng(0)
    net = init_base([12, 8, 6, 4], rng)
    train_new(net, tiny_tasks[0], 1, 3, SgdConfig(0.1), rng)
    x = tiny_tasks[0].test.features
    logits1 = forward_task(net, x, 1)
    net2 = expand(net, (3, 2), 2, rng)
    snap = _frozen_arrays(net2, 2)
    train_new(net2, tiny_tasks[1], 2, 3, SgdConfig(0.1), rng)
    for k, v in net2.state_arrays().items():
        old, frozen = snap[k]
        np.testing.assert_array_equal(v[frozen], old[frozen])
        if not frozen.all():
            assert not np.array_equal(v, old), f"{k} never moved"
        else:
            assert k == "out.b"  # shared output bias belongs to task 1
    assert np.array_equal(forward_task(net2, x, 1), logits1)


def test_train_new_requires_latest_task(tiny_tasks):
    rng = np.random.default_rng(0)
    net = expand(init_base([12, 5, 4], rng), (1,), 2, rng)
    with pytest.raises(ValueError):
        train_new(net, tiny_tasks[0], 1, 1, SgdConfig(0.1), rng)


def test_base_training_learns(tiny_tasks):
    rng = np.random.default_rng(0)
    net = init_base([12, 16, 4], rng)
    train_new(net, tiny_tasks[0], 1, 10, SgdConfig(0.1), rng)
    assert evaluate(net, tiny_tasks[0].test, 1) > 0.9


def test_save_load_roundtrip(tmp_path):
    net, _, _ = random_history(5)
    save_network(net, tmp_path / "net.npz")
    back = load_network(tmp_path / "net.npz")
    assert back.history == net.history
    for a, b in zip(net.stamps, back.stamps):
        np.testing.assert_array_equal(a, b)
    for k, v in net.state_arrays().items():
        np.testing.assert_array_equal(v, back.state_arrays()[k])
    x = np.random.default_rng(0).random((3, net.n_in))
    for t in net.history:
        assert np.array_equal(forward_task(net, x, t), forward_task(back, x, t))


def test_load_rejects_foreign_file(tmp_path):
    np.savez(tmp_path / "x.npz", meta=np.frombuffer(b'{"format": "other"}', dtype=np.uint8))
    with pytest.raises(ValueError, match="not a saved"):
        load_network(tmp_path / "x.npz")
