import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MNIST_DIR, mnist_available
from rcl.datasets import (DataMissingError, IdxCountMismatchError, IdxMagicError,
                          IdxTruncatedError, RawDataset, TaskSequenceSpec, build_tasks,
                          class_means_accuracy, load_idx, load_mnist, permutation_for,
                          permute_task, rotate_images, rotate_task, split, synthetic_tasks,
                          write_idx)


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(5, 28, 28), dtype=np.uint8)
    labels = np.array([3, 1, 4, 1, 5], dtype=np.uint8)
    ip, lp = tmp_path / "img", tmp_path / "lab"
    write_idx(imgs, labels, ip, lp)
    return imgs, labels, ip, lp


def test_idx_roundtrip(idx_pair):
    imgs, labels, ip, lp = idx_pair
    raw = load_idx(ip, lp)
    assert raw.features.shape == (5, 784)
    np.testing.assert_array_equal(raw.features * 255, imgs.reshape(5, -1))
    np.testing.assert_array_equal(raw.labels, labels)


def test_idx_gzip_transparent(idx_pair, tmp_path):
    imgs, labels, ip, lp = idx_pair
    gz = tmp_path / "img.gz"
    gz.write_bytes(gzip.compress(ip.read_bytes()))
    np.testing.assert_array_equal(load_idx(gz, lp).features, load_idx(ip, lp).features)


def test_idx_bad_magic(idx_pair):
    _, _, ip, lp = idx_pair
    with pytest.raises(IdxMagicError):
        load_idx(lp, ip)


def test_idx_truncated(idx_pair, tmp_path):
    _, _, ip, lp = idx_pair
    short = tmp_path / "short"
    short.write_bytes(ip.read_bytes()[:-10])
    with pytest.raises(IdxTruncatedError):
        load_idx(short, lp)
    (tmp_path / "tiny").write_bytes(struct.pack(">i", 2051))
    with pytest.raises(IdxTruncatedError):
        load_idx(tmp_path / "tiny", lp)


def test_idx_count_mismatch(idx_pair, tmp_path):
    imgs, labels, ip, _ = idx_pair
    write_idx(imgs[:1], labels[:4], tmp_path / "i2", tmp_path / "l2")
    with pytest.raises(IdxCountMismatchError):
        load_idx(ip, tmp_path / "l2")


def test_missing_files(tmp_path):
    with pytest.raises(DataMissingError, match="fetch_mnist"):
        load_mnist(tmp_path)
    with pytest.raises(DataMissingError):
        build_tasks(TaskSequenceSpec("permutations", 1), None)


def _pool(n=50, d=6):
    rng = np.random.default_rng(0)
    return RawDataset(rng.random((n, d)), rng.integers(0, 3, n))


@settings(max_examples=30)
@given(st.integers(0, 20), st.integers(0, 15), st.integers(0, 15), st.integers(0, 99))
def test_split_disjoint(n_tr, n_va, n_te, seed):
    data = split(_pool(), n_tr, n_va, n_te, np.random.default_rng(seed))
    idx = [set(s.indices.tolist()) for s in (data.train, data.val, data.test)]
    assert [len(s) for s in idx] == [n_tr, n_va, n_te]
    assert not (idx[0] & idx[1]) and not (idx[0] & idx[2]) and not (idx[1] & idx[2])


def test_split_test_pool_and_errors():
    pool, test = _pool(20), _pool(8)
    data = split(pool, 10, 5, 8, np.random.default_rng(0), test_pool=test)
    assert len(data.test) == 8
    with pytest.raises(ValueError):
        split(pool, 20, 5, 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        split(pool, 1, 1, 9, np.random.default_rng(0), test_pool=test)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_permutation_is_bijection(seed):
    p = permutation_for(seed, 50)
    assert sorted(p.tolist()) == list(range(50))
    np.testing.assert_array_equal(p, permutation_for(seed, 50))


def test_permute_task_preserves_labels_and_multiset():
    data = split(_pool(), 20, 5, 5, np.random.default_rng(0))
    pt = permute_task(data, seed=3)
    np.testing.assert_array_equal(pt.train.labels, data.train.labels)
    np.testing.assert_array_equal(np.sort(pt.train.features, 1), np.sort(data.train.features, 1))
    assert pt.transform["kind"] == "permutation"
    with pytest.raises(ValueError):
        permute_task(data)
    with pytest.raises(ValueError):
        permute_task(data, permutation=np.zeros(6, dtype=int))


def test_rotation_identities():
    rng = np.random.default_rng(0)
    x = rng.random((3, 784))
    np.testing.assert_allclose(rotate_images(x, 0.0), x, atol=1e-12)
    # 180 degrees maps pixel (r, c) to (27 - r, 27 - c) exactly
    np.testing.assert_allclose(rotate_images(x, 180.0),
                               x.reshape(3, 28, 28)[:, ::-1, ::-1].reshape(3, -1), atol=1e-12)
    r90 = rotate_images(x, 90.0).reshape(3, 28, 28)
    # a quarter turn of the pixel grid, whichever direction counts as positive
    turns = [np.rot90(x.reshape(3, 28, 28), k=k, axes=(1, 2)) for k in (1, 3)]
    assert any(np.allclose(r90, t, atol=1e-12) for t in turns)


def test_rotation_90_is_a_quarter_turn():
    x = np.zeros((1, 28, 28))
    x[0, 0, 27] = 1.0  # one corner
    out = rotate_images(x.reshape(1, -1), 90.0).reshape(28, 28)
    assert out.sum() == pytest.approx(1.0)
    assert out[0, 27] == 0.0 and np.isclose(out.max(), 1.0)
    pos = np.unravel_index(out.argmax(), out.shape)
    assert pos in {(0, 0), (27, 27)}


def test_rotate_task_range():
    data = split(RawDataset(np.zeros((4, 784)), np.zeros(4, dtype=int)), 2, 1, 1,
                 np.random.default_rng(0))
    with pytest.raises(ValueError):
        rotate_task(data, 200.0)


def test_sequence_spec_kinds_and_angles():
    spec = TaskSequenceSpec("mix", n_tasks=5, seed=1)
    assert spec.task_kinds() == ["permutation", "rotation"] * 2 + ["permutation"]
    angles = spec.rotation_angles()
    assert len(angles) == 2 and all(0 <= a <= 180 for a in angles)
    assert TaskSequenceSpec("mix", n_tasks=3, angles=(10.0,)).rotation_angles() == [10.0]
    with pytest.raises(ValueError):
        TaskSequenceSpec("mix", n_tasks=5, angles=(1.0,)).rotation_angles()
    with pytest.raises(ValueError):
        TaskSequenceSpec(n_tasks=0)


def test_synthetic_tasks_deterministic_and_separable():
    spec = TaskSequenceSpec("synthetic", n_tasks=2, seed=4, train_size=100, val_size=20,
                            test_size=40)
    a, b = synthetic_tasks(spec), synthetic_tasks(spec)
    np.testing.assert_array_equal(a[1].train.features, b[1].train.features)
    assert not np.array_equal(a[0].transform["means"], a[1].transform["means"])
    assert class_means_accuracy(a[0]) > 0.95
    assert a[0].train.features.min() >= 0 and a[0].train.features.max() <= 1


@pytest.mark.skipif(not mnist_available(), reason="MNIST files not present")
def test_mnist_sequence_shares_samples():
    spec = TaskSequenceSpec("mix", n_tasks=3, seed=0, train_size=100, val_size=20, test_size=30)
    tasks = build_tasks(spec, MNIST_DIR)
    assert [t.task_id for t in tasks] == [1, 2, 3]
    assert [t.transform["kind"] for t in tasks] == ["permutation", "rotation", "permutation"]
    for t in tasks[1:]:
        np.testing.assert_array_equal(t.train.indices, tasks[0].train.indices)
        np.testing.assert_array_equal(t.test.labels, tasks[0].test.labels)
    assert not np.array_equal(tasks[0].train.features, tasks[2].train.features)


@pytest.mark.skipif(not mnist_available(), reason="MNIST files not present")
def test_mnist_files_are_complete():
    train, test = load_mnist(MNIST_DIR, "train"), load_mnist(MNIST_DIR, "t10k")
    assert len(train) == 60_000 and len(test) == 10_000
    assert train.labels[:10].tolist() == [5, 0, 4, 1, 9, 2, 1, 3, 1, 4]
