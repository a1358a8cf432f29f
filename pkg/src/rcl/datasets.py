"""MNIST ingestion and task-sequence construction.

Task sequences are built from a raw pool in two stages: ``split`` carves
disjoint train/validation/test index sets, then a transform
(``permute_task`` / ``rotate_task``) is applied identically to every split.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np

from .numeric import rng_stream

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
SIDE = 28


class IdxFormatError(ValueError):
    """Base class for malformed IDX files."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


class DataMissingError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class RawDataset:
    features: np.ndarray  # (n, d) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "RawDataset":
        return RawDataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class Split:
    features: np.ndarray
    labels: np.ndarray
    indices: np.ndarray  # positions in the source pool

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TaskDataset:
    task_id: int
    train: Split
    val: Split
    test: Split
    transform: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.train.features.shape[1]

    def splits(self):
        return {"train": self.train, "val": self.val, "test": self.test}

    def map_features(self, fn, **transform) -> "TaskDataset":
        def apply(s: Split) -> Split:
            return replace(s, features=fn(s.features))

        return replace(self, train=apply(self.train), val=apply(self.val),
                       test=apply(self.test), transform={**self.transform, **transform})


# -- IDX ---------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise DataMissingError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(blob: bytes, magic: int, ndim: int, path) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(blob) >= 4:
        found = struct.unpack(">i", blob[:4])[0]
        if found != magic:
            raise IdxMagicError(f"{path}: magic number {found}, expected {magic}")
    if len(blob) < header:
        raise IdxTruncatedError(f"{path}: header needs {header} bytes, file has {len(blob)}")
    dims = struct.unpack(f">{ndim}i", blob[4:header])
    n = int(np.prod(dims))
    if len(blob) - header < n:
        raise IdxTruncatedError(f"{path}: expected {n} payload bytes, found {len(blob) - header}")
    return np.frombuffer(blob, dtype=np.uint8, count=n, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> RawDataset:
    images = _parse_idx(_read_bytes(images_path), IMAGE_MAGIC, 3, images_path)
    labels = _parse_idx(_read_bytes(labels_path), LABEL_MAGIC, 1, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels")
    feats = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return RawDataset(feats, labels.astype(np.int64))


def _find(data_dir: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (data_dir / name).exists():
            return data_dir / name
    raise DataMissingError(
        f"{stem}[.gz] not found in {data_dir}; run scripts/fetch_mnist.py to populate it")


def load_mnist(data_dir, kind: Literal["train", "t10k"] = "train") -> RawDataset:
    data_dir = Path(data_dir)
    return load_idx(_find(data_dir, f"{kind}-images-idx3-ubyte"),
                    _find(data_dir, f"{kind}-labels-idx1-ubyte"))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">ii", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# -- splits and transforms ---------------------------------------------------

def split(raw: RawDataset, n_train: int, n_val: int, n_test: int,
          rng: np.random.Generator, test_pool: RawDataset | None = None,
          task_id: int = 1) -> TaskDataset:
    """Draw disjoint train/val/test subsets.

    Validation is carved from the training pool.  When ``test_pool`` is given
    (e.g. the official MNIST test file) the test split is drawn from it instead.
    """
    if min(n_train, n_val, n_test) < 0:
        raise ValueError("split sizes must be non-negative")
    need = n_train + n_val + (0 if test_pool is not None else n_test)
    if need > len(raw):
        raise ValueError(f"requested {need} samples from a pool of {len(raw)}")
    order = rng.permutation(len(raw))
    tr = np.sort(order[:n_train])
    va = np.sort(order[n_train:n_train + n_val])
    if test_pool is None:
        te = np.sort(order[n_train + n_val:n_train + n_val + n_test])
        src = raw
    else:
        if n_test > len(test_pool):
            raise ValueError(f"requested {n_test} test samples from a pool of {len(test_pool)}")
        te = np.sort(rng.permutation(len(test_pool))[:n_test])
        src = test_pool

    def mk(pool: RawDataset, idx) -> Split:
        return Split(pool.features[idx], pool.labels[idx], idx)

    return TaskDataset(task_id, mk(raw, tr), mk(raw, va), mk(src, te), {"kind": "identity"})


def permutation_for(seed: int, dim: int = SIDE * SIDE) -> np.ndarray:
    """Seeded Fisher-Yates shuffle of ``0..dim-1``."""
    rng = rng_stream(seed, 0x5045524D)
    perm = np.arange(dim)
    for i in range(dim - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def permute_task(data: TaskDataset, seed: int | None = None,
                 permutation: np.ndarray | None = None) -> TaskDataset:
    if permutation is None:
        if seed is None:
            raise ValueError("need a seed or an explicit permutation")
        permutation = permutation_for(seed, data.n_features)
    permutation = np.asarray(permutation)
    if sorted(permutation.tolist()) != list(range(data.n_features)):
        raise ValueError("not a permutation of the feature indices")
    return data.map_features(lambda f: f[:, permutation], kind="permutation",
                             seed=seed, permutation=permutation)


def rotate_images(features: np.ndarray, angle: float) -> np.ndarray:
    """Rotate flattened 28x28 images about their centre (bilinear, zero fill)."""
    n = features.shape[0]
    if features.shape[1] != SIDE * SIDE:
        raise ValueError(f"expected {SIDE * SIDE} features, got {features.shape[1]}")
    imgs = features.reshape(n, SIDE, SIDE)
    theta = np.deg2rad(angle)
    cos, sin = np.cos(theta), np.sin(theta)
    ctr = (SIDE - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(SIDE, dtype=np.float64), np.arange(SIDE, dtype=np.float64),
                         indexing="ij")
    y, x = rr - ctr, cc - ctr
    # inverse map: sample the source at the output pixel rotated by -angle
    sy = cos * y - sin * x + ctr
    sx = sin * y + cos * x + ctr
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    wy = sy - y0
    wx = sx - x0
    out = np.zeros_like(imgs)
    for dy, dx, w in ((0, 0, (1 - wy) * (1 - wx)), (0, 1, (1 - wy) * wx),
                      (1, 0, wy * (1 - wx)), (1, 1, wy * wx)):
        yy, xx = y0 + dy, x0 + dx
        ok = (yy >= 0) & (yy < SIDE) & (xx >= 0) & (xx < SIDE) & (w != 0)
        out[:, ok] += w[ok] * imgs[:, yy[ok], xx[ok]]
    return np.clip(out, 0.0, 1.0).reshape(n, -1)


def rotate_task(data: TaskDataset, angle: float) -> TaskDataset:
    if not 0.0 <= angle <= 180.0:
        raise ValueError(f"rotation angle {angle} outside [0, 180]")
    return data.map_features(lambda f: rotate_images(f, angle), kind="rotation", angle=angle)


# -- task sequences ----------------------------------------------------------

@dataclass(frozen=True)
class TaskSequenceSpec:
    kind: Literal["permutations", "mix", "synthetic"] = "permutations"
    n_tasks: int = 10
    seed: int = 0
    train_size: int = 55000
    val_size: int = 5000
    test_size: int = 10000
    angles: tuple[float, ...] | None = None
    # synthetic only
    dim: int = 20
    classes: int = 10
    spread: float = 0.05

    def __post_init__(self):
        if self.n_tasks < 1:
            raise ValueError("need at least one task")
        if self.kind == "synthetic" and (self.classes < 2 or self.dim < 2):
            raise ValueError("synthetic tasks need >= 2 classes and >= 2 dimensions")

    def task_kinds(self) -> list[str]:
        if self.kind == "mix":
            # P1, R1, P2, R2, ...
            return ["permutation" if t % 2 == 0 else "rotation" for t in range(self.n_tasks)]
        if self.kind == "permutations":
            return ["permutation"] * self.n_tasks
        return ["synthetic"] * self.n_tasks

    def rotation_angles(self) -> list[float]:
        n_rot = self.task_kinds().count("rotation")
        if self.angles is not None:
            if len(self.angles) < n_rot:
                raise ValueError(f"need {n_rot} rotation angles, got {len(self.angles)}")
            return list(self.angles[:n_rot])
        rng = rng_stream(self.seed, 0x524F54)
        return [float(a) for a in rng.uniform(0.0, 180.0, size=n_rot)]


def synthetic_tasks(spec: TaskSequenceSpec) -> list[TaskDataset]:
    """Gaussian clusters per class, one fresh set of class means per task.

    Means are drawn in [0.2, 0.8]^dim and samples are clipped to [0, 1];
    with small ``spread`` the classes are separable by nearest mean.
    """
    tasks = []
    for t in range(spec.n_tasks):
        rng = rng_stream(spec.seed, 0x53594E, t)
        means = rng.uniform(0.2, 0.8, size=(spec.classes, spec.dim))

        def draw(n: int) -> RawDataset:
            labels = np.arange(n) % spec.classes
            rng.shuffle(labels)
            feats = means[labels] + spec.spread * rng.standard_normal((n, spec.dim))
            return RawDataset(np.clip(feats, 0.0, 1.0), labels.astype(np.int64))

        pool = draw(spec.train_size + spec.val_size + spec.test_size)
        data = split(pool, spec.train_size, spec.val_size, spec.test_size, rng, task_id=t + 1)
        tasks.append(replace(data, transform={"kind": "synthetic", "seed": spec.seed,
                                              "task": t, "means": means}))
    return tasks


def mnist_tasks(spec: TaskSequenceSpec, data_dir) -> list[TaskDataset]:
    """Permuted / mixed MNIST sequence over one shared sample split."""
    train_pool = load_mnist(data_dir, "train")
    try:
        test_pool = load_mnist(data_dir, "t10k")
    except DataMissingError:
        test_pool = None
    base = split(train_pool, spec.train_size, spec.val_size, spec.test_size,
                 rng_stream(spec.seed, 0x53504C), test_pool=test_pool)
    angles = iter(spec.rotation_angles())
    tasks = []
    for t, kind in enumerate(spec.task_kinds()):
        if kind == "permutation":
            data = permute_task(base, seed=spec.seed * 1000 + t)
        else:
            data = rotate_task(base, next(angles))
        tasks.append(replace(data, task_id=t + 1))
    return tasks


def build_tasks(spec: TaskSequenceSpec, data_dir=None) -> list[TaskDataset]:
    if spec.kind == "synthetic":
        return synthetic_tasks(spec)
    if data_dir is None:
        raise DataMissingError(f"dataset kind {spec.kind!r} needs a data directory")
    return mnist_tasks(spec, data_dir)


def class_means_accuracy(data: TaskDataset, split_name: str = "test") -> float:
    """Nearest-class-mean accuracy using the generating means (synthetic tasks)."""
    means = data.transform["means"]
    s: Split = data.splits()[split_name]
    d = ((s.features[:, None, :] - means[None]) ** 2).sum(-1)
    return float((d.argmin(1) == s.labels).mean())

