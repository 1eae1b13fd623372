"""Dataset ingestion and construction.

Parses the CIFAR-10/100 binary archives record by record, supports
stratified fractional subsampling and exponential long-tailed subsampling,
generates synthetic Gaussian blobs for fast deterministic experiments, and
standardizes pixel channels using statistics fitted on the training split
actually used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import container
from .numerics import RngState, matrix, round_half_up

SPLITS = ("train", "test")

# record = label byte(s) + 3 channels x 32 x 32 pixel bytes
_CIFAR = {
    "cifar10": {
        "label_bytes": 1,
        "fine_label_offset": 0,
        "num_classes": 10,
        "files": {
            "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
            "test": ["test_batch.bin"],
        },
        "records_per_file": 10000,
    },
    "cifar100": {
        "label_bytes": 2,  # coarse label first, fine label second
        "fine_label_offset": 1,
        "num_classes": 100,
        "files": {"train": ["train.bin"], "test": ["test.bin"]},
        "records_per_file": {"train": 50000, "test": 10000},
    },
}
_PIXELS = 3 * 32 * 32


class DatasetFileError(OSError):
    """A dataset file is missing, truncated, or the wrong variant."""


@dataclass
class Dataset:
    """Feature matrix plus integer labels.

    ``channels`` partitions the feature columns into equal contiguous groups
    for per-channel standardization (3 for CIFAR's RGB planes, 1 otherwise).
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str
    channels: int = 1

    def __post_init__(self):
        self.images = matrix(self.images, name="images")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n, d = self.images.shape
        if n < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.labels.shape != (n,):
            raise ValueError("labels length must match the number of images")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        if d % self.channels != 0:
            raise ValueError(f"feature width {d} not divisible into {self.channels} channels")

    @property
    def size(self) -> int:
        return int(self.images.shape[0])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def load_cifar(path, variant: str, split: str) -> Dataset:
    """Parse a CIFAR binary directory into a Dataset.

    ``path`` is the directory holding the standard .bin files. Each record
    is label byte(s) followed by 3072 pixel bytes (1024 per RGB plane);
    pixels are scaled to [0, 1]. File sizes are checked exactly before any
    parsing, so a truncated archive never yields a partial dataset.
    """
    if variant not in _CIFAR:
        raise ValueError(f"unknown variant {variant!r}, expected 'cifar10' or 'cifar100'")
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    spec = _CIFAR[variant]
    record_len = spec["label_bytes"] + _PIXELS
    per_file = spec["records_per_file"]
    if isinstance(per_file, dict):
        per_file = per_file[split]

    base = Path(path)
    blobs = []
    for name in spec["files"][split]:
        fp = base / name
        if not fp.is_file():
            raise DatasetFileError(f"{fp}: missing dataset file")
        raw = fp.read_bytes()
        expected = per_file * record_len
        if len(raw) != expected:
            raise DatasetFileError(
                f"{fp}: corrupt or wrong-variant file, expected {expected} bytes, found {len(raw)}"
            )
        blobs.append(np.frombuffer(raw, dtype=np.uint8).reshape(per_file, record_len))

    records = np.vstack(blobs)
    labels = records[:, spec["fine_label_offset"]].astype(np.int64)
    images = records[:, spec["label_bytes"]:].astype(np.float64) / 255.0
    return Dataset(images, labels, spec["num_classes"], split, channels=3)


def stratified_subsample(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep round(fraction * n_c) samples per class, uniformly without replacement."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    rng = RngState(seed)
    counts = ds.class_counts()
    keep: list[np.ndarray] = []
    for c in range(ds.num_classes):
        n_c = int(counts[c])
        n_keep = round_half_up(fraction * n_c)
        if n_keep < 1:
            raise ValueError(f"class {c} would drop to 0 samples at fraction {fraction}")
        members = np.flatnonzero(ds.labels == c)
        keep.append(members[rng.permutation(n_c)[:n_keep]])
    idx = np.concatenate(keep)
    return replace(ds, images=ds.images[idx], labels=ds.labels[idx])


def longtail_subsample(ds: Dataset, ratio: float, seed: int) -> Dataset:
    """Exponential imbalance: class c keeps round(n_max * ratio^(c / (C-1))).

    Requires a balanced input; counts decay monotonically from n_max down to
    roughly ratio * n_max for the last class.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    counts = ds.class_counts()
    n_max = int(counts[0])
    if np.any(counts != n_max):
        raise ValueError("long-tail subsampling requires a balanced input dataset")
    rng = RngState(seed)
    c_total = ds.num_classes
    keep: list[np.ndarray] = []
    for c in range(c_total):
        exponent = c / (c_total - 1) if c_total > 1 else 0.0
        n_keep = round_half_up(n_max * ratio ** exponent)
        if n_keep < 1:
            raise ValueError(f"class {c} would drop to 0 samples at ratio {ratio}")
        members = np.flatnonzero(ds.labels == c)
        keep.append(members[rng.permutation(n_max)[:n_keep]])
    idx = np.concatenate(keep)
    return replace(ds, images=ds.images[idx], labels=ds.labels[idx])


def _blob_means(num_classes: int, dim: int) -> np.ndarray:
    # deterministic placement on the unit sphere: evenly spaced on the
    # great circle of the first two axes (alternating poles when dim == 1)
    means = np.zeros((num_classes, dim), dtype=np.float64)
    if dim == 1:
        means[:, 0] = [1.0 if c % 2 == 0 else -1.0 for c in range(num_classes)]
        return means
    for c in range(num_classes):
        theta = 2.0 * math.pi * c / num_classes
        means[c, 0] = math.cos(theta)
        means[c, 1] = math.sin(theta)
    return means


def synth_blobs(num_classes: int, per_class: int, dim: int, spread: float, seed: int):
    """Gaussian blobs around fixed unit-sphere means; returns (train, test).

    The two splits draw from independent derived streams, so changing one
    never perturbs the other.
    """
    if num_classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("num_classes, per_class, and dim must all be >= 1")
    if not spread > 0:
        raise ValueError("spread must be > 0")
    means = _blob_means(num_classes, dim)
    root = RngState(seed)

    def draw(split: str, rng: RngState) -> Dataset:
        n = num_classes * per_class
        images = np.empty((n, dim), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        row = 0
        for c in range(num_classes):
            for _ in range(per_class):
                images[row] = means[c] + spread * rng.normals(dim)
                labels[row] = c
                row += 1
        return Dataset(images, labels, num_classes, split)

    return draw("train", root.derive(0)), draw("test", root.derive(1))


def standardize(train: Dataset, test: Dataset | None = None):
    """Shift/scale each channel to mean 0, stddev 1 using training statistics.

    The test split is transformed with the statistics fitted on the training
    split, never its own. Returns (train, test) with test possibly None.
    """
    n, d = train.images.shape
    width = d // train.channels
    grouped = train.images.reshape(n, train.channels, width)
    mean = grouped.mean(axis=(0, 2))
    std = grouped.std(axis=(0, 2))
    if np.any(std == 0.0):
        raise ValueError("cannot standardize: a channel has zero variance")

    def apply(ds: Dataset) -> Dataset:
        shaped = ds.images.reshape(ds.size, ds.channels, width)
        out = (shaped - mean[None, :, None]) / std[None, :, None]
        return replace(ds, images=out.reshape(ds.size, d))

    if test is not None and (test.channels != train.channels or test.images.shape[1] != d):
        raise ValueError("train and test layouts disagree")
    return apply(train), (apply(test) if test is not None else None)


_SPLIT_CODE = {"train": 0, "test": 1}
_SPLIT_NAME = {v: k for k, v in _SPLIT_CODE.items()}


def save_dataset(ds: Dataset, path) -> None:
    """Persist a dataset in the flat binary container (kind 2).

    Arrays are [images, labels, channels]; metadata holds num_classes and
    the split code.
    """
    arrays = [ds.images, ds.labels.astype(np.float64), np.array([[float(ds.channels)]])]
    container.write_container(
        path, container.KIND_DATASET, (ds.num_classes, _SPLIT_CODE[ds.split]), arrays
    )


def load_dataset(path) -> Dataset:
    kind, meta, arrays = container.read_container(path)
    if kind != container.KIND_DATASET:
        raise ValueError(f"{path}: container kind {kind} is not a dataset")
    if len(arrays) != 3:
        raise ValueError(f"{path}: expected 3 arrays, found {len(arrays)}")
    images, labels_f, channels = arrays
    labels = labels_f.astype(np.int64)
    if np.any(labels_f != labels):
        raise ValueError(f"{path}: non-integer labels")
    return Dataset(images, labels.ravel(), meta[0], _SPLIT_NAME[meta[1]],
                   channels=int(channels.ravel()[0]))
