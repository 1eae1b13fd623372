import numpy as np
import pytest

CIFAR10_RECORD = 3073
CIFAR100_RECORD = 3074


def _balanced_labels(rng, n, num_classes):
    # real CIFAR splits are exactly balanced; mirror that
    labels = np.repeat(np.arange(num_classes, dtype=np.uint8), n // num_classes)
    rng.shuffle(labels)
    return labels


def _write_cifar10_dir(root, rng):
    root.mkdir(parents=True, exist_ok=True)
    train_labels = _balanced_labels(rng, 50000, 10)
    for i, name in enumerate([f"data_batch_{k}.bin" for k in range(1, 6)] + ["test_batch.bin"]):
        rec = rng.integers(0, 256, size=(10000, CIFAR10_RECORD), dtype=np.uint8)
        if name == "test_batch.bin":
            rec[:, 0] = _balanced_labels(rng, 10000, 10)
        else:
            rec[:, 0] = train_labels[i * 10000:(i + 1) * 10000]
        (root / name).write_bytes(rec.tobytes())
    return root


def _write_cifar100_dir(root, rng):
    root.mkdir(parents=True, exist_ok=True)
    for name, n in [("train.bin", 50000), ("test.bin", 10000)]:
        rec = rng.integers(0, 256, size=(n, CIFAR100_RECORD), dtype=np.uint8)
        rec[:, 0] = rng.integers(0, 20, size=n, dtype=np.uint8)
        rec[:, 1] = _balanced_labels(rng, n, 100)
        (root / name).write_bytes(rec.tobytes())
    return root


@pytest.fixture(scope="session")
def cifar10_dir(tmp_path_factory):
    """Full-size synthetic CIFAR-10 binary tree (random pixels, valid labels)."""
    return _write_cifar10_dir(tmp_path_factory.mktemp("cifar10") / "cifar-10-batches-bin",
                              np.random.default_rng(1234))


@pytest.fixture(scope="session")
def cifar100_dir(tmp_path_factory):
    """Full-size synthetic CIFAR-100 binary tree."""
    return _write_cifar100_dir(tmp_path_factory.mktemp("cifar100") / "cifar-100-binary",
                               np.random.default_rng(5678))
