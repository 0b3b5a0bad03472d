"""IDX image/label loading and deterministic train/validation splits.

IDX files start with two zero bytes, a type code, the number of dimensions
and one big-endian u32 per dimension; the payload follows in big-endian
order. Files ending in ``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import gzip
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bipolar_morph.config import path_config
from bipolar_morph.errors import DataError
from bipolar_morph.utils import setup_logger

logger = setup_logger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True)
class Dataset:
    """Images (N, 1, H, W) scaled to [0, 1] with integer labels.

    Arrays are read-only so a dataset can be shared between evaluation workers.
    ``indices`` records which rows of ``source`` this dataset holds.
    """

    images: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: str = "train"
    seed: int | None = None
    source: str = ""
    indices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        images = np.array(self.images, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if images.ndim != 4 or images.shape[1] != 1:
            raise DataError(f"images must have shape (N, 1, H, W), got {images.shape}")
        if len(images) != len(labels):
            raise DataError(f"{len(images)} images but {len(labels)} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])  # type: ignore[return-value]

    def subset(
        self, indices: np.ndarray, split: str | None = None, seed: int | None = None
    ) -> Dataset:
        indices = np.asarray(indices, dtype=np.int64)
        base = self.indices[indices] if self.indices is not None else indices
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            n_classes=self.n_classes,
            split=split or self.split,
            seed=self.seed if seed is None else seed,
            source=self.source,
            indices=base,
        )

    def batches(
        self, batch_size: int, rng: np.random.Generator | None = None
    ) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield (images, labels) minibatches, shuffled when ``rng`` is given."""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            index = order[start : start + batch_size]
            yield self.images[index], self.labels[index]


def _read_bytes(path: Path) -> bytes:
    if not path.exists():
        raise DataError("file not found", path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _read_idx(path: str | Path) -> tuple[int, np.ndarray]:
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise DataError("truncated header", path, offset=len(raw))
    magic = int.from_bytes(raw[:4], "big")
    if raw[:2] != b"\x00\x00" or raw[2] not in _IDX_TYPES:
        raise DataError(f"bad magic 0x{magic:08x}", path, offset=0)

    dtype = _IDX_TYPES[raw[2]]
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError("truncated header", path, offset=len(raw))
    dims = tuple(int.from_bytes(raw[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim))

    expected = int(np.prod(dims)) * dtype.itemsize
    payload = len(raw) - header
    if payload < expected:
        raise DataError(
            f"truncated payload: expected {expected} bytes, found {payload}", path, offset=len(raw)
        )
    if payload > expected:
        raise DataError(f"{payload - expected} trailing bytes", path, offset=header + expected)

    array = np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)), offset=header)
    return magic, array.reshape(dims)


def read_idx(path: str | Path) -> np.ndarray:
    """Read any IDX file into an array of its declared type and shape."""
    return _read_idx(path)[1]


def load_mnist_idx(
    images_path: str | Path,
    labels_path: str | Path,
    *,
    image_shape: tuple[int, int] | None = (28, 28),
    n_classes: int | None = 10,
    split: str = "train",
) -> Dataset:
    """Load an IDX image file and its label file.

    Args:
        images_path: IDX3 u8 images (magic 0x00000803)
        labels_path: IDX1 u8 labels (magic 0x00000801)
        image_shape: Required (H, W); None accepts any size
        n_classes: Number of classes; None infers max(label) + 1
        split: Split tag for the returned dataset

    Returns:
        Dataset with pixels scaled from [0, 255] to [0, 1]
    """
    images_magic, images = _read_idx(images_path)
    if images_magic != IMAGES_MAGIC:
        raise DataError(f"bad magic 0x{images_magic:08x} for an images file", images_path, 0)
    labels_magic, labels = _read_idx(labels_path)
    if labels_magic != LABELS_MAGIC:
        raise DataError(f"bad magic 0x{labels_magic:08x} for a labels file", labels_path, 0)

    if images.ndim != 3 or labels.ndim != 1:
        raise DataError(
            f"expected 3-D images and 1-D labels, got {images.ndim}-D and {labels.ndim}-D"
        )
    if len(images) != len(labels):
        raise DataError(
            f"count mismatch: {len(images)} images vs {len(labels)} labels", images_path
        )
    if image_shape is not None and tuple(images.shape[1:]) != tuple(image_shape):
        raise DataError(
            f"expected {image_shape[0]}x{image_shape[1]} images, got "
            f"{images.shape[1]}x{images.shape[2]}",
            images_path,
        )

    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 1
    elif labels.size and labels.max() >= n_classes:
        raise DataError(f"label {int(labels.max())} outside [0, {n_classes})", labels_path)

    logger.info(f"Loaded {len(labels)} {split} samples from {Path(images_path).name}")
    return Dataset(
        images=images[:, None, :, :].astype(np.float64) / 255.0,
        labels=labels.astype(np.int64),
        n_classes=n_classes,
        split=split,
        source=str(images_path),
    )


def _standard(directory: Path, name: str) -> Path | None:
    for candidate in (directory / name, directory / f"{name}.gz"):
        if candidate.is_file():
            return candidate
    return None


def _find(directory: Path, prefixes: tuple[str, ...], kind: str, tag: str) -> Path:
    for prefix in prefixes:
        for pattern in (f"{prefix}*{kind}*{tag}*", f"{prefix}*{kind}*"):
            matches = sorted(directory.glob(pattern))
            if matches:
                return matches[0]
    raise DataError(f"no {prefixes[0]} {kind} file found", directory)


def load_idx_directory(
    directory: str | Path,
    *,
    image_shape: tuple[int, int] | None = None,
    n_classes: int | None = None,
) -> tuple[Dataset, Dataset]:
    """Load the train and test pairs of any IDX image-classification directory.

    The standard MNIST names from ``path_config`` are used when present (plain
    or gzipped); otherwise files are matched by pattern: ``train*images*`` /
    ``train*labels*`` and ``t10k*`` or ``test*`` for the test split.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError("dataset directory not found", directory)

    standard = {
        "train": (path_config.mnist_train_images, path_config.mnist_train_labels),
        "test": (path_config.mnist_test_images, path_config.mnist_test_labels),
    }
    splits = {}
    for split, prefixes in (("train", ("train",)), ("test", ("t10k", "test"))):
        images_name, labels_name = standard[split]
        images = _standard(directory, images_name) or _find(directory, prefixes, "images", "idx3")
        labels = _standard(directory, labels_name) or _find(directory, prefixes, "labels", "idx1")
        splits[split] = load_mnist_idx(
            images, labels, image_shape=image_shape, n_classes=n_classes, split=split
        )

    train, test = splits["train"], splits["test"]
    if train.n_classes != test.n_classes:
        n = max(train.n_classes, test.n_classes)
        train = Dataset(train.images, train.labels, n, "train", source=train.source)
        test = Dataset(test.images, test.labels, n, "test", source=test.source)
    return train, test


def load_mnist(directory: str | Path | None = None) -> tuple[Dataset, Dataset]:
    """MNIST train (60000) and test (10000) sets from the standard IDX files."""
    return load_idx_directory(
        directory or path_config.mnist_dir, image_shape=(28, 28), n_classes=10
    )


def split_train_val(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then hold out round(len * fraction) samples for validation.

    Args:
        ds: Dataset to split
        fraction: Validation share in (0, 1)
        seed: Shuffle seed

    Returns:
        (train, val), disjoint and together covering ``ds``
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"Validation fraction must be in (0, 1), got {fraction}")
    n_val = int(round(len(ds) * fraction))
    if n_val == 0 or n_val == len(ds):
        raise ValueError(f"fraction {fraction} of {len(ds)} samples leaves an empty split")

    order = np.random.default_rng(seed).permutation(len(ds))
    val = ds.subset(order[:n_val], split="val", seed=seed)
    train = ds.subset(order[n_val:], split="train", seed=seed)
    logger.info(f"Split {len(ds)} samples into {len(train)} train / {len(val)} val (seed {seed})")
    return train, val
