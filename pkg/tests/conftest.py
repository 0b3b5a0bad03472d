"""Pytest configuration and fixtures."""

import os
import struct
from pathlib import Path

import numpy as np
import pytest

from bipolar_morph.data.idx import Dataset
from bipolar_morph.models.network import initialize, parse_architecture
from bipolar_morph.training.trainer import TrainConfig

TINY_ARCH = "conv1(4, 3, 3) - relu1 - maxpool1(2, 2) - fc1(2) - softmax1"
TINY_SHAPE = (1, 8, 8)

MNIST_DIR = os.getenv("BM_MNIST_DIR")
requires_mnist = pytest.mark.skipif(
    not MNIST_DIR or not Path(MNIST_DIR).is_dir(), reason="BM_MNIST_DIR not set"
)


@pytest.fixture(autouse=True)
def reset_random_seed():
    """Reset random seed before each test for reproducibility."""
    np.random.seed(42)


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(0)


@pytest.fixture
def tiny_net():
    """Unparameterized conv/pool/fc network on 8x8 inputs."""
    return parse_architecture(TINY_ARCH, input_shape=TINY_SHAPE)


@pytest.fixture
def tiny_trained(tiny_net):
    """Tiny network with seeded He-uniform weights (not trained)."""
    return initialize(tiny_net, seed=0)


def make_stripes(n: int, seed: int = 0, size: int = 8) -> Dataset:
    """Two classes: bright left half (0) or bright right half (1), plus noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    images = rng.uniform(0.0, 0.1, size=(n, 1, size, size))
    half = size // 2
    images[labels == 0, :, :, :half] += 0.9
    images[labels == 1, :, :, half:] += 0.9
    return Dataset(images=images, labels=labels, n_classes=2, split="train", source="stripes")


@pytest.fixture
def stripes():
    """Separable 2-class toy set of 160 8x8 images."""
    return make_stripes(160)


@pytest.fixture
def fast_config():
    """Short training schedule for toy data."""
    return TrainConfig(
        learning_rate=1e-2,
        batch_size=16,
        epochs=3,
        patience=3,
        restarts=1,
        val_fraction=0.25,
        eval_batch_size=64,
        seed=0,
    )


def idx_bytes(array: np.ndarray, magic: int) -> bytes:
    """Big-endian IDX encoding of a u8 array."""
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + array.astype(">u1").tobytes()


@pytest.fixture
def write_idx_dir(tmp_path):
    """Write a dataset as train/t10k IDX files into a fresh directory."""

    def write(train: Dataset, test: Dataset, name: str = "idx") -> Path:
        directory = tmp_path / name
        directory.mkdir()
        for prefix, ds in (("train", train), ("t10k", test)):
            pixels = np.round(ds.images[:, 0] * 255).astype(np.uint8)
            (directory / f"{prefix}-images-idx3-ubyte").write_bytes(idx_bytes(pixels, 0x803))
            labels = ds.labels.astype(np.uint8)
            (directory / f"{prefix}-labels-idx1-ubyte").write_bytes(idx_bytes(labels, 0x801))
        return directory

    return write
