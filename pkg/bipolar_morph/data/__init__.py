"""Dataset loading and model serialization."""

from bipolar_morph.data.idx import (
    Dataset,
    load_idx_directory,
    load_mnist,
    load_mnist_idx,
    read_idx,
    split_train_val,
)
from bipolar_morph.data.serialize import load_model, save_model

__all__ = [
    "Dataset",
    "load_idx_directory",
    "load_mnist",
    "load_mnist_idx",
    "load_model",
    "read_idx",
    "save_model",
    "split_train_val",
]
