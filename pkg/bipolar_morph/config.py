"""Configuration module for bipolar morphological networks.

This module contains all configuration parameters, file paths, and numeric
constants used throughout the project.
"""

import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


@dataclass
class PathConfig:
    """Data, model and output path configuration."""

    # Directories
    base_dir: Path = field(default_factory=lambda: Path(os.getenv("BM_BASE_DIR", Path.cwd())))
    data_dir: Path = field(init=False)
    mnist_dir: Path = field(init=False)
    output_dir: Path = field(init=False)
    models_dir: Path = field(init=False)
    reports_dir: Path = field(init=False)
    figures_dir: Path = field(init=False)
    logs_dir: Path = field(init=False)

    # Standard MNIST file names, tried first (plain or .gz) in any IDX directory
    mnist_train_images: str = "train-images-idx3-ubyte"
    mnist_train_labels: str = "train-labels-idx1-ubyte"
    mnist_test_images: str = "t10k-images-idx3-ubyte"
    mnist_test_labels: str = "t10k-labels-idx1-ubyte"

    def __post_init__(self) -> None:
        """Initialize directory paths."""
        self.data_dir = self.base_dir / "data"
        self.mnist_dir = Path(os.getenv("BM_MNIST_DIR", self.data_dir / "mnist"))
        self.output_dir = self.base_dir / "outputs"
        self.models_dir = self.output_dir / "models"
        self.reports_dir = self.output_dir / "reports"
        self.figures_dir = self.output_dir / "figures"
        self.logs_dir = self.base_dir / "logs"


@dataclass
class NumericConfig:
    """Numeric precision, sentinel and overflow settings."""

    neg_inf: float = -math.inf

    # Max-plus outputs above this are clamped before exp
    exp_clamp: float = math.log(sys.float_info.max) - 1.0
    saturation_abort_fraction: float = 0.01

    grad_check_eps: float = 1e-4

    # Upper bound on elements in one max-plus work array (rows x outputs x fan-in)
    maxplus_chunk_elems: int = 1 << 22

    debug: bool = field(default_factory=lambda: os.getenv("BM_DEBUG", "0") == "1")


@dataclass
class TrainingDefaults:
    """Training hyperparameters and reproducibility settings."""

    optimizer: str = "adam"
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    momentum: float = 0.9  # SGD only
    batch_size: int = 128
    epochs: int = 20  # per phase
    patience: int = 5  # early stopping on validation accuracy
    restarts: int = 3
    val_fraction: float = 0.1
    eval_batch_size: int = 500
    eval_workers: int = 1

    # Random seed for reproducibility
    random_seed: int = 42


@dataclass
class LoggingConfig:
    """Logging configuration."""

    log_level: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", "INFO"))
    log_file: str = field(default_factory=lambda: os.getenv("LOG_FILE", "logs/bipolar_morph.log"))
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    date_format: str = "%Y-%m-%d %H:%M:%S"


# Global configuration instances
path_config = PathConfig()
numeric_config = NumericConfig()
training_defaults = TrainingDefaults()
logging_config = LoggingConfig()
