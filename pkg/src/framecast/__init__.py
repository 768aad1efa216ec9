"""Spatiotemporal sequence prediction with convolutional recurrent networks.

The package is a small numpy-backed stack: dense tensor kernels, a
tape-based reverse-mode differentiation engine, convolutional recurrent
cells (ConvLSTM, the dual-memory cell, the cascaded dual-memory cell, and
a gradient highway unit), network assembly and rollout, training, a
bouncing-digit sequence generator, frame metrics, and tooling that
measures how gradients propagate back through time.

Submodules hold the substance; the names re-exported here are the
everyday entry points. They resolve lazily so that importing the package
(or its CLI) does not load the numeric stack — the CLI relies on that to
pin BLAS thread counts before numpy comes in.
"""

import importlib

from .errors import (
    ConfigError,
    ContractError,
    FormatError,
    GraphError,
    NumericError,
    ShapeError,
)

__version__ = "0.1.0"

_EXPORTS = {
    "GradientStudy": "analysis",
    "emit_study_csv": "analysis",
    "gradient_study": "analysis",
    "run_gradient_study": "analysis",
    "DatasetSpec": "data",
    "generate_dataset": "data",
    "occlusion_frequency": "data",
    "read_dataset": "data",
    "write_dataset": "data",
    "FrameMetrics": "metrics",
    "evaluate_frames": "metrics",
    "mse_per_frame": "metrics",
    "psnr": "metrics",
    "ssim": "metrics",
    "write_report": "metrics",
    "ARCHITECTURES": "network",
    "NetworkConfig": "network",
    "NetworkParams": "network",
    "SequenceBatch": "network",
    "count_parameters": "network",
    "init_network": "network",
    "load_checkpoint": "network",
    "rollout": "network",
    "save_checkpoint": "network",
    "read_stpt": "stpt",
    "write_stpt": "stpt",
    "AdamState": "training",
    "TrainConfig": "training",
    "adam_step": "training",
    "loss": "training",
    "sampling_probability": "training",
    "train": "training",
}

__all__ = sorted(_EXPORTS) + [
    "ConfigError",
    "ContractError",
    "FormatError",
    "GraphError",
    "NumericError",
    "ShapeError",
    "__version__",
]


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
