"""Spatio-temporal forecasting with learned dual graphs and a pattern memory."""

from ._core import (
    AblationFlags,
    CheckpointError,
    ConfigError,
    DataError,
    DatasetBundle,
    FormatError,
    Model,
    ModelConfig,
    NumericError,
    PlantedEdge,
    RawDataset,
    ShapeError,
    WindowedSplit,
    compute_metrics,
    evaluate,
    fit,
    generate_synthetic,
    grad_check,
    historical_average,
    load_dataset,
    make_windows,
    save_dataset,
)

__all__ = [
    "AblationFlags",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DatasetBundle",
    "FormatError",
    "Model",
    "ModelConfig",
    "NumericError",
    "PlantedEdge",
    "RawDataset",
    "ShapeError",
    "WindowedSplit",
    "compute_metrics",
    "evaluate",
    "fit",
    "generate_synthetic",
    "grad_check",
    "historical_average",
    "load_dataset",
    "make_windows",
    "save_dataset",
]
