"""MMINR precipitation nowcasting: synthetic data, forecasting and verification."""

from ._mminr import (
    ConfigError,
    DataIntegrityError,
    Model,
    ShapeError,
    TrainingError,
    denormalize_value,
    evaluate,
    generate_synthetic,
    gradient_check,
    normalize_value,
    normalized_upper_bound,
    read_archive,
    run_cli,
    write_archive,
)

__all__ = [
    "ConfigError",
    "DataIntegrityError",
    "Model",
    "ShapeError",
    "TrainingError",
    "denormalize_value",
    "evaluate",
    "generate_synthetic",
    "gradient_check",
    "normalize_value",
    "normalized_upper_bound",
    "read_archive",
    "run_cli",
    "write_archive",
]
