"""Attentional pyramid network: complexity counts, gradient checks and corpus tools."""

from ._core import (
    ConfigError,
    DomainError,
    IoError,
    ShapeError,
    complexity,
    dedup,
    gradient_suite,
    hamming,
    metrics,
    perceptual_hash,
    preset_names,
    reconcile,
    run_cli,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "IoError",
    "ShapeError",
    "complexity",
    "dedup",
    "gradient_suite",
    "hamming",
    "metrics",
    "perceptual_hash",
    "preset_names",
    "reconcile",
    "run_cli",
]
