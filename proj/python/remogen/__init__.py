"""Python bindings for the remogen core."""

from ._remogen import (
    ConfigError,
    CorruptArchiveError,
    DegeneracyError,
    DimensionError,
    Engine,
    EmptyInputError,
    FormatError,
    InsufficientFramesError,
    Model,
    NumericError,
    ProviderError,
    RemogenError,
    bench,
    compose_deltas,
    estimate_sensitivity,
    frechet_distance,
    init_model,
    load_motion,
    peak_jerk,
    retrieval_metrics,
    save_motion,
    stream,
    synthetic_motion,
    voxelize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
