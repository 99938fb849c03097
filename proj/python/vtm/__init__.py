"""Grid-regression marker localization for visuotactile images."""

from ._vtm import (
    ConfigError,
    Detector,
    InputError,
    IoError,
    NumericError,
    StateError,
    __version__,
    build_feature,
    decode,
    dedup,
    detect_blobs,
    generate_scene,
    make_dataset,
    match,
    metrics,
    read_pgm,
)

__all__ = [
    "ConfigError",
    "Detector",
    "InputError",
    "IoError",
    "NumericError",
    "StateError",
    "__version__",
    "build_feature",
    "decode",
    "dedup",
    "detect_blobs",
    "generate_scene",
    "make_dataset",
    "match",
    "metrics",
    "read_pgm",
]
