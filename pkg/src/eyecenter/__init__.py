"""Eye centre localisation: cascade eye regions, binarisation, circular Hough, darkest-pixel refinement."""

from .imagecore import Rect, load_pgm, read_pgm, save_pgm, write_pgm
from .cascade import CascadeModel, DetectParams, builtin_cascade, detect_multiscale, load_cascade
from .hough import Circle, HoughParams, hough_circle
from .pipeline import ConfigError, LocalizationResult, PipelineConfig, run
from .evaluation import (AccuracyReport, GroundTruth, accuracy_at, cross_validate,
                         normalized_errors, tune_threshold)

__version__ = "0.1.0"

__all__ = [
    "Rect", "load_pgm", "read_pgm", "save_pgm", "write_pgm",
    "CascadeModel", "DetectParams", "builtin_cascade", "detect_multiscale", "load_cascade",
    "Circle", "HoughParams", "hough_circle",
    "ConfigError", "LocalizationResult", "PipelineConfig", "run",
    "AccuracyReport", "GroundTruth", "accuracy_at", "cross_validate", "normalized_errors",
    "tune_threshold",
]
