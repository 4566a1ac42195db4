"""Batch hand-landmark extraction into the canonical landmark-file format."""

from .detectors import (
    Detection,
    DetectorUnavailable,
    HandDetector,
    MediaPipeDetector,
    SyntheticDetector,
    make_detector,
)
from .extractor import (
    CLASS_NAMES,
    ExtractionRecord,
    ExtractionSummary,
    extract_landmarks,
    format_summary,
)

__version__ = "0.1.0"
