"""Hand-landmark detector backends.

The extractor treats detection as a black box behind the ``HandDetector``
protocol: given an RGB image array it returns zero or more detected hands,
each with 21 (x, y, z) landmarks and a confidence score.

``MediaPipeDetector`` wraps the real detector (an optional dependency).
``SyntheticDetector`` is a deterministic stand-in for pipeline tests and
offline smoke runs: landmarks are derived from a hash of the image bytes, and
an entirely black image counts as "no hand detected".
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Protocol

import numpy as np

NUM_LANDMARKS = 21


class DetectorUnavailable(RuntimeError):
    """The requested detector backend cannot be loaded."""


@dataclass
class Detection:
    landmarks: np.ndarray  # (21, 3) normalized coordinates
    confidence: float


class HandDetector(Protocol):
    def detect(self, image_rgb: np.ndarray) -> list[Detection]:
        """Detected hands in an (H, W, 3) uint8 RGB image, best first."""


class MediaPipeDetector:
    """Adapter around the MediaPipe Hands solution (static-image mode)."""

    def __init__(self, min_confidence: float = 0.5):
        try:
            import mediapipe as mp
        except ImportError as exc:
            raise DetectorUnavailable(
                "mediapipe is not installed; install the [mediapipe] extra "
                "or run with --detector synthetic"
            ) from exc
        self._hands = mp.solutions.hands.Hands(
            static_image_mode=True,
            max_num_hands=1,
            min_detection_confidence=min_confidence,
        )

    def detect(self, image_rgb: np.ndarray) -> list[Detection]:
        results = self._hands.process(image_rgb)
        if not results.multi_hand_landmarks:
            return []
        scores = []
        if results.multi_handedness:
            scores = [h.classification[0].score for h in results.multi_handedness]
        detections = []
        for i, hand in enumerate(results.multi_hand_landmarks):
            pts = np.array([[lm.x, lm.y, lm.z] for lm in hand.landmark], dtype=np.float64)
            confidence = scores[i] if i < len(scores) else 1.0
            detections.append(Detection(pts, float(confidence)))
        detections.sort(key=lambda d: d.confidence, reverse=True)
        return detections


class SyntheticDetector:
    """Deterministic fake: landmark positions are a pure function of the
    image content, so repeated runs yield identical output files."""

    confidence = 0.99

    def detect(self, image_rgb: np.ndarray) -> list[Detection]:
        if not image_rgb.any():  # all-black sentinel: nothing to detect
            return []
        seed = zlib.crc32(np.ascontiguousarray(image_rgb).tobytes())
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.0, 1.0, (NUM_LANDMARKS, 3))
        pts[0] = (0.5, 0.9, 0.0)  # wrist anchored near the bottom of the frame
        return [Detection(pts, self.confidence)]


def make_detector(name: str, min_confidence: float) -> HandDetector:
    if name == "mediapipe":
        return MediaPipeDetector(min_confidence)
    if name == "synthetic":
        return SyntheticDetector()
    raise DetectorUnavailable(f"unknown detector backend: {name!r}")
