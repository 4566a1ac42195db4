"""Walk a class-per-folder image tree and emit the canonical landmark file.

Expected layout::

    image_root/
      A/img001.jpg  img002.jpg ...
      B/...
      SPACE/...

Each successfully detected hand becomes one JSON line in the output file,
schema-compatible with the landmark format consumed by the training tooling:
a ``{"format": "asl-landmarks", "version": 1}`` header line, then one
``{"label", "landmarks", "source_id"}`` object per sample.  Unreadable images
and images without a detectable hand are skipped and counted per class, which
surfaces classes where extraction barely works.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .detectors import Detection, HandDetector, MediaPipeDetector, NUM_LANDMARKS

LANDMARK_FORMAT = "asl-landmarks"
FORMAT_VERSION = 1

# Class vocabulary of the landmark-file format: A-Z, then the three extra
# classes in alphabetical order.
CLASS_NAMES: tuple[str, ...] = tuple(chr(ord("A") + i) for i in range(26)) + (
    "DELETE", "NOTHING", "SPACE",
)

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".webp"}


@dataclass
class ExtractionRecord:
    image_path: str
    label: str
    detected: bool
    landmarks: np.ndarray | None = None


@dataclass
class ClassCounts:
    ok: int = 0
    no_hand: int = 0
    unreadable: int = 0


@dataclass
class ExtractionSummary:
    per_class: dict[str, ClassCounts] = field(default_factory=dict)
    skipped_dirs: list[str] = field(default_factory=list)

    def counts(self, label: str) -> ClassCounts:
        return self.per_class.setdefault(label, ClassCounts())

    @property
    def ok(self) -> int:
        return sum(c.ok for c in self.per_class.values())

    @property
    def no_hand(self) -> int:
        return sum(c.no_hand for c in self.per_class.values())

    @property
    def unreadable(self) -> int:
        return sum(c.unreadable for c in self.per_class.values())


def _load_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _landmark_line(label: str, landmarks: np.ndarray, source_id: str) -> str:
    return json.dumps({
        "label": label,
        "landmarks": [[float(x), float(y), float(z)] for x, y, z in landmarks],
        "source_id": source_id,
    })


def extract_landmarks(
    image_root,
    output_path,
    min_confidence: float = 0.5,
    detector: HandDetector | None = None,
) -> ExtractionSummary:
    """Run the detector over every image and write the landmark file.

    Only the first (highest-confidence) detected hand per image is emitted.
    Directories whose names are not in the class vocabulary are skipped and
    listed in the summary.
    """
    root = Path(image_root)
    if not root.is_dir():
        raise NotADirectoryError(f"image root {root} is not a directory")
    if detector is None:
        detector = MediaPipeDetector(min_confidence)
    summary = ExtractionSummary()

    with open(output_path, "w", encoding="utf-8") as out:
        out.write(json.dumps({"format": LANDMARK_FORMAT, "version": FORMAT_VERSION}) + "\n")
        for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            label = class_dir.name.upper()
            if label not in CLASS_NAMES:
                summary.skipped_dirs.append(class_dir.name)
                continue
            counts = summary.counts(label)
            for image_path in sorted(class_dir.iterdir()):
                if image_path.suffix.lower() not in IMAGE_SUFFIXES:
                    continue
                try:
                    image = _load_rgb(image_path)
                except (UnidentifiedImageError, OSError):
                    counts.unreadable += 1
                    continue
                detections = [d for d in detector.detect(image) if d.confidence >= min_confidence]
                best = _best_detection(detections)
                record = ExtractionRecord(
                    image_path=str(image_path), label=label,
                    detected=best is not None,
                    landmarks=best.landmarks if best else None,
                )
                if not record.detected:
                    counts.no_hand += 1
                    continue
                out.write(_landmark_line(record.label, record.landmarks, record.image_path) + "\n")
                counts.ok += 1
    return summary


def _best_detection(detections: list[Detection]) -> Detection | None:
    for det in detections:
        pts = np.asarray(det.landmarks, dtype=np.float64)
        if pts.shape == (NUM_LANDMARKS, 3) and np.isfinite(pts).all():
            return det
    return None


def format_summary(summary: ExtractionSummary) -> str:
    lines = [f"{'class':>8}  {'ok':>5}  {'no_hand':>7}  {'unreadable':>10}"]
    for label in sorted(summary.per_class):
        c = summary.per_class[label]
        lines.append(f"{label:>8}  {c.ok:>5}  {c.no_hand:>7}  {c.unreadable:>10}")
    lines.append(f"{'total':>8}  {summary.ok:>5}  {summary.no_hand:>7}  {summary.unreadable:>10}")
    if summary.skipped_dirs:
        lines.append(f"skipped non-class directories: {', '.join(summary.skipped_dirs)}")
    return "\n".join(lines)
