"""Canonical file formats and the synthetic pose generator.

Both interchange files are JSON Lines with a one-line versioned header.

Landmark file (the ingestion format; also what the extractor tool emits)::

    {"format": "asl-landmarks", "version": 1}
    {"label": "A", "landmarks": [[x, y, z], ... 21 triples ...], "source_id": "..."}

``label`` may be a class name from the vocabulary or an integer in [0, 28].

Graph file (preprocessed training data)::

    {"format": "asl-graphs", "version": 1, "desired_distance": 1.0}
    {"label": 0, "features": [[x, y, z, angle], ... 21 rows ...], "source_id": "..."}

Floats are written with ``repr`` round-trip fidelity, so write/read cycles
reproduce values exactly.  Graph records are validated on load against the
preprocessing invariants (wrist row zero, graph diameter equal to the header
distance, angles only at joint nodes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ParseError, UnknownLabel, VersionMismatch
from .hand_graph import (
    HAND_TOPOLOGY,
    NUM_LANDMARKS,
    HandPose,
    PoseGraph,
    pairwise_distances,
    pose_from_array,
)
from .numerics import RngStream

LANDMARK_FORMAT = "asl-landmarks"
GRAPH_FORMAT = "asl-graphs"
FORMAT_VERSION = 1

# A-Z at 0-25, then the three extra classes in alphabetical order.
CLASS_NAMES: tuple[str, ...] = tuple(chr(ord("A") + i) for i in range(26)) + (
    "DELETE", "NOTHING", "SPACE",
)


@dataclass(frozen=True)
class ClassVocabulary:
    """Fixed 29-class vocabulary with a bidirectional name/index map."""

    names: tuple[str, ...] = CLASS_NAMES

    def index(self, label: str | int) -> int:
        if isinstance(label, bool):
            raise UnknownLabel(label)
        if isinstance(label, int):
            if not 0 <= label < len(self.names):
                raise UnknownLabel(label)
            return label
        name = str(label).strip().upper()
        if name == "DEL":  # common dataset shorthand
            name = "DELETE"
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownLabel(label) from None

    def name(self, index: int) -> str:
        return self.names[index]


VOCABULARY = ClassVocabulary()


def _read_header(line: str, expected_format: str) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(1, f"invalid header: {exc.msg}") from exc
    if not isinstance(header, dict) or header.get("format") != expected_format:
        raise ParseError(1, f"expected a {expected_format!r} header line")
    if header.get("version") != FORMAT_VERSION:
        raise VersionMismatch(
            f"file version {header.get('version')!r}, expected {FORMAT_VERSION}"
        )
    return header


def read_landmarks(path) -> list[HandPose]:
    """Parse a landmark file into HandPoses, preserving file order."""
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(1, "empty file, missing header")
    _read_header(lines[0], LANDMARK_FORMAT)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(rec, dict):
            raise ParseError(lineno, "record must be an object")
        try:
            label = VOCABULARY.index(rec["label"])
        except KeyError:
            raise ParseError(lineno, "missing 'label'") from None
        landmarks = rec.get("landmarks")
        if not isinstance(landmarks, list) or len(landmarks) != NUM_LANDMARKS:
            raise ParseError(
                lineno,
                f"expected {NUM_LANDMARKS} landmark triples, got "
                f"{len(landmarks) if isinstance(landmarks, list) else type(landmarks).__name__}",
            )
        try:
            coords = np.array(landmarks, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(lineno, f"landmarks not numeric: {exc}") from exc
        if coords.shape != (NUM_LANDMARKS, 3):
            raise ParseError(lineno, f"landmark array shape {coords.shape}, expected (21, 3)")
        if not np.isfinite(coords).all():
            raise ParseError(lineno, "non-finite landmark coordinate")
        poses.append(pose_from_array(coords, label, str(rec.get("source_id", ""))))
    return poses


def write_landmarks(poses: Iterable[HandPose], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": LANDMARK_FORMAT, "version": FORMAT_VERSION}) + "\n")
        for pose in poses:
            rec = {
                "label": VOCABULARY.name(pose.label),
                "landmarks": [[p.x, p.y, p.z] for p in pose.landmarks],
                "source_id": pose.source_id,
            }
            fh.write(json.dumps(rec) + "\n")


def _validate_graph(features: np.ndarray, lineno: int, d_desired: float) -> None:
    if not np.isfinite(features).all():
        raise ParseError(lineno, "non-finite feature value")
    if np.any(features[0, :3] != 0.0):
        raise ParseError(lineno, "wrist row is not at the origin")
    diameter = pairwise_distances(features[:, :3]).max()
    if abs(diameter - d_desired) > 1e-6:
        raise ParseError(lineno, f"graph diameter {diameter} != {d_desired}")
    angle_nodes = set(HAND_TOPOLOGY.angle_nodes())
    for node in range(NUM_LANDMARKS):
        if node not in angle_nodes and features[node, 3] != 0.0:
            raise ParseError(lineno, f"node {node} carries an angle but is not a joint")


def read_graphs(path) -> tuple[list[PoseGraph], float]:
    """Parse a graph file; returns the graphs and the header's diameter."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(1, "empty file, missing header")
    header = _read_header(lines[0], GRAPH_FORMAT)
    d_desired = float(header.get("desired_distance", 1.0))
    graphs = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON: {exc.msg}") from exc
        try:
            label = VOCABULARY.index(rec["label"])
            features = np.array(rec["features"], dtype=np.float64)
        except KeyError as exc:
            raise ParseError(lineno, f"missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ParseError(lineno, f"features not numeric: {exc}") from exc
        if features.shape != (NUM_LANDMARKS, 4):
            raise ParseError(lineno, f"feature shape {features.shape}, expected (21, 4)")
        _validate_graph(features, lineno, d_desired)
        graphs.append(PoseGraph(features, label, str(rec.get("source_id", ""))))
    return graphs, d_desired


def write_graphs(graphs: Iterable[PoseGraph], path, d_desired: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "format": GRAPH_FORMAT, "version": FORMAT_VERSION,
            "desired_distance": d_desired,
        }) + "\n")
        for g in graphs:
            rec = {
                "label": int(g.label),
                "features": [[float(v) for v in row] for row in g.node_features],
                "source_id": g.source_id,
            }
            fh.write(json.dumps(rec) + "\n")


def synth_dataset(
    n_classes: int = 29,
    per_class: int = 200,
    noise_sigma: float = 0.02,
    seed: int = 7,
) -> list[HandPose]:
    """Seeded synthetic poses: one random base hand per class plus Gaussian
    jitter per sample.

    Base landmarks are drawn uniformly in the unit box with the wrist pinned
    at the origin; each sample then adds i.i.d. jitter of scale noise_sigma.
    Classes are generated in order, samples within a class in order, so equal
    seeds give identical datasets.
    """
    if not 1 <= n_classes <= 29:
        raise ValueError(f"n_classes must lie in [1, 29], got {n_classes}")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = RngStream(seed)
    poses = []
    for cls in range(n_classes):
        cls_rng = rng.derive(cls)
        base = cls_rng.uniform(0.0, 1.0, (NUM_LANDMARKS, 3))
        base[0] = 0.0
        for sample in range(per_class):
            if noise_sigma > 0:
                coords = base + cls_rng.normal(noise_sigma, (NUM_LANDMARKS, 3))
            else:
                coords = base.copy()
            poses.append(pose_from_array(coords, cls, f"synth/{VOCABULARY.name(cls)}/{sample}"))
    return poses
