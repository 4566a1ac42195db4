"""Hand-landmark graph construction.

A detected hand is 21 labelled 3-D landmarks (wrist = index 0, then four
joints per finger).  This module turns one detection into the fixed-topology
graph the classifier consumes: joint angles at ten finger joints, translation
normalization against the wrist, scale normalization to a fixed diameter, and
the 21x21 adjacency / 21x4 node-feature matrices.

Pipeline order: angles are computed on the raw landmarks first, then the two
normalizations run.  Rigid translation and uniform scaling preserve angles,
so the order is observable only through floating-point noise; the invariance
is asserted by tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateJoint, DegeneratePose

NUM_LANDMARKS = 21
NUM_FEATURES = 4  # x, y, z, joint angle
WRIST = 0

# The 21-edge hand skeleton: wrist to thumb/index/pinky bases, chains along
# each finger, knuckle bridges 5-9, 9-13, 13-17, and the palm edge 0-17.
HAND_EDGES: tuple[tuple[int, int], ...] = (
    (0, 1), (1, 2), (2, 3), (3, 4),
    (0, 5), (5, 6), (6, 7), (7, 8),
    (5, 9), (9, 10), (10, 11), (11, 12),
    (9, 13), (13, 14), (14, 15), (15, 16),
    (13, 17), (17, 18), (18, 19), (19, 20),
    (0, 17),
)

# Joint triples (a, b, c): the angle is measured at b, the middle landmark,
# which is the joint each triple names (CMC/MCP/PIP).
ANGLE_TRIPLES: tuple[tuple[int, int, int], ...] = (
    (1, 2, 3),    # thumb CMC
    (2, 3, 4),    # thumb MCP
    (5, 6, 7),    # index MCP
    (6, 7, 8),    # index PIP
    (9, 10, 11),  # middle MCP
    (10, 11, 12), # middle PIP
    (13, 14, 15), # ring MCP
    (14, 15, 16), # ring PIP
    (17, 18, 19), # pinky MCP
    (18, 19, 20), # pinky PIP
)

DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class Landmark:
    """One 3-D hand keypoint in normalized image coordinates."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not np.isfinite(v):
                raise ValueError(f"landmark coordinate is not finite: {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True)
class HandPose:
    """21 raw landmarks plus a class label; the unit of ingestion."""

    landmarks: tuple[Landmark, ...]
    label: int
    source_id: str = ""

    def __post_init__(self):
        if len(self.landmarks) != NUM_LANDMARKS:
            raise ValueError(f"expected {NUM_LANDMARKS} landmarks, got {len(self.landmarks)}")
        if not 0 <= self.label < 29:
            raise ValueError(f"label out of range [0, 28]: {self.label}")

    def coords(self) -> np.ndarray:
        """Landmark coordinates as a 21x3 array."""
        return np.array([[p.x, p.y, p.z] for p in self.landmarks], dtype=np.float64)


def pose_from_array(coords: np.ndarray, label: int, source_id: str = "") -> HandPose:
    """Build a HandPose from a 21x3 coordinate array."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape != (NUM_LANDMARKS, 3):
        raise ValueError(f"expected shape (21, 3), got {coords.shape}")
    points = tuple(Landmark(float(x), float(y), float(z)) for x, y, z in coords)
    return HandPose(points, label, source_id)


@dataclass(frozen=True)
class HandTopology:
    """Fixed node/edge structure of the hand graph plus the angle triples."""

    edges: tuple[tuple[int, int], ...] = HAND_EDGES
    angle_triples: tuple[tuple[int, int, int], ...] = ANGLE_TRIPLES

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < NUM_LANDMARKS and 0 <= j < NUM_LANDMARKS):
                raise ValueError(f"edge index out of range: ({i}, {j})")
            if i == j:
                raise ValueError(f"self edge: ({i}, {j})")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge: ({i}, {j})")
            seen.add(key)
        for a, b, c in self.angle_triples:
            for v in (a, b, c):
                if not 0 <= v < NUM_LANDMARKS:
                    raise ValueError(f"angle triple index out of range: ({a}, {b}, {c})")

    def angle_nodes(self) -> tuple[int, ...]:
        """Node indices that receive an angle feature (the middle landmarks)."""
        return tuple(b for _, b, _ in self.angle_triples)


HAND_TOPOLOGY = HandTopology()


@dataclass
class PoseGraph:
    """21x4 node-feature matrix (x, y, z, joint angle) plus the class label.

    Adjacency is implied by the fixed topology and never stored per sample.
    """

    node_features: np.ndarray
    label: int
    source_id: str = ""

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        if self.node_features.shape != (NUM_LANDMARKS, NUM_FEATURES):
            raise ValueError(f"expected 21x4 features, got {self.node_features.shape}")


def joint_angle(a, b, c) -> float:
    """Angle at landmark ``b`` between bones b->a and b->c, via the dot product.

    Returns radians in [0, pi].  The cosine is clamped to [-1, 1] before
    arccos because floating-point dots can escape the interval by ulps.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    u = a - b
    v = c - b
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < DEGENERATE_EPS or nv < DEGENERATE_EPS:
        raise DegenerateJoint(f"joint triple collapsed: |u|={nu:.3e}, |v|={nv:.3e}")
    cos = float(np.dot(u, v) / (nu * nv))
    cos = max(-1.0, min(1.0, cos))
    return float(np.arccos(cos))


def compute_joint_angles(pose: HandPose, topo: HandTopology = HAND_TOPOLOGY) -> np.ndarray:
    """Per-node angle vector: middle landmarks of each triple get their joint
    angle, every other node is exactly 0."""
    coords = pose.coords()
    angles = np.zeros(NUM_LANDMARKS, dtype=np.float64)
    for triple in topo.angle_triples:
        a, b, c = triple
        try:
            angles[b] = joint_angle(coords[a], coords[b], coords[c])
        except DegenerateJoint as exc:
            raise DegenerateJoint(
                f"degenerate joint at triple {triple}: {exc}", triple=triple,
                source_id=pose.source_id or None,
            ) from exc
    return angles


def translational_normalize(pose: HandPose) -> HandPose:
    """Subtract the wrist coordinate from every landmark."""
    coords = pose.coords()
    return pose_from_array(coords - coords[WRIST], pose.label, pose.source_id)


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    """All-pairs Euclidean distance matrix for an Nx3 coordinate array."""
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def scale_normalize(pose: HandPose, d_desired: float = 1.0) -> HandPose:
    """Scale all landmarks so the maximum pairwise distance equals d_desired."""
    if d_desired <= 0:
        raise ValueError(f"d_desired must be positive, got {d_desired}")
    coords = pose.coords()
    d_max = float(pairwise_distances(coords).max())
    if d_max < DEGENERATE_EPS:
        raise DegeneratePose(
            f"all landmarks coincident (d_max={d_max:.3e})",
            source_id=pose.source_id or None,
        )
    s = d_desired / d_max
    return pose_from_array(s * coords, pose.label, pose.source_id)


def build_adjacency(topo: HandTopology = HAND_TOPOLOGY) -> np.ndarray:
    """Binary 21x21 adjacency of the hand skeleton: symmetric, zero diagonal."""
    a = np.zeros((NUM_LANDMARKS, NUM_LANDMARKS), dtype=np.float64)
    for i, j in topo.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


def preprocess(
    pose: HandPose, d_desired: float = 1.0, topo: HandTopology = HAND_TOPOLOGY
) -> PoseGraph:
    """Full pipeline: angles on the raw pose, translate, scale, assemble 21x4."""
    angles = compute_joint_angles(pose, topo)
    normalized = scale_normalize(translational_normalize(pose), d_desired)
    features = np.concatenate([normalized.coords(), angles[:, None]], axis=1)
    return PoseGraph(features, pose.label, pose.source_id)
