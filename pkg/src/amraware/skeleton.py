"""Keypoint schema, metric rescaling, and head-frame construction.

Skeletons are stored as (18,*) arrays indexed by `KeypointId` (the 17
COCO body joints plus a derived neck slot) together with a presence
mask, which keeps per-frame processing allocation-light.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DegenerateHeadError, DegenerateSkeletonError
from .geometry import cross3, normalize

DEFAULT_CONFIDENCE_THRESHOLD = 0.3


class KeypointId(IntEnum):
    NOSE = 0
    LEFT_EYE = 1
    RIGHT_EYE = 2
    LEFT_EAR = 3
    RIGHT_EAR = 4
    LEFT_SHOULDER = 5
    RIGHT_SHOULDER = 6
    LEFT_ELBOW = 7
    RIGHT_ELBOW = 8
    LEFT_WRIST = 9
    RIGHT_WRIST = 10
    LEFT_HIP = 11
    RIGHT_HIP = 12
    LEFT_KNEE = 13
    RIGHT_KNEE = 14
    LEFT_ANKLE = 15
    RIGHT_ANKLE = 16
    NECK = 17


NUM_KEYPOINTS = len(KeypointId)

FACE_KEYPOINTS = (
    KeypointId.NOSE,
    KeypointId.LEFT_EYE,
    KeypointId.RIGHT_EYE,
    KeypointId.LEFT_EAR,
    KeypointId.RIGHT_EAR,
)


def _default_limbs() -> dict:
    # Standard adult averages; diagnostics only, never used for the
    # shoulder-anchored global scale.
    return {
        "upper_arm": 0.30,
        "forearm": 0.26,
        "thigh": 0.42,
        "shank": 0.40,
        "hip_width": 0.32,
        "torso": 0.52,
    }


@dataclass(frozen=True)
class AnthropometricTable:
    """Average segment lengths in meters; shoulder span anchors the scale."""

    shoulder_span: float = 0.45
    ear_span: float = 0.16
    nose_to_neck: float = 0.18
    limb_lengths: Mapping[str, float] = field(default_factory=_default_limbs)

    def __post_init__(self):
        values = [self.shoulder_span, self.ear_span, self.nose_to_neck]
        values += list(self.limb_lengths.values())
        if any(not (v > 0.0) for v in values):
            raise ValueError("anthropometric lengths must be positive")

    @classmethod
    def load(cls, path: str | Path) -> "AnthropometricTable":
        """Read a JSON table of `{segment_name: meters}` overriding defaults."""
        data = json.loads(Path(path).read_text())
        named = {k: data.pop(k) for k in ("shoulder_span", "ear_span", "nose_to_neck") if k in data}
        limbs = _default_limbs()
        limbs.update(data)
        return cls(limb_lengths=limbs, **named)


@dataclass(frozen=True)
class Skeleton2D:
    """Per-person 2D keypoints: (18,2) pixels, (18,) scores and presence."""

    pixels: np.ndarray
    scores: np.ndarray
    present: np.ndarray
    person_id: int = 0
    person_confidence: float = 1.0

    def __post_init__(self):
        marked = self.scores[self.present]
        if marked.size and (float(marked.min()) < 0.0 or float(marked.max()) > 1.0):
            raise ValueError("keypoint scores must lie in [0, 1]")
        if not 0.0 <= self.person_confidence <= 1.0:
            raise ValueError("person confidence must lie in [0, 1]")


@dataclass(frozen=True)
class Skeleton3D:
    """3D keypoints: (18,3) points with presence and derived-joint masks."""

    points: np.ndarray
    present: np.ndarray
    derived: np.ndarray

    def point(self, kid: KeypointId) -> np.ndarray:
        if not self.present[kid]:
            raise KeyError(f"keypoint {kid.name} is absent")
        return self.points[kid]


@dataclass(frozen=True)
class CanonicalSkeleton3D(Skeleton3D):
    """Unitless lifter output, defined only up to scale."""


@dataclass(frozen=True)
class MetricSkeleton3D(Skeleton3D):
    """Meters, nose-centered; produced by `rescale_to_metric`."""


def empty_skeleton2d(person_id: int = 0, person_confidence: float = 1.0) -> Skeleton2D:
    return Skeleton2D(
        pixels=np.full((NUM_KEYPOINTS, 2), np.nan),
        scores=np.zeros(NUM_KEYPOINTS),
        present=np.zeros(NUM_KEYPOINTS, dtype=bool),
        person_id=person_id,
        person_confidence=person_confidence,
    )


def skeleton3d_from_points(points: Mapping[KeypointId, np.ndarray],
                           cls=Skeleton3D) -> Skeleton3D:
    """Build a skeleton from a {KeypointId: xyz} mapping (tests, simulator)."""
    arr = np.full((NUM_KEYPOINTS, 3), np.nan)
    present = np.zeros(NUM_KEYPOINTS, dtype=bool)
    for kid, p in points.items():
        arr[kid] = np.asarray(p, dtype=float)
        present[kid] = True
    return cls(points=arr, present=present, derived=np.zeros(NUM_KEYPOINTS, dtype=bool))


def gate_by_confidence(skel: Skeleton2D,
                       threshold: float = DEFAULT_CONFIDENCE_THRESHOLD) -> Skeleton2D:
    """Treat keypoints scored below `threshold` as missing."""
    keep = skel.present & (skel.scores >= threshold)
    if np.array_equal(keep, skel.present):
        return skel
    return replace(skel, present=keep)


def synthesize_neck_2d(skel: Skeleton2D) -> Skeleton2D:
    """Add a neck pixel at the shoulder midpoint when absent; no-op otherwise."""
    ls, rs, neck = KeypointId.LEFT_SHOULDER, KeypointId.RIGHT_SHOULDER, KeypointId.NECK
    if skel.present[neck] or not (skel.present[ls] and skel.present[rs]):
        return skel
    pixels = skel.pixels.copy()
    scores = skel.scores.copy()
    present = skel.present.copy()
    pixels[neck] = 0.5 * (pixels[ls] + pixels[rs])
    scores[neck] = min(scores[ls], scores[rs])
    present[neck] = True
    return replace(skel, pixels=pixels, scores=scores, present=present)


def synthesize_neck(skel: Skeleton3D) -> Skeleton3D:
    """Add a neck joint at the shoulder midpoint, flagged as derived.

    An explicit neck keypoint is never overwritten.
    """
    ls, rs, neck = KeypointId.LEFT_SHOULDER, KeypointId.RIGHT_SHOULDER, KeypointId.NECK
    if skel.present[neck]:
        return skel
    if not (skel.present[ls] and skel.present[rs]):
        raise DegenerateSkeletonError("both shoulders required to synthesize the neck")
    points = skel.points.copy()
    present = skel.present.copy()
    derived = skel.derived.copy()
    points[neck] = 0.5 * (points[ls] + points[rs])
    present[neck] = True
    derived[neck] = True
    return replace(skel, points=points, present=present, derived=derived)


def rescale_to_metric(skel: CanonicalSkeleton3D,
                      table: AnthropometricTable | None = None) -> MetricSkeleton3D:
    """Rescale canonical keypoints to meters and center them on the nose.

    One global scale is anchored on the shoulder span so the skeleton
    shape (and in particular the rigid head geometry) is preserved.
    """
    table = table or AnthropometricTable()
    ls, rs, nose = KeypointId.LEFT_SHOULDER, KeypointId.RIGHT_SHOULDER, KeypointId.NOSE
    if not (skel.present[ls] and skel.present[rs]):
        raise DegenerateSkeletonError("shoulder pair required for metric rescaling")
    if not skel.present[nose]:
        raise DegenerateSkeletonError("nose required for recentering")
    diff = skel.points[ls] - skel.points[rs]
    span = float(np.sqrt(diff @ diff))
    if span < 1e-9:
        raise DegenerateSkeletonError("coincident shoulders: canonical span is zero")
    scale = table.shoulder_span / span
    points = skel.points * scale
    points = points - points[nose]
    points[~skel.present] = np.nan
    return MetricSkeleton3D(points=points, present=skel.present.copy(),
                            derived=skel.derived.copy())


def _require_head_points(skel: Skeleton3D) -> None:
    needed = (KeypointId.NOSE, KeypointId.LEFT_EAR, KeypointId.RIGHT_EAR, KeypointId.NECK)
    missing = [k.name for k in needed if not skel.present[k]]
    if missing:
        raise DegenerateHeadError(f"missing head keypoints: {', '.join(missing)}")


def initial_gaze(skel: Skeleton3D) -> np.ndarray:
    """Unit gaze direction from the ear axis crossed with the neck-to-nose axis.

    The sign is fixed so the gaze exits through the face, i.e. it has
    positive dot product with the vector from the ear midpoint to the nose.
    """
    _require_head_points(skel)
    le = skel.points[KeypointId.LEFT_EAR]
    re = skel.points[KeypointId.RIGHT_EAR]
    nose = skel.points[KeypointId.NOSE]
    neck = skel.points[KeypointId.NECK]

    ear_axis = le - re
    up_axis = nose - neck
    if float(ear_axis @ ear_axis) < 1e-18:
        raise DegenerateHeadError("coincident ears")
    if float(up_axis @ up_axis) < 1e-18:
        raise DegenerateHeadError("nose coincides with neck")
    g = cross3(normalize(ear_axis), normalize(up_axis))
    if float(g @ g) < 1e-18:
        raise DegenerateHeadError("ear axis parallel to the neck-nose axis")
    g = normalize(g)

    outward = nose - 0.5 * (le + re)
    facing = float(np.dot(g, outward))
    if abs(facing) < 1e-12:
        raise DegenerateHeadError("nose lies in the gaze-normal plane of the ears")
    return -g if facing < 0.0 else g


@dataclass(frozen=True)
class HeadFrame:
    """Right-handed orthonormal head basis; y_hat is the forward gaze."""

    x_hat: np.ndarray
    y_hat: np.ndarray
    z_hat: np.ndarray
    origin: np.ndarray

    def basis(self) -> np.ndarray:
        """Columns [x_hat y_hat z_hat]; maps head coordinates outward."""
        return np.column_stack([self.x_hat, self.y_hat, self.z_hat])


def head_frame(skel: Skeleton3D) -> HeadFrame:
    """Orthonormal head frame with the gaze axis kept exact.

    The ear axis is Gram-Schmidt projected against the gaze so that the
    awareness-driving y axis is never perturbed; x completes the
    right-handed triad. Origin is the nose.
    """
    g = initial_gaze(skel)
    le = skel.points[KeypointId.LEFT_EAR]
    re = skel.points[KeypointId.RIGHT_EAR]
    z = normalize(re - le)
    z = z - float(z @ g) * g
    if float(z @ z) < 1e-18:
        raise DegenerateHeadError("ear axis collapses onto the gaze axis")
    z = normalize(z)
    x = cross3(g, z)
    return HeadFrame(x_hat=x, y_hat=g, z_hat=z,
                     origin=skel.points[KeypointId.NOSE].copy())


def face_center(skel: Skeleton3D) -> np.ndarray:
    """Centroid of the available face keypoints (nose, eyes, ears)."""
    ids = [k for k in FACE_KEYPOINTS if skel.present[k]]
    if len(ids) < 3:
        raise DegenerateHeadError(f"only {len(ids)} face keypoints present, need 3")
    return skel.points[ids].mean(axis=0)
