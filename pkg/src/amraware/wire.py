"""Newline-delimited frame messages: the boundary after the neural stages.

One JSON object per line, versioned schema, arrays index-aligned with
`KeypointId` (18 slots; the neck slot is normally null and derived
downstream). Absent keypoints are encoded explicitly as null.

Golden example lines live in the README and in tests/test_wire.py.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError, VersionError
from .skeleton import NUM_KEYPOINTS, CanonicalSkeleton3D, Skeleton2D

FRAME_SCHEMA = "frames/1"

_KNOWN_FRAME_FIELDS = {"schema", "t", "frame_index", "persons", "amr_offset_m"}
_KNOWN_PERSON_FIELDS = {"person_id", "confidence", "keypoints_2d", "keypoints_3d_canonical"}


@dataclass(frozen=True, eq=False)
class PersonRecord:
    person_id: int
    confidence: float
    skeleton2d: Skeleton2D
    canonical: CanonicalSkeleton3D


@dataclass(frozen=True, eq=False)
class FrameMessage:
    t: float
    frame_index: int
    persons: list[PersonRecord] = field(default_factory=list)
    amr_offset: np.ndarray | None = None


def _parse_person(raw: dict, where: str, unknown: list[str]) -> PersonRecord:
    for key in raw:
        if key not in _KNOWN_PERSON_FIELDS:
            unknown.append(key)
    try:
        person_id = int(raw["person_id"])
        confidence = float(raw["confidence"])
        kp2d = raw["keypoints_2d"]
        kp3d = raw["keypoints_3d_canonical"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad person record: {exc}") from exc
    if not (isinstance(kp2d, list) and isinstance(kp3d, list)
            and len(kp2d) == len(kp3d) == NUM_KEYPOINTS):
        raise SchemaError(f"{where}: keypoint arrays must have {NUM_KEYPOINTS} entries")

    try:
        flat2d = np.array([(math.nan, math.nan, 0.0) if e is None else e
                           for e in kp2d], dtype=float)
        flat3d = np.array([(math.nan, math.nan, math.nan) if e is None else e
                           for e in kp3d], dtype=float)
        if flat2d.shape != (NUM_KEYPOINTS, 3) or flat3d.shape != (NUM_KEYPOINTS, 3):
            raise ValueError("keypoint entries must be 3-element arrays")
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed keypoint entry: {exc}") from exc

    present2d = np.array([e is not None for e in kp2d])
    present3d = np.array([e is not None for e in kp3d])
    pixels = flat2d[:, :2]
    scores = np.where(present2d, flat2d[:, 2], 0.0)
    points = flat3d

    try:
        skel2d = Skeleton2D(pixels=pixels, scores=scores, present=present2d,
                            person_id=person_id, person_confidence=confidence)
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    canonical = CanonicalSkeleton3D(points=points, present=present3d,
                                    derived=np.zeros(NUM_KEYPOINTS, dtype=bool))
    return PersonRecord(person_id=person_id, confidence=confidence,
                        skeleton2d=skel2d, canonical=canonical)


class FrameParser:
    """Streaming frame-line parser; counts ignored unknown fields."""

    def __init__(self):
        self.unknown_field_count = 0
        self.unknown_fields: set[str] = set()

    def parse(self, line: str, line_number: int | None = None) -> FrameMessage:
        where = f"line {line_number}" if line_number is not None else "frame line"
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{where}: not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}: frame must be a JSON object")
        version = raw.get("schema")
        if version != FRAME_SCHEMA:
            raise VersionError(f"{where}: unsupported frame schema {version!r}, "
                               f"expected {FRAME_SCHEMA!r}")

        unknown: list[str] = []
        for key in raw:
            if key not in _KNOWN_FRAME_FIELDS:
                unknown.append(key)
        try:
            t = float(raw["t"])
            frame_index = int(raw["frame_index"])
            raw_persons = raw["persons"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{where}: missing or bad frame field: {exc}") from exc
        if not isinstance(raw_persons, list):
            raise SchemaError(f"{where}: 'persons' must be an array")

        persons = [_parse_person(p, where, unknown) for p in raw_persons]
        ids = [p.person_id for p in persons]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"{where}: duplicate person_id within the frame")

        amr_offset = None
        if raw.get("amr_offset_m") is not None:
            off = raw["amr_offset_m"]
            if not (isinstance(off, list) and len(off) == 3):
                raise SchemaError(f"{where}: amr_offset_m must be a 3-array")
            amr_offset = np.asarray([float(v) for v in off])

        if unknown:
            self.unknown_field_count += len(unknown)
            self.unknown_fields.update(unknown)
        return FrameMessage(t=t, frame_index=frame_index, persons=persons,
                            amr_offset=amr_offset)


def parse_frame(line: str, line_number: int | None = None) -> FrameMessage:
    """One-shot parse without unknown-field accounting."""
    return FrameParser().parse(line, line_number)


def _keypoint_lists(person: PersonRecord) -> tuple[list, list]:
    kp2d: list = []
    kp3d: list = []
    s2d, can = person.skeleton2d, person.canonical
    for i in range(NUM_KEYPOINTS):
        if s2d.present[i]:
            kp2d.append([float(s2d.pixels[i, 0]), float(s2d.pixels[i, 1]),
                         float(s2d.scores[i])])
        else:
            kp2d.append(None)
        if can.present[i]:
            kp3d.append([float(can.points[i, 0]), float(can.points[i, 1]),
                         float(can.points[i, 2])])
        else:
            kp3d.append(None)
    return kp2d, kp3d


def serialize_frame(msg: FrameMessage) -> str:
    """Deterministic single-line encoding; inverse of `parse_frame`."""
    doc: dict = {"schema": FRAME_SCHEMA, "t": float(msg.t),
                 "frame_index": int(msg.frame_index), "persons": []}
    for person in msg.persons:
        kp2d, kp3d = _keypoint_lists(person)
        doc["persons"].append({
            "person_id": person.person_id,
            "confidence": float(person.confidence),
            "keypoints_2d": kp2d,
            "keypoints_3d_canonical": kp3d,
        })
    if msg.amr_offset is not None:
        doc["amr_offset_m"] = [float(v) for v in msg.amr_offset]
    return json.dumps(doc, separators=(",", ":"))


def frames_equal(a: FrameMessage, b: FrameMessage) -> bool:
    """Structural equality helper (dataclass eq is disabled for arrays)."""
    if (a.t != b.t or a.frame_index != b.frame_index
            or len(a.persons) != len(b.persons)):
        return False
    if (a.amr_offset is None) != (b.amr_offset is None):
        return False
    if a.amr_offset is not None and not np.array_equal(a.amr_offset, b.amr_offset):
        return False
    for pa, pb in zip(a.persons, b.persons):
        if pa.person_id != pb.person_id or pa.confidence != pb.confidence:
            return False
        for xa, xb in ((pa.skeleton2d, pb.skeleton2d), (pa.canonical, pb.canonical)):
            if not np.array_equal(getattr(xa, "present"), getattr(xb, "present")):
                return False
        if not _masked_equal(pa.skeleton2d.pixels, pb.skeleton2d.pixels,
                             pa.skeleton2d.present):
            return False
        if not np.array_equal(pa.skeleton2d.scores, pb.skeleton2d.scores):
            return False
        if not _masked_equal(pa.canonical.points, pb.canonical.points,
                             pa.canonical.present):
            return False
    return True


def _masked_equal(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> bool:
    return bool(np.array_equal(x[mask], y[mask]))


def observation_to_frame(frame_index: int, t: float,
                         observation: tuple[Skeleton2D, CanonicalSkeleton3D] | None,
                         ) -> FrameMessage:
    """Wrap simulator output (possibly an empty detection) as a FrameMessage."""
    if observation is None:
        return FrameMessage(t=t, frame_index=frame_index, persons=[])
    skel2d, canonical = observation
    person = PersonRecord(person_id=skel2d.person_id,
                          confidence=skel2d.person_confidence,
                          skeleton2d=skel2d, canonical=canonical)
    return FrameMessage(t=t, frame_index=frame_index, persons=[person])
