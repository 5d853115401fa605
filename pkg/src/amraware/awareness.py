"""Attention-cone model and the continuous awareness score.

The person's field of view is a right circular cone with apex at the
face center and axis along the gaze. For a robot at point p the signed
axial distance is d = (p - apex) . axis, the radial offset is the
distance from p to the cone axis, and the score is

    alpha = 1 - radial / (d * tan(half_angle))   if d > 0 and inside,
    alpha = 0                                    otherwise.

Angle convention: `half_angle` is the cone's half-angle. Configuration
values describing a full field-of-view angle must be halved before
constructing a cone (`PipelineConfig` does this at parse time); the
radius formula r(d) = d*tan(half_angle) then agrees with membership
"angular offset <= half of the full FOV".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotInFrontError
from .geometry import RigidTransform, matrix_to_rotation, rotation_to_matrix
from .pnp import PnPSolution

# Camera axes (x right, y down, z forward) mapped to robot reference axes
# (x forward, y left, z up).
CAMERA_TO_ROBOT_AXES = np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
])


@dataclass(frozen=True)
class AttentionCone:
    """Field-of-view cone: apex (m), unit gaze axis, half-angle (rad)."""

    apex: np.ndarray
    axis: np.ndarray
    half_angle: float

    def __post_init__(self):
        apex = np.asarray(self.apex, dtype=float).reshape(3)
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > 1e-9:
            if norm < 1e-12:
                raise ValueError("cone axis must be nonzero")
            axis = axis / norm
        if not 0.0 < self.half_angle < 0.5 * math.pi:
            raise ValueError("half angle must lie in (0, pi/2)")
        object.__setattr__(self, "apex", apex)
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True)
class AmrGeometry:
    """Where the robot reference point sits relative to its camera.

    The reference frame has robot axes (x forward, y left, z up);
    `camera_offset` is the camera position expressed in that frame. The
    default (zero offset) puts the reference point at the camera itself.
    """

    camera_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        off = np.asarray(self.camera_offset, dtype=float).reshape(3)
        if not np.all(np.isfinite(off)):
            raise ValueError("camera offset must be finite")
        object.__setattr__(self, "camera_offset", off)

    def camera_to_reference(self) -> RigidTransform:
        return RigidTransform(matrix_to_rotation(CAMERA_TO_ROBOT_AXES),
                              self.camera_offset)

    def reference_point_in_camera(self) -> np.ndarray:
        return -(CAMERA_TO_ROBOT_AXES.T @ self.camera_offset)


@dataclass(frozen=True)
class AwarenessSample:
    """Per-frame output for one person."""

    t: float
    person_id: int
    alpha: float
    d_axial: float
    d_perp: float
    d_fwd: float
    d_lat: float
    head_pose: RigidTransform | None
    converged: bool


def axial_distance(cone: AttentionCone, point: np.ndarray) -> float:
    """Signed distance of `point` along the gaze axis; negative behind."""
    return float(np.dot(np.asarray(point, dtype=float) - cone.apex, cone.axis))


def radial_offset(cone: AttentionCone, point: np.ndarray) -> float:
    """Shortest distance from `point` to the central axis of the cone."""
    v = np.asarray(point, dtype=float) - cone.apex
    d = float(np.dot(v, cone.axis))
    return float(np.linalg.norm(v - d * cone.axis))


def cone_radius(cone: AttentionCone, d: float) -> float:
    """Cone radius r(d) = d * tan(half_angle) at axial distance d > 0."""
    if d <= 0.0:
        raise NotInFrontError(f"cone radius undefined at axial distance {d:.6g}")
    return d * math.tan(cone.half_angle)


def awareness_score(cone: AttentionCone, point: np.ndarray) -> float:
    """Continuous awareness in [0, 1]; total function of cone and point.

    1 on the axis in front of the face, falling linearly in the
    fractional radial displacement, 0 outside the cone or behind the
    gaze plane (boundary included).
    """
    v = np.asarray(point, dtype=float) - cone.apex
    d = float(np.dot(v, cone.axis))
    if d <= 0.0:
        return 0.0
    perp = float(np.linalg.norm(v - d * cone.axis))
    radius = d * math.tan(cone.half_angle)
    if perp >= radius:
        return 0.0
    return 1.0 - perp / radius


def amr_in_head_frame(head_pose: RigidTransform, amr: AmrGeometry) -> np.ndarray:
    """Robot reference point expressed in head coordinates.

    `head_pose` maps head coordinates to the camera frame, so the inverse
    map is p_head = R^T (p_cam - t).
    """
    p_cam = amr.reference_point_in_camera()
    rm = rotation_to_matrix(head_pose.rotation)
    return rm.T @ (p_cam - head_pose.translation)


def human_position_robot_frame(head_pose: RigidTransform,
                               amr: AmrGeometry) -> tuple[float, float]:
    """(forward, lateral) position of the head in the robot reference frame.

    Positive lateral means the person is to the robot's left.
    """
    p_ref = CAMERA_TO_ROBOT_AXES @ head_pose.translation + amr.camera_offset
    return float(p_ref[0]), float(p_ref[1])


@dataclass(frozen=True)
class HeadResult:
    """Per-person head geometry handed to `evaluate_frame`.

    `face_center_head` is the cone apex in head coordinates; it is None
    (together with `solution`) when upstream processing was degenerate.
    """

    person_id: int
    solution: PnPSolution | None
    face_center_head: np.ndarray | None


def evaluate_frame(results: list[HeadResult], amr: AmrGeometry,
                   half_angle: float, t: float) -> list[AwarenessSample]:
    """Fuse head poses and robot geometry into per-person awareness samples.

    Persons whose pose did not converge get alpha 0 with converged=False;
    degenerate persons additionally carry NaN distances. Output is ordered
    by person id and a frame never aborts on a bad person.
    """
    samples = []
    for r in sorted(results, key=lambda h: h.person_id):
        if r.solution is None:
            samples.append(AwarenessSample(
                t=t, person_id=r.person_id, alpha=0.0,
                d_axial=math.nan, d_perp=math.nan,
                d_fwd=math.nan, d_lat=math.nan,
                head_pose=None, converged=False))
            continue
        pose = r.solution.pose
        cone = AttentionCone(apex=r.face_center_head,
                             axis=np.array([0.0, 1.0, 0.0]),
                             half_angle=half_angle)
        p_a = amr_in_head_frame(pose, amr)
        d_fwd, d_lat = human_position_robot_frame(pose, amr)
        alpha = awareness_score(cone, p_a) if r.solution.converged else 0.0
        samples.append(AwarenessSample(
            t=t, person_id=r.person_id, alpha=float(alpha),
            d_axial=axial_distance(cone, p_a), d_perp=radial_offset(cone, p_a),
            d_fwd=d_fwd, d_lat=d_lat,
            head_pose=pose, converged=r.solution.converged))
    return samples
