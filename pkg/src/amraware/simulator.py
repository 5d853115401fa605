"""Analytic scenario simulator with a ground-truth awareness oracle.

Scripts a walking person and an advancing robot in a world frame
(z up, ground plane z = 0), synthesizes keypoint observations through
the pinhole camera mounted on the robot, and evaluates the awareness
equations on the exact geometry as an oracle for the estimation
pipeline.

Scenario files are JSON with a versioned header and explicit units in
the key names; see `scenario_from_dict` for the schema and
`data/fig2.json` for the shipped regression scenario.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterator

import numpy as np

from .awareness import (
    CAMERA_TO_ROBOT_AXES,
    AmrGeometry,
    AttentionCone,
    awareness_score,
    axial_distance,
    radial_offset,
)
from .errors import SchemaError, VersionError
from .geometry import CameraIntrinsics, RigidTransform, project
from .skeleton import (
    NUM_KEYPOINTS,
    CanonicalSkeleton3D,
    KeypointId,
    Skeleton2D,
    Skeleton3D,
    face_center,
    head_frame,
    synthesize_neck,
)

SCENARIO_SCHEMA = "scenario/1"

# Reference body, frozen so tests are reproducible. Heights are world z
# in meters for a standing person; lateral offsets are along the body's
# left axis, forward offsets along the facing direction.
_NECK_HEIGHT = 1.45
_NOSE_ABOVE_NECK = 0.18
_EAR_SPAN = 0.16
_EAR_BELOW_NOSE = 0.02
_EAR_BEHIND_NOSE = 0.09
_EYE_SPAN = 0.066
_EYE_ABOVE_NOSE = 0.03
_EYE_BEHIND_NOSE = 0.02
_SHOULDER_SPAN = 0.45

# (keypoint, forward, left, height) for the torso and limbs; these only
# feed diagnostics, never the head geometry.
_BODY_LAYOUT = (
    (KeypointId.LEFT_SHOULDER, 0.0, 0.225, 1.45),
    (KeypointId.RIGHT_SHOULDER, 0.0, -0.225, 1.45),
    (KeypointId.LEFT_ELBOW, 0.02, 0.25, 1.16),
    (KeypointId.RIGHT_ELBOW, 0.02, -0.25, 1.16),
    (KeypointId.LEFT_WRIST, 0.05, 0.26, 0.92),
    (KeypointId.RIGHT_WRIST, 0.05, -0.26, 0.92),
    (KeypointId.LEFT_HIP, 0.0, 0.16, 0.95),
    (KeypointId.RIGHT_HIP, 0.0, -0.16, 0.95),
    (KeypointId.LEFT_KNEE, 0.0, 0.14, 0.50),
    (KeypointId.RIGHT_KNEE, 0.0, -0.14, 0.50),
    (KeypointId.LEFT_ANKLE, 0.0, 0.12, 0.08),
    (KeypointId.RIGHT_ANKLE, 0.0, -0.12, 0.08),
)


def skeleton_at(position: np.ndarray, heading: float, head_yaw: float) -> Skeleton3D:
    """World-frame reference body at the given ground position and heading.

    The head segment (nose, eyes, ears) is rotated by `head_yaw` about
    the vertical axis through the neck, relative to the body heading.
    The nose sits on that axis, so the gaze of the emitted skeleton is
    horizontal and points along heading + yaw.
    """
    pos = np.asarray(position, dtype=float)
    body_fwd = np.array([math.cos(heading), math.sin(heading), 0.0])
    body_left = np.array([-math.sin(heading), math.cos(heading), 0.0])
    up = np.array([0.0, 0.0, 1.0])

    face = heading + head_yaw
    head_fwd = np.array([math.cos(face), math.sin(face), 0.0])
    head_left = np.array([-math.sin(face), math.cos(face), 0.0])

    pts = np.full((NUM_KEYPOINTS, 3), np.nan)
    present = np.zeros(NUM_KEYPOINTS, dtype=bool)

    neck = pos + _NECK_HEIGHT * up
    nose = neck + _NOSE_ABOVE_NECK * up
    pts[KeypointId.NOSE] = nose
    ear_base = nose - _EAR_BELOW_NOSE * up - _EAR_BEHIND_NOSE * head_fwd
    pts[KeypointId.LEFT_EAR] = ear_base + 0.5 * _EAR_SPAN * head_left
    pts[KeypointId.RIGHT_EAR] = ear_base - 0.5 * _EAR_SPAN * head_left
    eye_base = nose + _EYE_ABOVE_NOSE * up - _EYE_BEHIND_NOSE * head_fwd
    pts[KeypointId.LEFT_EYE] = eye_base + 0.5 * _EYE_SPAN * head_left
    pts[KeypointId.RIGHT_EYE] = eye_base - 0.5 * _EYE_SPAN * head_left
    present[[KeypointId.NOSE, KeypointId.LEFT_EAR, KeypointId.RIGHT_EAR,
             KeypointId.LEFT_EYE, KeypointId.RIGHT_EYE]] = True

    for kid, fwd, left, height in _BODY_LAYOUT:
        pts[kid] = pos + fwd * body_fwd + left * body_left + height * up
        present[kid] = True

    return Skeleton3D(points=pts, present=present,
                      derived=np.zeros(NUM_KEYPOINTS, dtype=bool))


@dataclass(frozen=True)
class TrajectorySpec:
    """Piecewise-linear track: times (K,), positions (K,3), headings (K,) rad."""

    times: np.ndarray
    positions: np.ndarray
    headings: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0.0):
            raise SchemaError("waypoint times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions",
                           np.asarray(self.positions, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "headings", np.asarray(self.headings, dtype=float))

    def pose_at(self, t: float) -> tuple[np.ndarray, float]:
        pos = np.array([np.interp(t, self.times, self.positions[:, i]) for i in range(3)])
        heading = float(np.interp(t, self.times, self.headings))
        return pos, heading


@dataclass(frozen=True)
class HeadYawProfile:
    """Head yaw over time, relative to the body heading.

    Either a sinusoid (amplitude, period, phase) or linear keyframes;
    keyframe values hold beyond their time range.
    """

    kind: str
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0
    times: np.ndarray | None = None
    yaws: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "sinusoid":
            if not abs(self.amplitude) < math.pi:
                raise SchemaError("sinusoid amplitude must be below pi")
            if self.period <= 0.0:
                raise SchemaError("sinusoid period must be positive")
        elif self.kind == "keyframes":
            t = np.asarray(self.times, dtype=float)
            y = np.asarray(self.yaws, dtype=float)
            if t.ndim != 1 or t.size < 1 or t.size != y.size or np.any(np.diff(t) <= 0.0):
                raise SchemaError("yaw keyframes need matching, strictly increasing times")
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "yaws", y)
        else:
            raise SchemaError(f"unknown head yaw profile kind: {self.kind!r}")

    def yaw_at(self, t: float) -> float:
        if self.kind == "sinusoid":
            return self.amplitude * math.sin(2.0 * math.pi * t / self.period + self.phase)
        return float(np.interp(t, self.times, self.yaws))


@dataclass(frozen=True)
class NoiseSpec:
    """i.i.d. Gaussian pixel/canonical noise plus Bernoulli keypoint dropout."""

    pixel_sigma: float = 0.0
    canonical_sigma: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        if min(self.pixel_sigma, self.canonical_sigma, self.dropout_prob) < 0.0:
            raise SchemaError("noise parameters must be non-negative")
        if self.dropout_prob > 1.0:
            raise SchemaError("dropout probability must be at most 1")


@dataclass(frozen=True)
class Scenario:
    """Deterministic script of human, head yaw, robot, camera, and noise."""

    name: str
    duration: float
    fps: float
    human_track: TrajectorySpec
    head_yaw: HeadYawProfile
    amr_track: TrajectorySpec
    camera_elevation: float
    camera_forward: float
    intrinsics: CameraIntrinsics
    theta_fov_full: float
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    amr_reference_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.duration > 0.0 and self.fps > 0.0):
            raise SchemaError("duration and fps must be positive")
        if not 0.0 < self.theta_fov_full < math.pi:
            raise SchemaError("full FOV angle must lie in (0, pi)")
        for track in (self.human_track, self.amr_track):
            if abs(track.times[0]) > 1e-9 or abs(track.times[-1] - self.duration) > 1e-9:
                raise SchemaError("track waypoints must span [0, duration]")
        object.__setattr__(self, "amr_reference_offset",
                           np.asarray(self.amr_reference_offset, dtype=float).reshape(3))

    @property
    def frame_count(self) -> int:
        return int(round(self.duration * self.fps))

    @property
    def half_angle(self) -> float:
        return 0.5 * self.theta_fov_full

    def amr_geometry(self) -> AmrGeometry:
        return AmrGeometry(camera_offset=self.amr_reference_offset)

    def time_of(self, frame_index: int) -> float:
        return frame_index / self.fps

    def camera_transform(self, t: float) -> RigidTransform:
        """World-to-camera transform at time t (camera rigid on the robot)."""
        pos, heading = self.amr_track.pose_at(t)
        fwd = np.array([math.cos(heading), math.sin(heading), 0.0])
        left = np.array([-math.sin(heading), math.cos(heading), 0.0])
        basis = np.column_stack([fwd, left, np.array([0.0, 0.0, 1.0])])
        cam_in_robot = np.array([self.camera_forward, 0.0, self.camera_elevation])
        rot = CAMERA_TO_ROBOT_AXES.T @ basis.T
        trans = -rot @ pos - CAMERA_TO_ROBOT_AXES.T @ cam_in_robot
        return RigidTransform.from_matrix(rot, trans)

    def human_state(self, t: float) -> tuple[np.ndarray, float, float]:
        pos, heading = self.human_track.pose_at(t)
        return pos, heading, self.head_yaw.yaw_at(t)


@dataclass(frozen=True)
class GroundTruthRecord:
    """Exact per-frame geometry: the validation oracle."""

    t: float
    frame_index: int
    alpha: float
    d_axial: float
    d_perp: float
    d_fwd: float
    d_lat: float
    head_pose_world: RigidTransform
    head_pose_camera: RigidTransform
    pixels: np.ndarray
    pixel_present: np.ndarray
    metric_points: np.ndarray
    present: np.ndarray


def _world_skeleton(scenario: Scenario, t: float) -> Skeleton3D:
    pos, heading, yaw = scenario.human_state(t)
    return skeleton_at(pos, heading, yaw)


def observe(scenario: Scenario, frame_index: int
            ) -> tuple[Skeleton2D, CanonicalSkeleton3D] | None:
    """Synthetic detector output for one frame, or None when off-screen.

    Deterministic given (seed, frame_index): one generator per frame and
    a fixed draw order over keypoints, so dropout never shifts the noise
    applied to other keypoints.
    """
    t = scenario.time_of(frame_index)
    skel = _world_skeleton(scenario, t)
    cam_points = scenario.camera_transform(t).apply(skel.points)

    nose_cam = cam_points[KeypointId.NOSE]
    if nose_cam[2] <= 0.0:
        return None
    if not scenario.intrinsics.contains(project(scenario.intrinsics, nose_cam)):
        return None

    ls, rs = KeypointId.LEFT_SHOULDER, KeypointId.RIGHT_SHOULDER
    span = float(np.linalg.norm(cam_points[ls] - cam_points[rs]))

    n_obs = NUM_KEYPOINTS - 1  # neck is derived downstream, never observed
    rng = np.random.default_rng([scenario.seed, frame_index])
    pixel_noise = rng.normal(size=(n_obs, 2))
    canonical_noise = rng.normal(size=(n_obs, 3))
    dropout_draw = rng.uniform(size=n_obs)

    pixels = np.full((NUM_KEYPOINTS, 2), np.nan)
    scores = np.zeros(NUM_KEYPOINTS)
    present2d = np.zeros(NUM_KEYPOINTS, dtype=bool)
    canonical = np.full((NUM_KEYPOINTS, 3), np.nan)
    present3d = np.zeros(NUM_KEYPOINTS, dtype=bool)

    for kid in range(n_obs):
        if not skel.present[kid] or cam_points[kid, 2] <= 0.0:
            continue
        if dropout_draw[kid] < scenario.noise.dropout_prob:
            continue
        pixels[kid] = project(scenario.intrinsics, cam_points[kid])
        pixels[kid] += scenario.noise.pixel_sigma * pixel_noise[kid]
        scores[kid] = 1.0
        present2d[kid] = True
        canonical[kid] = cam_points[kid] / span \
            + scenario.noise.canonical_sigma * canonical_noise[kid]
        present3d[kid] = True

    skel2d = Skeleton2D(pixels=pixels, scores=scores, present=present2d,
                        person_id=0, person_confidence=1.0)
    skel3d = CanonicalSkeleton3D(points=canonical, present=present3d,
                                 derived=np.zeros(NUM_KEYPOINTS, dtype=bool))
    return skel2d, skel3d


def ground_truth(scenario: Scenario, frame_index: int) -> GroundTruthRecord:
    """Awareness equations evaluated on the exact world geometry."""
    t = scenario.time_of(frame_index)
    skel = synthesize_neck(_world_skeleton(scenario, t))
    frame = head_frame(skel)
    apex = face_center(skel)

    world_to_cam = scenario.camera_transform(t)
    amr = scenario.amr_geometry()
    p_ref_world = world_to_cam.inverse().apply(amr.reference_point_in_camera())

    cone = AttentionCone(apex=apex, axis=frame.y_hat, half_angle=scenario.half_angle)
    alpha = awareness_score(cone, p_ref_world)

    cam_to_ref = amr.camera_to_reference()
    nose_ref = cam_to_ref.apply(world_to_cam.apply(frame.origin))

    head_world = RigidTransform.from_matrix(frame.basis(), frame.origin)
    head_cam = world_to_cam.compose(head_world)

    cam_points = world_to_cam.apply(skel.points)
    pixels = np.full((NUM_KEYPOINTS, 2), np.nan)
    pixel_present = np.zeros(NUM_KEYPOINTS, dtype=bool)
    for kid in range(NUM_KEYPOINTS):
        if skel.present[kid] and cam_points[kid, 2] > 0.0:
            pixels[kid] = project(scenario.intrinsics, cam_points[kid])
            pixel_present[kid] = True
    metric = cam_points - cam_points[KeypointId.NOSE]

    return GroundTruthRecord(
        t=t, frame_index=frame_index, alpha=float(alpha),
        d_axial=axial_distance(cone, p_ref_world),
        d_perp=radial_offset(cone, p_ref_world),
        d_fwd=float(nose_ref[0]), d_lat=float(nose_ref[1]),
        head_pose_world=head_world, head_pose_camera=head_cam,
        pixels=pixels, pixel_present=pixel_present,
        metric_points=metric, present=skel.present.copy())


def run_scenario(scenario: Scenario) -> Iterator[
        tuple[int, float, tuple[Skeleton2D, CanonicalSkeleton3D] | None, GroundTruthRecord]]:
    """Yield (frame_index, t, observation-or-None, ground truth) in time order."""
    for i in range(scenario.frame_count):
        yield i, scenario.time_of(i), observe(scenario, i), ground_truth(scenario, i)


def _track_from_dict(data: dict, what: str) -> TrajectorySpec:
    try:
        wps = data["waypoints"]
        times = [float(w["t_s"]) for w in wps]
        positions = [[float(w["x_m"]), float(w["y_m"]), float(w.get("z_m", 0.0))]
                     for w in wps]
        headings = [math.radians(float(w["heading_deg"])) for w in wps]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad {what} waypoints: {exc}") from exc
    return TrajectorySpec(times=np.asarray(times), positions=np.asarray(positions),
                          headings=np.asarray(headings))


def _yaw_from_dict(data: dict) -> HeadYawProfile:
    if "sinusoid" in data:
        s = data["sinusoid"]
        return HeadYawProfile(kind="sinusoid",
                              amplitude=math.radians(float(s["amplitude_deg"])),
                              period=float(s["period_s"]),
                              phase=math.radians(float(s.get("phase_deg", 0.0))))
    if "keyframes" in data:
        kfs = data["keyframes"]
        return HeadYawProfile(kind="keyframes",
                              times=np.array([float(k["t_s"]) for k in kfs]),
                              yaws=np.array([math.radians(float(k["yaw_deg"])) for k in kfs]))
    raise SchemaError("head_yaw needs either 'sinusoid' or 'keyframes'")


def scenario_from_dict(data: dict) -> Scenario:
    """Validate and build a Scenario from a parsed scenario document."""
    if not isinstance(data, dict):
        raise SchemaError("scenario document must be an object")
    version = data.get("schema")
    if version != SCENARIO_SCHEMA:
        raise VersionError(f"unsupported scenario schema {version!r}, "
                           f"expected {SCENARIO_SCHEMA!r}")
    try:
        intr = data["intrinsics"]
        intrinsics = CameraIntrinsics(
            fx=float(intr["fx"]), fy=float(intr["fy"]),
            cx=float(intr["cx"]), cy=float(intr["cy"]),
            width=int(intr["width"]), height=int(intr["height"]))
        mount = data.get("camera_mount", {})
        noise = data.get("noise", {})
        scenario = Scenario(
            name=str(data.get("name", "scenario")),
            duration=float(data["duration_s"]),
            fps=float(data["fps"]),
            human_track=_track_from_dict(data["human_track"], "human_track"),
            head_yaw=_yaw_from_dict(data["head_yaw"]),
            amr_track=_track_from_dict(data["amr_track"], "amr_track"),
            camera_elevation=float(mount.get("elevation_m", 0.0)),
            camera_forward=float(mount.get("forward_m", 0.0)),
            intrinsics=intrinsics,
            theta_fov_full=math.radians(float(data.get("theta_fov_full_deg", 120.0))),
            noise=NoiseSpec(
                pixel_sigma=float(noise.get("pixel_sigma_px", 0.0)),
                canonical_sigma=float(noise.get("canonical_sigma", 0.0)),
                dropout_prob=float(noise.get("dropout_prob", 0.0))),
            seed=int(data.get("seed", 0)),
            amr_reference_offset=np.asarray(
                data.get("amr_reference_offset_m", [0.0, 0.0, 0.0]), dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid scenario file: {exc}") from exc
    return scenario


def builtin_scenario_names() -> list[str]:
    files = resources.files("amraware.data")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json")
                  and p.name != "anthropometry.json")


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Load a scenario by builtin name (e.g. 'fig2') or from a JSON file."""
    name = str(name_or_path)
    if "/" not in name and "\\" not in name and not name.endswith(".json"):
        ref = resources.files("amraware.data").joinpath(f"{name}.json")
        if ref.is_file():
            return scenario_from_dict(json.loads(ref.read_text()))
        raise SchemaError(f"unknown builtin scenario {name!r}; "
                          f"available: {', '.join(builtin_scenario_names())}")
    try:
        text = Path(name_or_path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read scenario file {name_or_path}: {exc}") from exc
    try:
        return scenario_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scenario file is not valid JSON: {exc}") from exc


def scenario_with_noise(scenario: Scenario, noise: NoiseSpec, seed: int | None = None) -> Scenario:
    """Copy of `scenario` with the noise model (and optionally seed) replaced."""
    if seed is None:
        return replace(scenario, noise=noise)
    return replace(scenario, noise=noise, seed=seed)
