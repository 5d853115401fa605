"""Rotations, rigid transforms, and the pinhole camera model.

Conventions used everywhere in this package:

* Camera frame: x right, y down, z forward along the optical axis.
  Pixels (u, v) grow right and down; u = fx*x/z + cx, v = fy*y/z + cy.
* Lengths are meters, angles radians, all arithmetic double precision.
* Rotations are stored as axis-angle vectors (direction = axis,
  norm = angle in radians); matrices are derived on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, InvalidRotationError

_TINY_ANGLE = 1e-8
_MIN_DEPTH = 0.0
_EYE3 = np.eye(3)


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of two 3-vectors (faster than np.cross for singles)."""
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def normalize(v: np.ndarray) -> np.ndarray:
    """Unit vector along v; raises on (near-)zero input."""
    v = np.asarray(v, dtype=float)
    n = float(np.sqrt(v @ v))
    if n < 1e-12:
        raise ValueError("cannot normalize a near-zero vector")
    return v / n


def rotation_to_matrix(rvec: np.ndarray) -> np.ndarray:
    """Rodrigues' formula: axis-angle vector to 3x3 rotation matrix."""
    r = np.asarray(rvec, dtype=float)
    theta = float(np.sqrt(r @ r))
    w = hat(r)
    if theta < _TINY_ANGLE:
        # second-order Taylor expansion of exp(w); error O(theta^3)
        return _EYE3 + w + 0.5 * (w @ w)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return _EYE3 + a * w + b * (w @ w)


def matrix_to_rotation(matrix: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a proper rotation matrix.

    The returned vector has norm in [0, pi]. Near pi the axis is
    recovered from the symmetric part of the matrix, which stays
    well conditioned where the skew part vanishes.
    """
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise InvalidRotationError("expected a finite 3x3 matrix")
    if np.max(np.abs(m @ m.T - _EYE3)) > 1e-6:
        raise InvalidRotationError("matrix is not orthonormal")
    # for an orthonormal matrix det is +-1; the triple product is cheap
    det = float(m[:, 0] @ cross3(m[:, 1], m[:, 2]))
    if det < 0.0:
        raise InvalidRotationError("matrix is a reflection (det -1)")
    return _matrix_log_unchecked(m)


def _matrix_log_unchecked(m: np.ndarray) -> np.ndarray:
    """matrix_to_rotation without validation, for known-good inputs."""
    # 2*sin(theta)*axis from the skew part, 2*cos(theta)+1 from the trace
    skew = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    sin_t = 0.5 * float(np.sqrt(skew @ skew))
    cos_t = 0.5 * (float(m[0, 0] + m[1, 1] + m[2, 2]) - 1.0)
    theta = float(np.arctan2(sin_t, cos_t))

    if theta < 1e-12:
        return 0.5 * skew
    if sin_t > 0.1 or cos_t > 0.0:
        # well conditioned except close to pi (sin small with cos near -1)
        return (theta / (2.0 * sin_t)) * skew

    # near pi: outer = (sym - cos*I) / (1 - cos) equals axis*axis^T
    outer = (0.5 * (m + m.T) - cos_t * _EYE3) / (1.0 - cos_t)
    k = int(np.argmax(np.diag(outer)))
    axis = outer[:, k] / np.sqrt(max(outer[k, k], 1e-18))
    axis = axis / np.linalg.norm(axis)
    if sin_t > 1e-9:
        if float(np.dot(axis, skew)) < 0.0:
            axis = -axis
    else:
        # angle is pi: both signs are valid, pick a canonical one
        for c in axis:
            if abs(c) > 1e-9:
                if c < 0.0:
                    axis = -axis
                break
    return theta * axis


def canonicalize_rotation(rvec: np.ndarray) -> np.ndarray:
    """Equivalent axis-angle vector with norm in [0, pi]."""
    r = np.asarray(rvec, dtype=float)
    theta = float(np.linalg.norm(r))
    if theta < 1e-12:
        return np.zeros(3)
    reduced = np.fmod(theta, 2.0 * np.pi)
    if reduced > np.pi:
        reduced -= 2.0 * np.pi
    return r * (reduced / theta)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters in pixels; no distortion model."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")
        if not np.all(np.isfinite([self.fx, self.fy, self.cx, self.cy])):
            raise ValueError("intrinsics must be finite")

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    def contains(self, pixel: np.ndarray) -> bool:
        u, v = float(pixel[0]), float(pixel[1])
        return 0.0 <= u < self.width and 0.0 <= v < self.height


def project(intrinsics: CameraIntrinsics, point: np.ndarray) -> np.ndarray:
    """Project one camera-frame point to a pixel; depth must be positive."""
    p = np.asarray(point, dtype=float)
    if p[2] <= _MIN_DEPTH:
        raise BehindCameraError(f"point depth {p[2]:.6g} <= 0")
    return np.array([
        intrinsics.fx * p[0] / p[2] + intrinsics.cx,
        intrinsics.fy * p[1] / p[2] + intrinsics.cy,
    ])


def project_points(intrinsics: CameraIntrinsics, points: np.ndarray) -> np.ndarray:
    """Project (N,3) camera-frame points to (N,2) pixels."""
    pts = np.asarray(points, dtype=float)
    z = pts[:, 2]
    if np.any(z <= _MIN_DEPTH):
        raise BehindCameraError("one or more points have non-positive depth")
    out = np.empty((pts.shape[0], 2))
    out[:, 0] = intrinsics.fx * pts[:, 0] / z + intrinsics.cx
    out[:, 1] = intrinsics.fy * pts[:, 1] / z + intrinsics.cy
    return out


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (axis-angle) followed by translation: p' = R(r) p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3)
        t = np.array(self.translation, dtype=float).reshape(3)
        # nan/inf propagate through the sum, so one scalar check suffices
        if not math.isfinite(float(r @ r) + float(t @ t)):
            raise ValueError("transform components must be finite")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, rot_matrix: np.ndarray, translation: np.ndarray) -> "RigidTransform":
        return cls(matrix_to_rotation(rot_matrix), translation)

    def matrix(self) -> np.ndarray:
        return rotation_to_matrix(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a (3,) point or (N,3) array of points."""
        rm = self.matrix()
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return rm @ pts + self.translation
        return pts @ rm.T + self.translation

    def inverse(self) -> "RigidTransform":
        rm = self.matrix()
        return RigidTransform(-self.rotation, -(rm.T @ self.translation))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying `other` first, then `self`."""
        ra, rb = self.matrix(), other.matrix()
        return RigidTransform(
            matrix_to_rotation(ra @ rb),
            ra @ other.translation + self.translation,
        )
