"""Head pose from 2D/3D correspondences by reprojection-error minimization.

Model points live in the head frame (origin at the nose, y forward), so
the solved pose maps head coordinates into the camera frame and the gaze
direction in camera coordinates is simply the rotated y axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateHeadError,
    DegenerateInitError,
    NumericalFailureError,
)
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    _matrix_log_unchecked,
    hat,
)
from .skeleton import (
    FACE_KEYPOINTS,
    HeadFrame,
    KeypointId,
    MetricSkeleton3D,
    Skeleton2D,
)

_MAX_DAMPING = 1e12
_INIT_DEPTH_RANGE = (0.2, 50.0)


@dataclass(frozen=True)
class PnPConfig:
    """Levenberg-Marquardt schedule, frozen for reproducibility.

    Damping is multiplicative on the identity: x10 on a rejected step,
    /10 on an accepted one. Convergence when the pixel RMSE drops below
    `residual_tolerance` or the step norm below `step_tolerance`.
    """

    max_iterations: int = 100
    residual_tolerance: float = 1e-6
    step_tolerance: float = 1e-10
    damping_init: float = 1e-3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.residual_tolerance, self.step_tolerance, self.damping_init) <= 0.0:
            raise ValueError("tolerances and damping must be positive")


@dataclass(frozen=True)
class PnPProblem:
    """Correspondences (sorted by keypoint id) plus camera intrinsics."""

    keypoint_ids: tuple
    model_points: np.ndarray
    image_points: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        model = np.asarray(self.model_points, dtype=float).reshape(-1, 3)
        image = np.asarray(self.image_points, dtype=float).reshape(-1, 2)
        ids = tuple(self.keypoint_ids)
        if not (len(ids) == model.shape[0] == image.shape[0]):
            raise ValueError("correspondence arrays must have matching length")
        if len(ids) < 4:
            raise ValueError("PnP needs at least 4 correspondences")
        if any(ids[i] >= ids[i + 1] for i in range(len(ids) - 1)):
            order = np.argsort(np.asarray(ids, dtype=int), kind="stable")
            ids = tuple(ids[i] for i in order)
            model = model[order]
            image = image[order]
        object.__setattr__(self, "keypoint_ids", ids)
        object.__setattr__(self, "model_points", model)
        object.__setattr__(self, "image_points", image)


@dataclass(frozen=True)
class PnPSolution:
    pose: RigidTransform
    reprojection_rmse: float
    iterations: int
    converged: bool


def _camera_points(pose: RigidTransform, prob: PnPProblem) -> np.ndarray:
    pts = prob.model_points @ pose.matrix().T + pose.translation
    if np.any(pts[:, 2] <= 0.0):
        raise BehindCameraError("model point behind the camera under this pose")
    return pts


def _residuals_from_camera(cam: np.ndarray, prob: PnPProblem) -> np.ndarray:
    k = prob.intrinsics
    z = cam[:, 2]
    res = np.empty_like(prob.image_points)
    res[:, 0] = k.fx * cam[:, 0] / z + k.cx - prob.image_points[:, 0]
    res[:, 1] = k.fy * cam[:, 1] / z + k.cy - prob.image_points[:, 1]
    return res.ravel()


def reprojection_residuals(pose: RigidTransform, prob: PnPProblem) -> np.ndarray:
    """Stacked (u, v) pixel residuals per correspondence, ordered by keypoint id."""
    return _residuals_from_camera(_camera_points(pose, prob), prob)


_EYE3 = np.eye(3)


def _rodrigues_terms(rvec: np.ndarray):
    """(theta, skew, skew^2, R) shared by the exp map and its right Jacobian."""
    theta = float(np.sqrt(rvec @ rvec))
    w = hat(rvec)
    w2 = w @ w
    if theta < 1e-8:
        rm = _EYE3 + w + 0.5 * w2
    else:
        t2 = theta * theta
        rm = _EYE3 + (np.sin(theta) / theta) * w + ((1.0 - np.cos(theta)) / t2) * w2
    return theta, w, w2, rm


def _right_jacobian_terms(theta: float, w: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """SO(3) right Jacobian: d/d(delta) of exp(r + delta) = exp(r) exp(J delta)."""
    if theta < 1e-6:
        return _EYE3 - 0.5 * w + w2 / 6.0
    t2 = theta * theta
    return (
        _EYE3
        - ((1.0 - np.cos(theta)) / t2) * w
        + ((theta - np.sin(theta)) / (t2 * theta)) * w2
    )


def _right_jacobian(rvec: np.ndarray) -> np.ndarray:
    theta, w, w2, _ = _rodrigues_terms(rvec)
    return _right_jacobian_terms(theta, w, w2)


def _model_skews(model: np.ndarray) -> np.ndarray:
    """(N,3,3) cross-product matrices of the model points; pose independent."""
    n = model.shape[0]
    px = np.zeros((n, 3, 3))
    mx, my, mz = model[:, 0], model[:, 1], model[:, 2]
    px[:, 0, 1] = -mz
    px[:, 0, 2] = my
    px[:, 1, 0] = mz
    px[:, 1, 2] = -mx
    px[:, 2, 0] = -my
    px[:, 2, 1] = mx
    return px


def residual_jacobian(pose: RigidTransform, prob: PnPProblem) -> np.ndarray:
    """Analytic (2N,6) Jacobian of the residuals w.r.t. (rotation, translation)."""
    theta, w, w2, rm = _rodrigues_terms(pose.rotation)
    cam = prob.model_points @ rm.T + pose.translation
    if np.any(cam[:, 2] <= 0.0):
        raise BehindCameraError("model point behind the camera under this pose")
    jr = _right_jacobian_terms(theta, w, w2)
    block = _jacobian_blocks(rm, jr, cam, _model_skews(prob.model_points),
                             prob.intrinsics)
    n = cam.shape[0]
    jac = np.empty((2 * n, 6))
    jac[0::2] = block[:n]
    jac[1::2] = block[n:]
    return jac


def _jacobian_blocks(rm: np.ndarray, jr: np.ndarray, cam: np.ndarray,
                     model_skews: np.ndarray, k: CameraIntrinsics,
                     out: np.ndarray | None = None) -> np.ndarray:
    """(2N,6) Jacobian with all u rows first, then all v rows.

    Row order does not matter for the normal equations; the solver uses
    this contiguous block layout, the public API interleaves. `out` may
    be a preallocated (2N,6) buffer whose zero pattern is preserved.
    """
    n = cam.shape[0]
    # d(R p)/dr = -R [p]x Jr(r); the right Jacobian is point independent
    drot = -((rm @ model_skews) @ jr)

    inv_z = 1.0 / cam[:, 2]
    su = (k.fx * inv_z)[:, None]
    sv = (k.fy * inv_z)[:, None]
    wu = (k.fx * cam[:, 0] * inv_z * inv_z)[:, None]
    wv = (k.fy * cam[:, 1] * inv_z * inv_z)[:, None]

    jac = np.zeros((2 * n, 6)) if out is None else out
    jac[:n, :3] = su * drot[:, 0, :] - wu * drot[:, 2, :]
    jac[n:, :3] = sv * drot[:, 1, :] - wv * drot[:, 2, :]
    jac[:n, 3] = su[:, 0]
    jac[:n, 5] = -wu[:, 0]
    jac[n:, 4] = sv[:, 0]
    jac[n:, 5] = -wv[:, 0]
    return jac


def build_head_problem(skel2d: Skeleton2D, metric: MetricSkeleton3D,
                       frame: HeadFrame, intrinsics: CameraIntrinsics) -> PnPProblem:
    """Assemble head correspondences expressed in the head frame.

    Uses the face keypoints present in both the gated 2D skeleton and the
    metric skeleton; the neck is appended when fewer than 4 face points
    survive gating.
    """
    ids = [k for k in FACE_KEYPOINTS if skel2d.present[k] and metric.present[k]]
    neck = KeypointId.NECK
    if len(ids) < 4 and skel2d.present[neck] and metric.present[neck]:
        ids.append(neck)
    if len(ids) < 4:
        raise DegenerateHeadError(f"only {len(ids)} usable head correspondences, need 4")
    basis = frame.basis()
    model = (metric.points[ids] - frame.origin) @ basis
    image = skel2d.pixels[ids]
    return PnPProblem(tuple(ids), model, image, intrinsics)


def initialize_pose(prob: PnPProblem, frame: HeadFrame,
                    metric: MetricSkeleton3D) -> RigidTransform:
    """Initial pose from the ear-span depth heuristic and the skeleton's head frame.

    Depth z0 = fx * metric_ear_span / pixel_ear_distance; (x0, y0) back-project
    the 2D face centroid at z0; rotation is the head basis of the
    camera-canonical skeleton.
    """
    ids = list(prob.keypoint_ids)
    le, re = KeypointId.LEFT_EAR, KeypointId.RIGHT_EAR
    if le not in ids or re not in ids:
        raise DegenerateInitError("ear pair not available in 2D")
    ear_px = prob.image_points[ids.index(le)] - prob.image_points[ids.index(re)]
    pixel_dist = float(np.sqrt(ear_px @ ear_px))
    if pixel_dist < 1e-9:
        raise DegenerateInitError("ears project to the same pixel")
    ear_vec = metric.points[le] - metric.points[re]
    ear_span = float(np.sqrt(ear_vec @ ear_vec))
    k = prob.intrinsics
    z0 = min(max(k.fx * ear_span / pixel_dist, _INIT_DEPTH_RANGE[0]),
             _INIT_DEPTH_RANGE[1])

    face_rows = [i for i, kid in enumerate(ids) if kid in FACE_KEYPOINTS]
    pts = prob.image_points
    cu = sum(pts[i, 0] for i in face_rows) / len(face_rows)
    cv = sum(pts[i, 1] for i in face_rows) / len(face_rows)
    x0 = (cu - k.cx) / k.fx * z0
    y0 = (cv - k.cy) / k.fy * z0
    return RigidTransform(_matrix_log_unchecked(frame.basis()),
                          np.array([x0, y0, z0]))


def solve_pnp(prob: PnPProblem, init: RigidTransform,
              config: PnPConfig | None = None) -> PnPSolution:
    """Levenberg-Marquardt descent on the reprojection objective.

    Accepted steps never increase the residual; a solution with the head
    behind the camera is reported as non-converged (cheirality).
    """
    cfg = config or PnPConfig()
    model = prob.model_points
    k = prob.intrinsics
    n = model.shape[0]
    n2 = 2 * n
    # block layout (all u, then all v) inside the solver; cost and normal
    # equations are invariant to residual ordering
    obs = np.concatenate([prob.image_points[:, 0], prob.image_points[:, 1]])
    skews = _model_skews(model)

    def project_residuals(rm: np.ndarray, t: np.ndarray):
        cam = model @ rm.T + t
        if cam[:, 2].min() <= 0.0:
            return cam, None, np.inf
        flat = np.empty(n2)
        inv_z = 1.0 / cam[:, 2]
        flat[:n] = k.fx * cam[:, 0] * inv_z + k.cx
        flat[n:] = k.fy * cam[:, 1] * inv_z + k.cy
        res = flat - obs
        return cam, res, float(res @ res)

    r = np.array(init.rotation, dtype=float)
    t = np.array(init.translation, dtype=float)
    theta, w, w2, rm = _rodrigues_terms(r)
    cam, res, cost = project_residuals(rm, t)
    if res is None:
        raise BehindCameraError("model points behind the camera at the initial pose")
    rmse = np.sqrt(cost / n2)

    converged = rmse < cfg.residual_tolerance
    iterations = 0
    lam = cfg.damping_init
    best_cost = cost
    growth_streak = 0
    eye6 = np.eye(6)
    jac_buffer = np.zeros((n2, 6))

    while not converged and iterations < cfg.max_iterations:
        iterations += 1
        jr = _right_jacobian_terms(theta, w, w2)
        jac = _jacobian_blocks(rm, jr, cam, skews, k, out=jac_buffer)
        grad = jac.T @ res
        hess = jac.T @ jac
        try:
            step = np.linalg.solve(hess + lam * eye6, -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            if lam > _MAX_DAMPING:
                break
            continue

        r_trial = r + step[:3]
        t_trial = t + step[3:]
        terms_trial = _rodrigues_terms(r_trial)
        cam_trial, res_trial, cost_trial = project_residuals(terms_trial[3], t_trial)

        if cost_trial < cost:
            r, t = r_trial, t_trial
            theta, w, w2, rm = terms_trial
            cam, res, cost = cam_trial, res_trial, cost_trial
            # descent invariant: accepted cost may never rise above the best
            # cost seen; ten violations in a row would signal a Jacobian bug
            if cost > best_cost:
                growth_streak += 1
                if growth_streak >= 10:
                    raise NumericalFailureError("residual grew on accepted steps")
            else:
                best_cost = cost
                growth_streak = 0
            rmse = np.sqrt(cost / n2)
            lam = max(lam * 0.1, 1e-15)
            if rmse < cfg.residual_tolerance or float(step @ step) < cfg.step_tolerance ** 2:
                converged = True
        else:
            lam *= 10.0
            if float(step @ step) < cfg.step_tolerance ** 2:
                converged = True
            elif lam > _MAX_DAMPING:
                break

    if t[2] <= 0.0:
        converged = False
    return PnPSolution(pose=RigidTransform(r, t), reprojection_rmse=float(rmse),
                       iterations=iterations, converged=bool(converged))
