"""Awareness-of-robot estimation from per-frame body keypoints.

Pipeline: canonical keypoints are rescaled to meters (shoulder-anchored),
a head frame and initial gaze are built from the face keypoints, the
head pose is recovered by Levenberg-Marquardt minimization of the
reprojection error, and a continuous attention-cone score in [0, 1]
is evaluated against the robot's position. An analytic scenario
simulator provides ground truth for end-to-end validation.
"""

from .awareness import (
    AmrGeometry,
    AttentionCone,
    AwarenessSample,
    HeadResult,
    amr_in_head_frame,
    awareness_score,
    axial_distance,
    cone_radius,
    evaluate_frame,
    human_position_robot_frame,
    radial_offset,
)
from .errors import (
    AlignmentError,
    AmrAwareError,
    BehindCameraError,
    DegenerateHeadError,
    DegenerateInitError,
    DegenerateSkeletonError,
    InvalidRotationError,
    NotInFrontError,
    NumericalFailureError,
    SchemaError,
    VersionError,
)
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    canonicalize_rotation,
    matrix_to_rotation,
    project,
    project_points,
    rotation_to_matrix,
)
from .pipeline import PipelineConfig, estimate_lines, evaluate_estimates, process_frame
from .pnp import (
    PnPConfig,
    PnPProblem,
    PnPSolution,
    build_head_problem,
    initialize_pose,
    reprojection_residuals,
    residual_jacobian,
    solve_pnp,
)
from .simulator import (
    GroundTruthRecord,
    HeadYawProfile,
    NoiseSpec,
    Scenario,
    TrajectorySpec,
    ground_truth,
    load_scenario,
    observe,
    run_scenario,
    skeleton_at,
)
from .skeleton import (
    AnthropometricTable,
    CanonicalSkeleton3D,
    HeadFrame,
    KeypointId,
    MetricSkeleton3D,
    Skeleton2D,
    Skeleton3D,
    face_center,
    gate_by_confidence,
    head_frame,
    initial_gaze,
    rescale_to_metric,
    synthesize_neck,
)
from .wire import FrameMessage, FrameParser, PersonRecord, parse_frame, serialize_frame

__version__ = "0.1.0"
