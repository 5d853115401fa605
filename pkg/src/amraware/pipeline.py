"""Frame processing, person selection, smoothing, and the eval/bench harness.

`estimate_lines` is the streaming core used by the CLI: frame lines in,
CSV rows out, bounded memory regardless of stream length.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from .awareness import AmrGeometry, AwarenessSample, HeadResult, evaluate_frame
from .errors import (
    AlignmentError,
    BehindCameraError,
    DegenerateHeadError,
    DegenerateInitError,
    DegenerateSkeletonError,
)
from .geometry import CameraIntrinsics
from .pnp import PnPConfig, build_head_problem, initialize_pose, solve_pnp
from .simulator import Scenario, observe, run_scenario
from .skeleton import (
    AnthropometricTable,
    CanonicalSkeleton3D,
    face_center,
    gate_by_confidence,
    head_frame,
    rescale_to_metric,
    synthesize_neck,
    synthesize_neck_2d,
)
from .wire import FrameMessage, FrameParser, PersonRecord, observation_to_frame, serialize_frame

CSV_COLUMNS = ("t", "frame_index", "person_id", "alpha",
               "d_axial", "d_perp", "d_fwd", "d_lat", "converged")
POSE_COLUMNS = ("rx", "ry", "rz", "tx", "ty", "tz")

TRUTH_COLUMNS = CSV_COLUMNS[:-1] + POSE_COLUMNS

_DEGENERATE_ERRORS = (DegenerateSkeletonError, DegenerateHeadError,
                      DegenerateInitError, BehindCameraError)


@dataclass(frozen=True)
class PipelineConfig:
    """Layered configuration for the estimation pipeline.

    `theta_fov_full_deg` is the person's full field-of-view angle; it is
    halved here, at parse time, to the cone half-angle used everywhere
    downstream.
    """

    intrinsics: CameraIntrinsics
    theta_fov_full_deg: float = 120.0
    amr: AmrGeometry = field(default_factory=AmrGeometry)
    confidence_threshold: float = 0.3
    selection_policy: str = "max_confidence"
    smoothing_beta: float = 0.0
    pnp: PnPConfig = field(default_factory=PnPConfig)
    emit_pose: bool = False
    anthropometry: AnthropometricTable = field(default_factory=AnthropometricTable)

    def __post_init__(self):
        if not 0.0 < self.theta_fov_full_deg < 180.0:
            raise ValueError("theta_fov_full_deg must lie in (0, 180)")
        if not 0.0 <= self.smoothing_beta < 1.0:
            raise ValueError("smoothing beta must lie in [0, 1)")
        if self.selection_policy not in ("max_confidence", "all"):
            raise ValueError("selection_policy must be 'max_confidence' or 'all'")

    @property
    def half_angle(self) -> float:
        return 0.5 * math.radians(self.theta_fov_full_deg)


def select_persons(frame: FrameMessage, policy: str,
                   confidence_threshold: float = 0.0) -> list[PersonRecord]:
    """Apply the person-selection policy to one frame.

    `max_confidence` keeps at most one person (ties broken by the lowest
    person id); `all` keeps everyone at or above the threshold.
    """
    eligible = [p for p in frame.persons if p.confidence >= confidence_threshold]
    if policy == "all":
        return eligible
    if policy == "max_confidence":
        if not eligible:
            return []
        best = min(eligible, key=lambda p: (-p.confidence, p.person_id))
        return [best]
    raise ValueError(f"unknown selection policy {policy!r}")


def _prepare_person(person: PersonRecord, cfg: PipelineConfig):
    """Gate, rescale, and build the PnP problem for one person.

    Returns (problem, init, face_center_in_head_coords); raises the
    documented degenerate errors when the person cannot be processed.
    """
    s2d = gate_by_confidence(person.skeleton2d, cfg.confidence_threshold)
    s2d = synthesize_neck_2d(s2d)
    usable = person.canonical.present & s2d.present
    canonical = CanonicalSkeleton3D(points=person.canonical.points, present=usable,
                                    derived=person.canonical.derived)
    canonical = synthesize_neck(canonical)
    metric = rescale_to_metric(canonical, cfg.anthropometry)
    frame = head_frame(metric)
    apex = face_center(metric)
    prob = build_head_problem(s2d, metric, frame, cfg.intrinsics)
    init = initialize_pose(prob, frame, metric)
    apex_head = frame.basis().T @ (apex - frame.origin)
    return prob, init, apex_head


def process_person(person: PersonRecord, cfg: PipelineConfig) -> HeadResult:
    """Head pose for one person; degenerate input yields a flagged result."""
    try:
        prob, init, apex_head = _prepare_person(person, cfg)
    except _DEGENERATE_ERRORS:
        return HeadResult(person_id=person.person_id, solution=None,
                          face_center_head=None)
    solution = solve_pnp(prob, init, cfg.pnp)
    return HeadResult(person_id=person.person_id, solution=solution,
                      face_center_head=apex_head)


def process_frame(msg: FrameMessage, cfg: PipelineConfig) -> list[AwarenessSample]:
    """Selection, head pose, and awareness for every selected person."""
    selected = select_persons(msg, cfg.selection_policy, cfg.confidence_threshold)
    results = [process_person(p, cfg) for p in selected]
    amr = cfg.amr if msg.amr_offset is None else AmrGeometry(camera_offset=msg.amr_offset)
    return evaluate_frame(results, amr, cfg.half_angle, msg.t)


class AlphaSmoother:
    """Per-person exponential smoothing of the awareness score.

    alpha' = beta * previous_output + (1 - beta) * alpha. Non-converged
    samples reset the person's state and pass through with alpha 0.
    """

    def __init__(self, beta: float):
        if not 0.0 <= beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        self.beta = beta
        self._state: dict[int, float] = {}

    def apply(self, sample: AwarenessSample) -> AwarenessSample:
        if not sample.converged:
            self._state.pop(sample.person_id, None)
            return sample
        if self.beta == 0.0:
            return sample
        prev = self._state.get(sample.person_id)
        smoothed = sample.alpha if prev is None else \
            self.beta * prev + (1.0 - self.beta) * sample.alpha
        self._state[sample.person_id] = smoothed
        return replace(sample, alpha=smoothed)


def _fmt(value: float) -> str:
    return repr(float(value))


def sample_row(sample: AwarenessSample, frame_index: int, emit_pose: bool) -> str:
    fields = [_fmt(sample.t), str(frame_index), str(sample.person_id),
              _fmt(sample.alpha), _fmt(sample.d_axial), _fmt(sample.d_perp),
              _fmt(sample.d_fwd), _fmt(sample.d_lat),
              "true" if sample.converged else "false"]
    if emit_pose:
        if sample.head_pose is None:
            fields += ["nan"] * 6
        else:
            r, t = sample.head_pose.rotation, sample.head_pose.translation
            fields += [_fmt(v) for v in (*r, *t)]
    return ",".join(fields)


def csv_header(emit_pose: bool) -> str:
    cols = CSV_COLUMNS + POSE_COLUMNS if emit_pose else CSV_COLUMNS
    return ",".join(cols)


def estimate_messages(messages: Iterable[FrameMessage],
                      cfg: PipelineConfig) -> Iterator[tuple[int, AwarenessSample]]:
    """Stream of (frame_index, sample) with smoothing state maintained."""
    smoother = AlphaSmoother(cfg.smoothing_beta)
    for msg in messages:
        for sample in process_frame(msg, cfg):
            yield msg.frame_index, smoother.apply(sample)


def estimate_lines(lines: Iterable[str], cfg: PipelineConfig) -> Iterator[str]:
    """Frame lines in, CSV lines out (header first); bounded memory."""
    parser = FrameParser()

    def messages() -> Iterator[FrameMessage]:
        for number, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            yield parser.parse(stripped, number)

    yield csv_header(cfg.emit_pose)
    for frame_index, sample in estimate_messages(messages(), cfg):
        yield sample_row(sample, frame_index, cfg.emit_pose)


def truth_row(record) -> str:
    r = record.head_pose_camera.rotation
    t = record.head_pose_camera.translation
    fields = [_fmt(record.t), str(record.frame_index), "0",
              _fmt(record.alpha), _fmt(record.d_axial), _fmt(record.d_perp),
              _fmt(record.d_fwd), _fmt(record.d_lat)]
    fields += [_fmt(v) for v in (*r, *t)]
    return ",".join(fields)


def truth_header() -> str:
    return ",".join(TRUTH_COLUMNS)


def simulate_lines(scenario: Scenario) -> Iterator[tuple[str, str]]:
    """Stream of (frame JSONL line, truth CSV row) for a scenario."""
    for index, t, obs, record in run_scenario(scenario):
        msg = observation_to_frame(index, t, obs)
        yield serialize_frame(msg), truth_row(record)


def _read_csv(path) -> tuple[list[str], dict[tuple[int, int], dict[str, float]]]:
    import csv

    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        columns = reader.fieldnames or []
        rows = {}
        for row in reader:
            key = (int(row["frame_index"]), int(row["person_id"]))
            rows[key] = row
    return columns, rows


def _rotation_angle_deg(r_a: np.ndarray, r_b: np.ndarray) -> float:
    from .geometry import rotation_to_matrix

    rel = rotation_to_matrix(r_a).T @ rotation_to_matrix(r_b)
    cos_t = max(-1.0, min(1.0, 0.5 * (float(np.trace(rel)) - 1.0)))
    return math.degrees(math.acos(cos_t))


def evaluate_estimates(estimates_path, truth_path,
                       probe_frames: Iterable[int] = ()) -> dict:
    """Compare an estimates CSV against a ground-truth CSV.

    Frames must align exactly; pose error statistics are included when
    both files carry pose columns (estimate with emit_pose on).
    """
    est_cols, est_rows = _read_csv(estimates_path)
    truth_cols, truth_rows = _read_csv(truth_path)
    if set(est_rows) != set(truth_rows):
        missing = sorted(set(truth_rows) - set(est_rows))[:5]
        extra = sorted(set(est_rows) - set(truth_rows))[:5]
        raise AlignmentError(
            f"estimate/truth frames differ (missing {missing}, extra {extra})")
    if not est_rows:
        raise AlignmentError("no rows to compare")

    keys = sorted(est_rows)
    alpha_err = np.array([abs(float(est_rows[k]["alpha"]) - float(truth_rows[k]["alpha"]))
                          for k in keys])
    converged = np.array([est_rows[k].get("converged", "true") == "true" for k in keys])

    report = {
        "rows": len(keys),
        "alpha_mae": float(alpha_err.mean()),
        "alpha_max_error": float(alpha_err.max()),
        "non_converged": int((~converged).sum()),
        "probes": [],
    }

    has_pose = all(c in est_cols for c in POSE_COLUMNS) and \
        all(c in truth_cols for c in POSE_COLUMNS)
    if has_pose:
        rot_err, trans_err = [], []
        for i, k in enumerate(keys):
            if not converged[i]:
                continue
            er = np.array([float(est_rows[k][c]) for c in POSE_COLUMNS[:3]])
            et = np.array([float(est_rows[k][c]) for c in POSE_COLUMNS[3:]])
            tr = np.array([float(truth_rows[k][c]) for c in POSE_COLUMNS[:3]])
            tt = np.array([float(truth_rows[k][c]) for c in POSE_COLUMNS[3:]])
            if np.any(np.isnan(er)) or np.any(np.isnan(et)):
                continue
            rot_err.append(_rotation_angle_deg(er, tr))
            trans_err.append(float(np.linalg.norm(et - tt)))
        if rot_err:
            report["rotation_error_deg"] = {
                "mean": float(np.mean(rot_err)),
                "median": float(np.median(rot_err)),
                "max": float(np.max(rot_err)),
            }
            report["translation_error_m"] = {
                "mean": float(np.mean(trans_err)),
                "median": float(np.median(trans_err)),
                "max": float(np.max(trans_err)),
            }

    for probe in probe_frames:
        probe_keys = [k for k in keys if k[0] == probe]
        for k in probe_keys:
            report["probes"].append({
                "frame_index": probe,
                "person_id": k[1],
                "alpha_estimate": float(est_rows[k]["alpha"]),
                "alpha_truth": float(truth_rows[k]["alpha"]),
            })
        if not probe_keys:
            raise AlignmentError(f"probe frame {probe} not present in the data")
    return report


def render_report(report: dict) -> str:
    lines = [
        f"rows compared:      {report['rows']}",
        f"alpha MAE:          {report['alpha_mae']:.6f}",
        f"alpha max error:    {report['alpha_max_error']:.6f}",
        f"non-converged rows: {report['non_converged']}",
    ]
    if "rotation_error_deg" in report:
        r, t = report["rotation_error_deg"], report["translation_error_m"]
        lines.append(f"rotation error deg: mean {r['mean']:.4f} "
                     f"median {r['median']:.4f} max {r['max']:.4f}")
        lines.append(f"translation err m:  mean {t['mean']:.4f} "
                     f"median {t['median']:.4f} max {t['max']:.4f}")
    for probe in report["probes"]:
        lines.append(
            f"probe frame {probe['frame_index']} person {probe['person_id']}: "
            f"alpha {probe['alpha_estimate']:.4f} (truth {probe['alpha_truth']:.4f})")
    return "\n".join(lines)


def bench_scenario(scenario: Scenario, cfg: PipelineConfig,
                   frame_limit: int | None = None) -> dict:
    """Throughput of the geometry pipeline (parse -> PnP -> score).

    Frame generation happens up front and is excluded from the timing.
    """
    count = scenario.frame_count if frame_limit is None else \
        min(frame_limit, scenario.frame_count)
    lines = [serialize_frame(observation_to_frame(i, scenario.time_of(i),
                                                  observe(scenario, i)))
             for i in range(count)]

    parser = FrameParser()
    stage = {"parse": 0.0, "prepare": 0.0, "solve": 0.0, "score": 0.0}
    solves = 0
    iterations = 0
    samples = 0

    wall_start = time.perf_counter()
    for number, line in enumerate(lines, start=1):
        t0 = time.perf_counter()
        msg = parser.parse(line, number)
        t1 = time.perf_counter()
        selected = select_persons(msg, cfg.selection_policy, cfg.confidence_threshold)
        results = []
        t_prep = 0.0
        t_solve = 0.0
        for person in selected:
            p0 = time.perf_counter()
            try:
                prob, init, apex_head = _prepare_person(person, cfg)
            except _DEGENERATE_ERRORS:
                results.append(HeadResult(person.person_id, None, None))
                t_prep += time.perf_counter() - p0
                continue
            p1 = time.perf_counter()
            solution = solve_pnp(prob, init, cfg.pnp)
            t_solve += time.perf_counter() - p1
            t_prep += p1 - p0
            solves += 1
            iterations += solution.iterations
            results.append(HeadResult(person.person_id, solution, apex_head))
        t2 = time.perf_counter()
        samples += len(evaluate_frame(results, cfg.amr, cfg.half_angle, msg.t))
        t3 = time.perf_counter()
        stage["parse"] += t1 - t0
        stage["prepare"] += t_prep
        stage["solve"] += t_solve
        stage["score"] += t3 - t2
    wall = time.perf_counter() - wall_start

    return {
        "frames": count,
        "samples": samples,
        "pnp_solves": solves,
        "pnp_iterations": iterations,
        "wall_seconds": wall,
        "frames_per_second": count / wall if wall > 0.0 else float("inf"),
        "stage_seconds": stage,
    }
