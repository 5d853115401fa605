"""Command-line interface: simulate, estimate, eval, bench.

Configuration is layered: built-in defaults < --scenario < --config file
< explicit flags. Exit codes: 0 success, 1 generic error, 2 schema,
3 version, 4 alignment, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from contextlib import contextmanager
from dataclasses import replace

from .awareness import AmrGeometry
from .errors import AlignmentError, AmrAwareError, SchemaError, VersionError
from .geometry import CameraIntrinsics
from .pipeline import (
    PipelineConfig,
    bench_scenario,
    estimate_lines,
    evaluate_estimates,
    render_report,
    simulate_lines,
    truth_header,
)
from .pnp import PnPConfig
from .simulator import Scenario, load_scenario, scenario_with_noise
from .skeleton import AnthropometricTable

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SCHEMA = 2
EXIT_VERSION = 3
EXIT_ALIGNMENT = 4
EXIT_IO = 5


@contextmanager
def _open_out(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as handle:
            yield handle


@contextmanager
def _open_in(path: str | None):
    if path is None or path == "-":
        yield sys.stdin
    else:
        with open(path, "r") as handle:
            yield handle


def _add_noise_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pixel-sigma", type=float, default=None,
                        help="Gaussian pixel noise sigma (px), overrides the scenario")
    parser.add_argument("--canonical-sigma", type=float, default=None,
                        help="Gaussian canonical-keypoint noise sigma, overrides the scenario")
    parser.add_argument("--dropout", type=float, default=None,
                        help="per-keypoint dropout probability, overrides the scenario")
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed, overrides the scenario")


def _apply_noise_flags(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    noise = scenario.noise
    if args.pixel_sigma is not None:
        noise = replace(noise, pixel_sigma=args.pixel_sigma)
    if args.canonical_sigma is not None:
        noise = replace(noise, canonical_sigma=args.canonical_sigma)
    if args.dropout is not None:
        noise = replace(noise, dropout_prob=args.dropout)
    return scenario_with_noise(scenario, noise, seed=args.seed)


def _config_from_sources(args: argparse.Namespace,
                         scenario: Scenario | None) -> PipelineConfig:
    """defaults < scenario < config file < flags."""
    values: dict = {}
    if scenario is not None:
        values["intrinsics"] = scenario.intrinsics
        values["theta_fov_full_deg"] = math.degrees(scenario.theta_fov_full)
        values["amr"] = scenario.amr_geometry()

    if getattr(args, "config", None):
        try:
            doc = json.loads(open(args.config).read())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config file is not valid JSON: {exc}") from exc
        known = {"intrinsics", "theta_fov_full_deg", "confidence_threshold",
                 "selection_policy", "smoothing_beta", "emit_pose", "pnp",
                 "amr_camera_offset_m", "anthropometry_file"}
        unknown = set(doc) - known
        if unknown:
            print(f"warning: ignoring unknown config keys: {sorted(unknown)}",
                  file=sys.stderr)
        if "intrinsics" in doc:
            k = doc["intrinsics"]
            values["intrinsics"] = CameraIntrinsics(
                fx=float(k["fx"]), fy=float(k["fy"]), cx=float(k["cx"]),
                cy=float(k["cy"]), width=int(k["width"]), height=int(k["height"]))
        for key in ("theta_fov_full_deg", "confidence_threshold",
                    "selection_policy", "smoothing_beta", "emit_pose"):
            if key in doc:
                values[key] = doc[key]
        if "amr_camera_offset_m" in doc:
            values["amr"] = AmrGeometry(camera_offset=doc["amr_camera_offset_m"])
        if "pnp" in doc:
            values["pnp"] = PnPConfig(**doc["pnp"])
        if "anthropometry_file" in doc:
            values["anthropometry"] = AnthropometricTable.load(doc["anthropometry_file"])

    flag_map = {
        "theta_fov": "theta_fov_full_deg",
        "confidence_threshold": "confidence_threshold",
        "policy": "selection_policy",
        "smoothing_beta": "smoothing_beta",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    if getattr(args, "emit_pose", False):
        values["emit_pose"] = True
    if getattr(args, "anthropometry", None):
        values["anthropometry"] = AnthropometricTable.load(args.anthropometry)

    intr_flags = [getattr(args, name, None)
                  for name in ("fx", "fy", "cx", "cy", "width", "height")]
    if any(v is not None for v in intr_flags):
        if any(v is None for v in intr_flags):
            raise SchemaError("camera flags --fx --fy --cx --cy --width --height "
                              "must be given together")
        values["intrinsics"] = CameraIntrinsics(
            fx=args.fx, fy=args.fy, cx=args.cx, cy=args.cy,
            width=args.width, height=args.height)

    pnp_updates = {}
    for flag, key in (("pnp_max_iterations", "max_iterations"),
                      ("pnp_residual_tolerance", "residual_tolerance"),
                      ("pnp_step_tolerance", "step_tolerance"),
                      ("pnp_damping_init", "damping_init")):
        value = getattr(args, flag, None)
        if value is not None:
            pnp_updates[key] = value
    if pnp_updates:
        values["pnp"] = replace(values.get("pnp", PnPConfig()), **pnp_updates)

    if "intrinsics" not in values:
        raise SchemaError("camera intrinsics required: pass --scenario, --config, "
                          "or the --fx/--fy/--cx/--cy/--width/--height flags")
    try:
        return PipelineConfig(**values)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _apply_noise_flags(load_scenario(args.scenario), args)
    truth_handle = open(args.truth, "w", newline="") if args.truth else None
    try:
        with _open_out(args.out) as out:
            if truth_handle:
                truth_handle.write(truth_header() + "\n")
            count = 0
            for line, truth in simulate_lines(scenario):
                out.write(line + "\n")
                if truth_handle:
                    truth_handle.write(truth + "\n")
                count += 1
                if args.frames is not None and count >= args.frames:
                    break
    finally:
        if truth_handle:
            truth_handle.close()
    return EXIT_OK


def _cmd_estimate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else None
    cfg = _config_from_sources(args, scenario)
    with _open_in(args.input) as src, _open_out(args.out) as out:
        for row in estimate_lines(src, cfg):
            out.write(row + "\n")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    probes = [int(p) for p in args.probes.split(",")] if args.probes else []
    report = evaluate_estimates(args.estimates, args.truth, probes)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(render_report(report))
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    scenario = _apply_noise_flags(load_scenario(args.scenario), args)
    cfg = _config_from_sources(args, scenario)
    report = bench_scenario(scenario, cfg, frame_limit=args.frames)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        stages = report["stage_seconds"]
        print(f"frames:            {report['frames']}")
        print(f"samples:           {report['samples']}")
        print(f"pnp solves:        {report['pnp_solves']}")
        print(f"pnp iterations:    {report['pnp_iterations']}")
        print(f"wall seconds:      {report['wall_seconds']:.4f}")
        print(f"frames per second: {report['frames_per_second']:.1f}")
        for name in ("parse", "prepare", "solve", "score"):
            print(f"  stage {name:<8} {stages[name]:.4f} s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amraware",
        description="Awareness-of-robot estimation from body keypoints, plus the "
                    "scenario simulator used to validate it.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario: frame lines + truth CSV")
    sim.add_argument("--scenario", required=True,
                     help="builtin scenario name (e.g. fig2) or a JSON file path")
    sim.add_argument("--out", default="-", help="frame JSONL output path or - for stdout")
    sim.add_argument("--truth", default=None, help="ground-truth CSV output path")
    sim.add_argument("--frames", type=int, default=None, help="stop after N frames")
    _add_noise_flags(sim)

    est = sub.add_parser("estimate", help="frame lines in, awareness CSV out")
    est.add_argument("--in", dest="input", default="-",
                     help="frame JSONL input path or - for stdin")
    est.add_argument("--out", default="-", help="CSV output path or - for stdout")
    est.add_argument("--scenario", default=None,
                     help="take intrinsics/FOV/mount from this scenario")
    est.add_argument("--config", default=None, help="JSON config file")
    est.add_argument("--theta-fov", dest="theta_fov", type=float, default=None,
                     help="full field-of-view angle in degrees")
    est.add_argument("--confidence-threshold", type=float, default=None)
    est.add_argument("--policy", choices=("max_confidence", "all"), default=None)
    est.add_argument("--smoothing-beta", type=float, default=None)
    est.add_argument("--emit-pose", action="store_true",
                     help="append head pose columns rx..tz to the CSV")
    est.add_argument("--anthropometry", default=None,
                     help="JSON file of segment lengths in meters")
    for name in ("fx", "fy", "cx", "cy"):
        est.add_argument(f"--{name}", type=float, default=None)
    est.add_argument("--width", type=int, default=None)
    est.add_argument("--height", type=int, default=None)
    est.add_argument("--pnp-max-iterations", type=int, default=None)
    est.add_argument("--pnp-residual-tolerance", type=float, default=None)
    est.add_argument("--pnp-step-tolerance", type=float, default=None)
    est.add_argument("--pnp-damping-init", type=float, default=None)

    ev = sub.add_parser("eval", help="compare an estimates CSV against ground truth")
    ev.add_argument("--estimates", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--probes", default=None,
                    help="comma-separated probe frame indices to report")
    ev.add_argument("--json", action="store_true")

    ben = sub.add_parser("bench", help="geometry-pipeline throughput on a scenario")
    ben.add_argument("--scenario", required=True)
    ben.add_argument("--frames", type=int, default=None)
    ben.add_argument("--config", default=None)
    ben.add_argument("--json", action="store_true")
    ben.add_argument("--theta-fov", dest="theta_fov", type=float, default=None)
    ben.add_argument("--confidence-threshold", type=float, default=None)
    ben.add_argument("--policy", choices=("max_confidence", "all"), default=None)
    _add_noise_flags(ben)

    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except VersionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except AlignmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALIGNMENT
    except AmrAwareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
