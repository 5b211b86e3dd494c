"""Command-line front door: analyze, simulate, validate-maps.

Exit codes are a stable scripting contract: 0 success, 1 validation
findings, 2 input errors, 3 analysis degeneracy (e.g. a group left empty
after filtering).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._version import __version__
from .cohortsim import SimProfile, generate_cohort
from .errors import DegenerateDataError, GazeToolkitError
from .events import DetectionConfig
from .ingest import load_manifest
from .pipeline import AnalysisConfig, analyze_cohort
from .report import write_reports
from .salmap import load_map

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_INPUT = 2
EXIT_DEGENERATE = 3

DEFAULT_SIM_CONFIG = {
    "case": {"bias_lambda": 0.2, "fixations_per_trial": 2.2},
    "control": {"bias_lambda": 0.8, "fixations_per_trial": 3.8},
    "n_subjects": 30,
    "n_trials": 20,
    "seed": 0,
    "stimulus_size": [800, 600],
    "trial_ms": 4000.0,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazemarkers",
        description="Score eye-tracking fixations against attribute saliency maps "
        "and compare gaze markers between two groups.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run the full pipeline over a cohort manifest")
    pa.add_argument("--manifest", required=True, help="path to manifest.json")
    pa.add_argument("--out", required=True, help="report output directory")
    pa.add_argument("--granularity", choices=["subject", "trial"], default="subject")
    pa.add_argument("--n-perm", type=int, default=4999)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--jobs", type=int, default=1)
    pa.add_argument(
        "--attributes", default=None, help="comma-separated subset of manifest attributes"
    )
    pa.add_argument("--smooth-sigma-px", type=float, default=None)
    pa.add_argument("--density-sigma-px", type=float, default=None)
    pa.add_argument("--center-prior-sigma-px", type=float, default=None)
    pa.add_argument("--fixation-dispersion-deg", type=float, default=None)
    pa.add_argument("--fixation-min-ms", type=float, default=None)
    pa.add_argument("--fixation-keep-min-ms", type=float, default=None)
    pa.add_argument("--oob-discard-fraction", type=float, default=None)
    pa.add_argument("--saccade-velocity-deg-s", type=float, default=None)

    ps = sub.add_parser("simulate", help="materialize a synthetic cohort tree")
    ps.add_argument(
        "--profile",
        default=None,
        help="JSON config; omitted -> built-in defaults (see --print-default-profile)",
    )
    ps.add_argument("--out", required=True, help="cohort output directory")
    ps.add_argument("--seed", type=int, default=None, help="override config seed")
    ps.add_argument(
        "--print-default-profile",
        action="store_true",
        help="print the default profile config and exit",
    )

    pv = sub.add_parser("validate-maps", help="check every declared map file")
    pv.add_argument("--manifest", required=True)
    return parser


def _detection_from_args(args) -> DetectionConfig:
    base = DetectionConfig()
    overrides = {}
    for field, attr in [
        ("fixation_dispersion_deg", "fixation_dispersion_deg"),
        ("fixation_min_ms", "fixation_min_ms"),
        ("fixation_keep_min_ms", "fixation_keep_min_ms"),
        ("oob_discard_fraction", "oob_discard_fraction"),
        ("saccade_velocity_deg_s", "saccade_velocity_deg_s"),
    ]:
        value = getattr(args, attr)
        if value is not None:
            overrides[field] = value
    if not overrides:
        return base
    from dataclasses import replace

    return replace(base, **overrides)


def cmd_analyze(args) -> int:
    manifest = load_manifest(args.manifest)
    attributes = None
    if args.attributes:
        attributes = tuple(a.strip() for a in args.attributes.split(",") if a.strip())
    config = AnalysisConfig(
        granularity=args.granularity,
        n_perm=args.n_perm,
        seed=args.seed,
        detection=_detection_from_args(args),
        attributes=attributes,
        smooth_sigma_px=args.smooth_sigma_px,
        density_sigma_px=args.density_sigma_px,
        center_prior_sigma_px=args.center_prior_sigma_px,
        jobs=args.jobs,
    )
    result = analyze_cohort(manifest, config)
    write_reports(result, args.out)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    for c in result.comparisons:
        verdict = "significant" if c.significant else "n.s."
        print(
            f"{c.attribute}: case={c.mean_case:.3f} control={c.mean_control:.3f} "
            f"U={c.u:.1f} p_mw={c.p_mw:.4g} d={c.d:+.3f} p_perm={c.p_perm:.4g} [{verdict}]"
        )
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.print_default_profile:
        print(json.dumps(DEFAULT_SIM_CONFIG, indent=2))
        return EXIT_OK
    config = dict(DEFAULT_SIM_CONFIG)
    if args.profile is not None:
        with open(args.profile) as fh:
            user = json.load(fh)
        unknown = set(user) - set(DEFAULT_SIM_CONFIG)
        if unknown:
            raise ValueError(f"unknown profile config keys: {sorted(unknown)}")
        config.update(user)
    if args.seed is not None:
        config["seed"] = args.seed
    case = SimProfile.from_json_dict(config["case"])
    control = SimProfile.from_json_dict(config["control"])
    cohort = generate_cohort(
        case,
        control,
        args.out,
        n_subjects=int(config["n_subjects"]),
        n_trials=int(config["n_trials"]),
        seed=int(config["seed"]),
        stimulus_size=tuple(config["stimulus_size"]),
        trial_ms=float(config["trial_ms"]),
    )
    n_trials = len(cohort.manifest.trials)
    print(f"cohort with {len(cohort.manifest.subjects)} subjects, {n_trials} trials -> {args.out}")
    return EXIT_OK


def cmd_validate_maps(args) -> int:
    manifest = load_manifest(args.manifest)
    if not manifest.attributes:
        print("warning: manifest declares no attributes; nothing to validate", file=sys.stderr)
        return EXIT_OK
    violations = 0
    for entry in manifest.attributes:
        for stimulus_id, stim in manifest.stimuli.items():
            for path in manifest.map_paths(stimulus_id, entry):
                problem = None
                if not path.exists():
                    problem = "file missing"
                else:
                    try:
                        smap = load_map(
                            path,
                            expected_size=(stim.width, stim.height),
                            attribute_name=entry.name,
                        )
                        lo, hi = float(smap.values.min()), float(smap.values.max())
                        if lo < 0 or hi > 255:
                            problem = f"values out of [0,255]: [{lo}, {hi}]"
                    except GazeToolkitError as exc:
                        problem = str(exc)
                if problem is not None:
                    violations += 1
                    print(f"{stimulus_id} {entry.name}: {problem} ({path})")
    if violations:
        print(f"{violations} violation(s) found")
        return EXIT_VIOLATIONS
    print("all maps valid")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_validate_maps(args)
    except DegenerateDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (GazeToolkitError, FileNotFoundError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
