"""Command-line front door: generate map files from stimuli and prompts."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .attrs import load_attributes
from .backends import BackendUnavailableError
from .job import ProviderJob, generate_maps

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_INPUT = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptmaps",
        description="Generate attribute saliency maps from stimulus images and text prompts.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="emit one map per (stimulus, prompt) pair")
    gen.add_argument("--stimuli", required=True, help="directory of stimulus images")
    gen.add_argument(
        "--attributes", required=True,
        help="attribute JSON: a list of entries or a manifest-style {'attributes': [...]}",
    )
    gen.add_argument("--backend", default="mock", help="backend name (default: mock)")
    gen.add_argument("--out", required=True, help="output directory for maps and sidecar")
    gen.add_argument("--jobs", type=int, default=1, help="parallel stimulus workers")
    return parser


def cmd_generate(args) -> int:
    specs = load_attributes(args.attributes)
    job = ProviderJob(
        stimuli_dir=args.stimuli,
        attributes=specs,
        out_dir=args.out,
        backend=args.backend,
        jobs=args.jobs,
    )
    outcome = generate_maps(job)
    print(f"wrote {len(outcome.written)} map file(s) to {args.out}")
    if outcome.failures:
        for name, reason in outcome.failures:
            print(f"failed: {name}: {reason}", file=sys.stderr)
        print(f"{len(outcome.failures)} stimulus file(s) failed", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args)
        raise AssertionError(f"unhandled command {args.command}")
    except BackendUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
