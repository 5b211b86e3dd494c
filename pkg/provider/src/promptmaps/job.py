"""Generation jobs: fan a backend across (stimulus, prompt) pairs.

A job walks a stimuli directory, runs the backend once per planned
prompt, and writes `<stimulus_id>.<attribute>.pgm` files (with `.pos.` /
`.neg.` inserted for differential attributes) plus a provenance sidecar.
Unreadable stimuli are reported and skipped; the job keeps going.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .attrs import AttributeSpec
from .backends import get_backend
from .images import STIMULUS_PATTERNS, read_gray, write_pgm_atomic, write_text_atomic

PROVENANCE_FILE = "provenance.json"


@dataclass
class ProviderJob:
    stimuli_dir: Path
    attributes: list[AttributeSpec]
    out_dir: Path
    backend: str = "mock"
    jobs: int = 1

    def __post_init__(self):
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.attributes:
            raise ValueError("no attributes declared; nothing to generate")


@dataclass
class JobOutcome:
    written: list[Path] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)  # (file, reason)


def discover_stimuli(stimuli_dir) -> list[tuple[str, Path]]:
    """Sorted (stimulus_id, path) pairs; the id is the file stem."""
    stimuli_dir = Path(stimuli_dir)
    if not stimuli_dir.is_dir():
        raise FileNotFoundError(f"stimuli directory not found: {stimuli_dir}")
    seen: dict[str, Path] = {}
    for pattern in STIMULUS_PATTERNS:
        for path in stimuli_dir.glob(pattern):
            if path.stem in seen:
                raise ValueError(
                    f"ambiguous stimulus id '{path.stem}': "
                    f"{seen[path.stem].name} and {path.name}"
                )
            seen[path.stem] = path
    if not seen:
        raise FileNotFoundError(
            f"no stimulus images in {stimuli_dir} (looked for {', '.join(STIMULUS_PATTERNS)})"
        )
    return sorted(seen.items())


def map_filename(stimulus_id: str, spec: AttributeSpec, role: str | None) -> str:
    middle = spec.name if role is None else f"{spec.name}.{role}"
    return f"{stimulus_id}.{middle}.pgm"


def _one_stimulus(backend, specs, out_dir: Path, stimulus_id: str, path: Path):
    """All maps for one stimulus: (provenance records, failure-or-None)."""
    try:
        image = read_gray(path)
    except OSError as exc:
        return [], (path.name, str(exc))
    records = []
    for spec in specs:
        for role, prompt in spec.prompt_plan():
            values, meta = backend.run(image, prompt)
            name = map_filename(stimulus_id, spec, role)
            write_pgm_atomic(out_dir / name, values)
            records.append(
                {
                    "file": name,
                    "stimulus": stimulus_id,
                    "attribute": spec.name,
                    "role": role,
                    "prompt": prompt,
                    **meta,
                }
            )
    return records, None


def generate_maps(job: ProviderJob) -> JobOutcome:
    backend = get_backend(job.backend)
    stimuli = discover_stimuli(job.stimuli_dir)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def worker(item):
        stimulus_id, path = item
        return _one_stimulus(backend, job.attributes, out_dir, stimulus_id, path)

    if job.jobs > 1:
        with ThreadPoolExecutor(max_workers=job.jobs) as pool:
            results = list(pool.map(worker, stimuli))  # submission order kept
    else:
        results = [worker(item) for item in stimuli]

    outcome = JobOutcome()
    records = []
    for recs, failure in results:
        if failure is not None:
            outcome.failures.append(failure)
        else:
            records.extend(recs)
            outcome.written.extend(out_dir / r["file"] for r in recs)

    # no timestamps or absolute paths: reruns must be byte-identical
    sidecar = {"backend": backend.name, "maps": records}
    write_text_atomic(
        out_dir / PROVENANCE_FILE, json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )
    return outcome
