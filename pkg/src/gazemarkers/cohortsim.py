"""Synthetic cohorts with controllable saliency-seeking bias.

The simulator is the ground-truth oracle for end-to-end validation:
fixation locations are drawn from a mixture of a map-proportional
distribution (weight lambda) and a uniform one, then rendered as binocular
500 Hz traces whose planted events the detection pipeline must recover.

Planted fixations sit on the sample grid and are separated by at least
MIN_SEPARATION_DEG, so at zero jitter the dispersion criterion recovers
their boundaries exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError
from .ingest import (
    AttributeEntry,
    CohortManifest,
    DisplayRect,
    Eye,
    GazeTrace,
    Group,
    StimulusInfo,
    TrialRecord,
    ViewingGeometry,
    from_stimulus_coords,
    interleave_traces,
    manifest_to_dict,
    write_gaze_csv,
)
from .salmap import MapKind, SaliencyMap, normalize_255, quantize_255, write_pgm

RAMP_MS = 20.0  # linear saccadic ramp; 1.2 deg / 20 ms = 60 deg/s > threshold
MIN_SEPARATION_DEG = 1.2  # first ramp step 0.12 deg already breaks dispersion
MIN_PLANT_DURATION_MS = 100.0  # floor keeps every planted fixation detectable
PUPIL_MM = 3.5
_SEPARATION_ATTEMPTS = 64

DEFAULT_GEOMETRY = ViewingGeometry(
    screen_width_px=1920,
    screen_height_px=1080,
    screen_width_mm=528.0,
    screen_height_mm=297.0,
    viewing_distance_mm=600.0,
    sampling_rate_hz=500.0,
)


@dataclass(frozen=True)
class SimProfile:
    """Behavioral knobs for one simulated group."""

    bias_lambda: float = 0.5
    fixations_per_trial: float = 3.8  # mean of 1 + Poisson(mean - 1)
    duration_log_mu: float = 5.3  # log-normal, ms; median ~= 200 ms
    duration_log_sigma: float = 0.4
    jitter_deg: float = 0.01  # per-eye, per-axis positional noise

    def __post_init__(self):
        if not 0.0 <= self.bias_lambda <= 1.0:
            raise ValueError(f"bias_lambda must be in [0, 1], got {self.bias_lambda}")
        if self.fixations_per_trial < 1:
            raise ValueError("fixations_per_trial mean must be >= 1")
        if self.duration_log_sigma < 0:
            raise ValueError("duration_log_sigma must be >= 0")
        if self.jitter_deg < 0:
            raise ValueError("jitter_deg must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "bias_lambda": self.bias_lambda,
            "fixations_per_trial": self.fixations_per_trial,
            "duration_log_mu": self.duration_log_mu,
            "duration_log_sigma": self.duration_log_sigma,
            "jitter_deg": self.jitter_deg,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SimProfile":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown profile fields: {sorted(extra)}")
        return cls(**doc)


@dataclass(frozen=True)
class PlantedFixation:
    """Ground truth for one planted fixation, in image coordinates."""

    start_ms: float
    end_ms: float
    x_img: float
    y_img: float

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


@dataclass
class SimulatedCohort:
    manifest: CohortManifest  # traces bound in-memory on every trial
    planted: dict[str, list[PlantedFixation]]
    maps: dict[str, SaliencyMap]  # stimulus_id -> map the points were drawn from
    case_profile: SimProfile = field(default=None)  # type: ignore[assignment]
    control_profile: SimProfile = field(default=None)  # type: ignore[assignment]


def deg_to_px(geometry: ViewingGeometry, deg: float) -> float:
    """Small-field conversion at screen center (where trials display stimuli)."""
    return geometry.viewing_distance_mm * math.tan(math.radians(deg)) / geometry.pitch_x_mm


def make_stimulus_map(width: int, height: int) -> SaliencyMap:
    """Deterministic structured test map: two blobs over a soft gradient.

    Mass spans well over MIN_SEPARATION_DEG so mixture draws rarely need
    the separation redraw.
    """
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    s = min(width, height)
    blob1 = np.exp(-(((x - 0.30 * width) ** 2 + (y - 0.40 * height) ** 2) / (2 * (0.12 * s) ** 2)))
    blob2 = 0.7 * np.exp(
        -(((x - 0.72 * width) ** 2 + (y - 0.62 * height) ** 2) / (2 * (0.18 * s) ** 2))
    )
    gradient = 0.15 * x / max(width - 1, 1)
    raw = SaliencyMap(
        values=blob1 + blob2 + gradient,
        kind=MapKind.RAW,
        attribute_name="blobs",
        provenance="synthetic",
    )
    normalized = normalize_255(raw)
    # integer-valued so the 8-bit PGM on disk reproduces this map exactly
    return SaliencyMap(
        values=np.rint(normalized.values),
        kind=MapKind.NORMALIZED,
        attribute_name=normalized.attribute_name,
        provenance=normalized.provenance,
    )


class _MixtureSampler:
    """Inverse-CDF sampler over pixel nodes; the cumsum is built once."""

    def __init__(self, smap: SaliencyMap):
        self.width = smap.width
        weights = smap.values.ravel()
        self.has_negative = bool(np.any(weights < 0))
        self.cdf = np.cumsum(weights)
        self.total = float(self.cdf[-1]) if len(self.cdf) else 0.0
        self.n_pixels = weights.size

    def draw(self, bias_lambda: float, n: int, rng: np.random.Generator) -> np.ndarray:
        if not 0.0 <= bias_lambda <= 1.0:
            raise ValueError(f"bias_lambda must be in [0, 1], got {bias_lambda}")
        if n < 0:
            raise ValueError("n must be >= 0")
        if n == 0:
            return np.empty((0, 2), dtype=np.float64)
        idx = np.empty(n, dtype=np.int64)
        from_map = rng.random(n) < bias_lambda
        k = int(from_map.sum())
        if k:
            if self.has_negative:
                raise DegenerateDataError(
                    "map-proportional sampling requires nonnegative map values"
                )
            if self.total <= 0:
                raise DegenerateDataError(
                    "cannot sample map-proportionally from an all-zero map"
                )
            u = rng.random(k) * self.total
            idx[from_map] = np.searchsorted(self.cdf, u, side="right")
        if k < n:
            idx[~from_map] = rng.integers(0, self.n_pixels, size=n - k)
        x = (idx % self.width).astype(np.float64)
        y = (idx // self.width).astype(np.float64)
        return np.column_stack([x, y])


def sample_fixation_points(
    smap: SaliencyMap, bias_lambda: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """(n, 2) array of (x, y) pixel-node targets from the lambda mixture.

    Each point independently: with probability lambda a map-proportional
    categorical draw over pixels, else uniform over pixels.
    """
    return _MixtureSampler(smap).draw(bias_lambda, n, rng)


def _separated_points(
    sampler: _MixtureSampler,
    bias_lambda: float,
    n: int,
    rng: np.random.Generator,
    min_sep_px: float,
) -> np.ndarray:
    """Mixture draws with consecutive points redrawn until >= min_sep_px apart."""
    pts = sampler.draw(bias_lambda, n, rng)
    for i in range(1, n):
        attempts = 0
        while (
            math.hypot(pts[i, 0] - pts[i - 1, 0], pts[i, 1] - pts[i - 1, 1]) < min_sep_px
            and attempts < _SEPARATION_ATTEMPTS
        ):
            pts[i] = sampler.draw(bias_lambda, 1, rng)[0]
            attempts += 1
    return pts


def plan_fixations(
    profile: SimProfile,
    rng: np.random.Generator,
    trial_ms: float,
    dt_ms: float,
) -> np.ndarray:
    """Grid-aligned fixation durations fitting the trial window.

    Count is 1 + Poisson(mean - 1); durations are log-normal, clipped to
    MIN_PLANT_DURATION_MS, rounded onto the sample grid.  The schedule is
    truncated to the prefix that fits (with inter-fixation ramps).
    """
    m = 1 + int(rng.poisson(max(0.0, profile.fixations_per_trial - 1.0)))
    raw = rng.lognormal(profile.duration_log_mu, profile.duration_log_sigma, size=m)
    dur = np.maximum(MIN_PLANT_DURATION_MS, np.round(raw / dt_ms) * dt_ms)
    occupied = np.cumsum(dur) + RAMP_MS * np.arange(m)
    fits = occupied <= trial_ms
    if not fits[0]:
        return np.array([math.floor(trial_ms / dt_ms) * dt_ms])
    return dur[fits]


def synthesize_trace(
    points_px: np.ndarray,
    durations_ms: np.ndarray,
    t0_ms: float,
    geometry: ViewingGeometry,
    jitter_deg: float,
    rng: np.random.Generator,
) -> tuple[dict[Eye, GazeTrace], np.ndarray]:
    """Binocular 500 Hz traces visiting each point for its duration.

    Stationary segments hold the target point (plus per-eye Gaussian
    jitter); consecutive points are joined by linear ramps of RAMP_MS.
    Returns the traces and the planted start time of each fixation.
    """
    if len(points_px) != len(durations_ms):
        raise ValueError("points and durations must have equal length")
    dt = geometry.sample_interval_ms
    m = len(points_px)
    n_ramp = int(round(RAMP_MS / dt)) - 1  # interior samples only
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    starts = np.empty(m, dtype=np.float64)
    offset = 0  # sample index of the next segment
    for k in range(m):
        starts[k] = t0_ms + offset * dt
        n_fix = int(round(durations_ms[k] / dt)) + 1  # endpoints inclusive
        xs.append(np.full(n_fix, points_px[k, 0]))
        ys.append(np.full(n_fix, points_px[k, 1]))
        offset += n_fix
        if k + 1 < m:
            frac = np.arange(1, n_ramp + 1) / (n_ramp + 1)
            xs.append(points_px[k, 0] + frac * (points_px[k + 1, 0] - points_px[k, 0]))
            ys.append(points_px[k, 1] + frac * (points_px[k + 1, 1] - points_px[k, 1]))
            offset += n_ramp
    base_x = np.concatenate(xs)
    base_y = np.concatenate(ys)
    t = t0_ms + dt * np.arange(len(base_x))
    sigma_px = deg_to_px(geometry, jitter_deg)
    traces: dict[Eye, GazeTrace] = {}
    for eye in (Eye.LEFT, Eye.RIGHT):
        if sigma_px > 0:
            ex = base_x + rng.normal(0.0, sigma_px, len(base_x))
            ey = base_y + rng.normal(0.0, sigma_px, len(base_y))
        else:
            ex, ey = base_x.copy(), base_y.copy()
        traces[eye] = GazeTrace(
            t_ms=t,
            x_px=ex,
            y_px=ey,
            pupil=np.full(len(t), PUPIL_MM),
            valid=np.ones(len(t), dtype=bool),
        )
    return traces, starts


def simulate_trial(
    profile: SimProfile,
    smap: SaliencyMap,
    rect: DisplayRect,
    stimulus_size: tuple[int, int],
    geometry: ViewingGeometry,
    rng: np.random.Generator,
    trial_ms: float,
    onset_ms: float = 0.0,
    _sampler: _MixtureSampler | None = None,
) -> tuple[dict[Eye, GazeTrace], list[PlantedFixation]]:
    """One trial: plan, sample targets, render traces, report ground truth."""
    dt = geometry.sample_interval_ms
    durations = plan_fixations(profile, rng, trial_ms, dt)
    min_sep_px = deg_to_px(geometry, MIN_SEPARATION_DEG)
    sampler = _sampler if _sampler is not None else _MixtureSampler(smap)
    pts_img = _separated_points(sampler, profile.bias_lambda, len(durations), rng, min_sep_px)
    sx, sy = from_stimulus_coords(pts_img[:, 0], pts_img[:, 1], rect, stimulus_size)
    traces, starts = synthesize_trace(
        np.column_stack([sx, sy]), durations, onset_ms, geometry, profile.jitter_deg, rng
    )
    planted = [
        PlantedFixation(
            start_ms=float(starts[k]),
            end_ms=float(starts[k] + durations[k]),
            x_img=float(pts_img[k, 0]),
            y_img=float(pts_img[k, 1]),
        )
        for k in range(len(durations))
    ]
    return traces, planted


def centered_rect(
    geometry: ViewingGeometry, stimulus_size: tuple[int, int]
) -> DisplayRect:
    """1:1 scale display rect centered on screen; exact px round-trips."""
    w, h = stimulus_size
    if w > geometry.screen_width_px or h > geometry.screen_height_px:
        raise ValueError("stimulus larger than screen")
    return DisplayRect(
        x=float((geometry.screen_width_px - w) // 2),
        y=float((geometry.screen_height_px - h) // 2),
        width=float(w),
        height=float(h),
    )


def simulate_cohort(
    case_profile: SimProfile,
    control_profile: SimProfile,
    n_subjects: int = 30,
    n_trials: int = 20,
    seed: int = 0,
    stimulus_size: tuple[int, int] = (800, 600),
    geometry: ViewingGeometry = DEFAULT_GEOMETRY,
    trial_ms: float = 4000.0,
    smap: SaliencyMap | None = None,
    attribute_name: str = "blobs",
) -> SimulatedCohort:
    """In-memory cohort: manifest with bound traces plus planted ground truth.

    Deterministic for a fixed seed; per-trial RNG substreams are derived
    hierarchically so subject generation order never matters.
    """
    if n_subjects < 1 or n_trials < 1:
        raise ValueError("need at least 1 subject and 1 trial per group")
    if trial_ms < 2 * MIN_PLANT_DURATION_MS:
        raise ValueError("trial_ms too short to plant a detectable fixation")
    w, h = stimulus_size
    if smap is None:
        smap = make_stimulus_map(w, h)
    sampler = _MixtureSampler(smap)
    rect = centered_rect(geometry, stimulus_size)
    stimulus_id = "stim00"

    subjects: dict[str, Group] = {}
    trials: list[TrialRecord] = []
    planted: dict[str, list[PlantedFixation]] = {}
    root_ss = np.random.SeedSequence(seed)
    groups = [(Group.CASE, "case", case_profile), (Group.CONTROL, "ctrl", control_profile)]
    subject_seeds = root_ss.spawn(2 * n_subjects)
    for g_idx, (group, prefix, profile) in enumerate(groups):
        for i in range(n_subjects):
            subject_id = f"{prefix}{i:02d}"
            subjects[subject_id] = group
            trial_seeds = subject_seeds[g_idx * n_subjects + i].spawn(n_trials)
            for j in range(n_trials):
                rng = np.random.default_rng(trial_seeds[j])
                traces, gt = simulate_trial(
                    profile, smap, rect, stimulus_size, geometry, rng, trial_ms,
                    _sampler=sampler,
                )
                trial_id = f"{subject_id}_t{j:02d}"
                trials.append(
                    TrialRecord(
                        trial_id=trial_id,
                        subject_id=subject_id,
                        group=group,
                        stimulus_id=stimulus_id,
                        display_rect=rect,
                        onset_ms=0.0,
                        offset_ms=trial_ms,
                        gaze_file=f"gaze/{subject_id}/{trial_id}.csv",
                        traces=traces,
                    )
                )
                planted[trial_id] = gt

    manifest = CohortManifest(
        geometry=geometry,
        subjects=subjects,
        trials=trials,
        stimuli={stimulus_id: StimulusInfo(stimulus_id=stimulus_id, width=w, height=h)},
        attributes=[
            AttributeEntry(
                name=attribute_name,
                positive_prompt="synthetic",
                smooth_sigma_px=0.0,
            )
        ],
    )
    manifest.validate()
    return SimulatedCohort(
        manifest=manifest,
        planted=planted,
        maps={stimulus_id: smap},
        case_profile=case_profile,
        control_profile=control_profile,
    )


def write_cohort(cohort: SimulatedCohort, out_dir) -> None:
    """Materialize a simulated cohort: manifest, gaze CSVs, maps, ground truth.

    Every byte is deterministic for a fixed cohort (repr-format floats,
    insertion-ordered JSON), so identical seeds give identical trees.
    """
    out = Path(out_dir)
    manifest = cohort.manifest
    (out / "maps").mkdir(parents=True, exist_ok=True)
    for attribute in manifest.attributes:
        for stimulus_id, smap in cohort.maps.items():
            rerooted = replace_root(manifest, out)
            for path in rerooted.map_paths(stimulus_id, attribute):
                path.parent.mkdir(parents=True, exist_ok=True)
                write_pgm(path, quantize_255(smap.values))
    for trial in manifest.trials:
        path = out / trial.gaze_file
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            write_gaze_csv(fh, interleave_traces(trial.traces))
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2)
        fh.write("\n")
    gt = {
        trial_id: [
            {
                "start_ms": p.start_ms,
                "end_ms": p.end_ms,
                "x_img": p.x_img,
                "y_img": p.y_img,
            }
            for p in fixations
        ]
        for trial_id, fixations in cohort.planted.items()
    }
    with open(out / "planted.json", "w") as fh:
        json.dump(gt, fh, indent=2)
        fh.write("\n")


def replace_root(manifest: CohortManifest, root) -> CohortManifest:
    return CohortManifest(
        geometry=manifest.geometry,
        subjects=manifest.subjects,
        trials=manifest.trials,
        stimuli=manifest.stimuli,
        attributes=manifest.attributes,
        root=Path(root),
    )


def generate_cohort(
    case_profile: SimProfile,
    control_profile: SimProfile,
    out_dir,
    **kwargs,
) -> SimulatedCohort:
    """simulate_cohort then write the tree under out_dir; manifest re-rooted there."""
    cohort = simulate_cohort(case_profile, control_profile, **kwargs)
    write_cohort(cohort, out_dir)
    cohort.manifest = replace_root(cohort.manifest, out_dir)
    return cohort
