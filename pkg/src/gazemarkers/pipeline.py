"""End-to-end analysis: manifest -> events -> metrics -> group comparisons.

The fold order is fixed (manifest trial order, manifest attribute order,
then center_bias, fixation_count, latencies) and every random stream is
derived hierarchically from the run seed, so repeated runs are
byte-identical regardless of the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, GazeDataError, MapFormatError
from .events import (
    DetectionConfig,
    FixationEvent,
    cyclopean_trace,
    detect_blinks,
    detect_events,
    exclude_blinks,
    filter_fixations,
    project_fixations,
)
from .ingest import AttributeEntry, CohortManifest, Group, TrialRecord, bind_trial
from .metrics import (
    CENTER_BIAS_KEY,
    FIXATION_COUNT_KEY,
    SubjectSummary,
    TrialMetrics,
    compute_trial_metrics,
    duration_saliency_correlation,
    fixation_density,
    latency_key,
    summarize_subject,
)
from .salmap import (
    MapKind,
    SaliencyMap,
    center_prior_map,
    differential_map,
    gaussian_smooth,
    load_map,
    normalize_255,
)
from .stats import GroupComparison, compare_groups

DEFAULT_SMOOTH_FRACTION = 0.02  # sigma = fraction * min(w, h) when unset
LATENCY_THRESHOLD_NORMALIZED = 127.0
LATENCY_THRESHOLD_DIFFERENTIAL = 0.0  # sign boundary of pos - neg


@dataclass(frozen=True)
class AnalysisConfig:
    granularity: str = "subject"  # or "trial"
    n_perm: int = 4999
    seed: int = 0
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    attributes: tuple[str, ...] | None = None  # None -> all manifest attributes
    smooth_sigma_px: float | None = None  # per-attribute override wins
    density_sigma_px: float | None = None
    center_prior_sigma_px: float | None = None
    compute_densities: bool = True  # big-grid smoothing; sweeps turn it off
    jobs: int = 1

    def __post_init__(self):
        if self.granularity not in ("subject", "trial"):
            raise ValueError("granularity must be 'subject' or 'trial'")
        if self.n_perm < 1:
            raise ValueError("n_perm must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class DensityEntry:
    group: str
    stimulus_id: str
    density: np.ndarray  # sums to 1, or all-zero
    peak: float
    sigma_px: float


@dataclass
class AnalysisResult:
    comparisons: list[GroupComparison]
    subject_summaries: list[SubjectSummary]
    trial_metrics: list[TrialMetrics]
    correlations: dict[str, dict[str, dict]]  # group -> attribute -> {r, p, n}
    densities: list[DensityEntry]
    attribute_names: list[str]
    map_sigmas: dict[str, float]  # attribute -> smoothing sigma used
    warnings: list[str]
    config: AnalysisConfig
    manifest: CohortManifest


def _effective_sigma(entry: AttributeEntry, config: AnalysisConfig, size: tuple[int, int]) -> float:
    if entry.smooth_sigma_px is not None:
        return float(entry.smooth_sigma_px)
    if config.smooth_sigma_px is not None:
        return float(config.smooth_sigma_px)
    return DEFAULT_SMOOTH_FRACTION * min(size)


def prepare_attribute_map(
    manifest: CohortManifest,
    stimulus_id: str,
    entry: AttributeEntry,
    config: AnalysisConfig,
    override: SaliencyMap | None = None,
) -> tuple[SaliencyMap, float]:
    """Load (or take), smooth, and normalize one attribute's map.

    Differential attributes load their pos/neg constituents, process each,
    and subtract.  Returns the ready-to-sample map and the sigma used.
    """
    stim = manifest.stimuli[stimulus_id]
    size = (stim.width, stim.height)
    sigma = _effective_sigma(entry, config, size)
    paths = manifest.map_paths(stimulus_id, entry)
    if override is not None:
        return normalize_255(gaussian_smooth(override, sigma)), sigma
    loaded = []
    for path in paths:
        if not path.exists():
            raise MapFormatError(
                f"missing map for attribute '{entry.name}' on stimulus "
                f"'{stimulus_id}': {path}"
            )
        raw = load_map(path, expected_size=size, attribute_name=entry.name)
        loaded.append(normalize_255(gaussian_smooth(raw, sigma)))
    if entry.differential:
        return differential_map(loaded[0], loaded[1]), sigma
    return loaded[0], sigma


def process_trial(
    trial: TrialRecord,
    manifest: CohortManifest,
    maps: dict[str, SaliencyMap],
    center_map: SaliencyMap,
    thresholds: dict[str, float],
    config: AnalysisConfig,
) -> tuple[TrialMetrics, list[FixationEvent]]:
    """Detect, project, filter, and score one trial's fixations."""
    if trial.traces is None:
        try:
            bind_trial(trial, manifest)
        except GazeDataError as exc:
            raise GazeDataError(f"trial {trial.trial_id}: {exc}") from exc
    stim = manifest.stimuli[trial.stimulus_id]
    size = (stim.width, stim.height)
    trace = cyclopean_trace(trial.traces)
    blinks = detect_blinks(trace, config.detection)
    clean = exclude_blinks(trace, blinks)
    fixations, _ = detect_events(clean, manifest.geometry, config.detection)
    fixations = project_fixations(fixations, clean, trial.display_rect, size)
    kept = filter_fixations(fixations, size, config.detection)
    tm = compute_trial_metrics(
        trial_id=trial.trial_id,
        subject_id=trial.subject_id,
        group=trial.group.value,
        stimulus_id=trial.stimulus_id,
        fixations=kept,
        attribute_maps=maps,
        center_map=center_map,
        latency_thresholds=thresholds,
        onset_ms=trial.onset_ms,
    )
    return tm, kept


def metric_keys(attribute_names) -> list[str]:
    """Fixed comparison order: attributes, center bias, count, latencies."""
    keys = list(attribute_names)
    keys.append(CENTER_BIAS_KEY)
    keys.append(FIXATION_COUNT_KEY)
    keys.extend(latency_key(a) for a in attribute_names)
    return keys


def _observations(
    key: str,
    granularity: str,
    summaries: list[SubjectSummary],
    trial_metrics: list[TrialMetrics],
    group: str,
) -> list[float]:
    if granularity == "subject":
        return [s.values[key] for s in summaries if s.group == group and key in s.values]
    return [t.values[key] for t in trial_metrics if t.group == group and key in t.values]


def analyze_cohort(
    manifest: CohortManifest,
    config: AnalysisConfig | None = None,
    map_overrides: dict[tuple[str, str], SaliencyMap] | None = None,
) -> AnalysisResult:
    """Run the full pipeline over a cohort manifest.

    map_overrides maps (stimulus_id, attribute_name) to an already-loaded
    raw map, letting simulated cohorts stay in memory; processing is
    identical either way.
    """
    config = config or AnalysisConfig()
    entries = list(manifest.attributes)
    if config.attributes is not None:
        wanted = set(config.attributes)
        unknown = wanted - {e.name for e in entries}
        if unknown:
            raise MapFormatError(f"unknown attributes requested: {sorted(unknown)}")
        entries = [e for e in entries if e.name in wanted]
    attribute_names = [e.name for e in entries]
    overrides = map_overrides or {}

    # per-stimulus prepared maps, center priors, and latency thresholds
    prepared: dict[str, dict[str, SaliencyMap]] = {}
    centers: dict[str, SaliencyMap] = {}
    thresholds_by_stim: dict[str, dict[str, float]] = {}
    map_sigmas: dict[str, float] = {}
    for stimulus_id, stim in manifest.stimuli.items():
        per_attr: dict[str, SaliencyMap] = {}
        thresholds: dict[str, float] = {}
        for entry in entries:
            smap, sigma = prepare_attribute_map(
                manifest,
                stimulus_id,
                entry,
                config,
                override=overrides.get((stimulus_id, entry.name)),
            )
            per_attr[entry.name] = smap
            map_sigmas[entry.name] = sigma
            thresholds[entry.name] = (
                LATENCY_THRESHOLD_DIFFERENTIAL
                if smap.kind is MapKind.DIFFERENTIAL
                else LATENCY_THRESHOLD_NORMALIZED
            )
        prepared[stimulus_id] = per_attr
        thresholds_by_stim[stimulus_id] = thresholds
        centers[stimulus_id] = center_prior_map(
            stim.width, stim.height, config.center_prior_sigma_px
        )

    def run_one(trial: TrialRecord) -> tuple[TrialMetrics, list[FixationEvent]]:
        return process_trial(
            trial,
            manifest,
            prepared[trial.stimulus_id],
            centers[trial.stimulus_id],
            thresholds_by_stim[trial.stimulus_id],
            config,
        )

    trials = list(manifest.trials)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            processed = list(pool.map(run_one, trials))
    else:
        processed = [run_one(t) for t in trials]
    trial_metrics = [tm for tm, _ in processed]

    # subject summaries in manifest subject order
    warnings: list[str] = []
    by_subject: dict[str, list[TrialMetrics]] = {sid: [] for sid in manifest.subjects}
    for tm in trial_metrics:
        by_subject[tm.subject_id].append(tm)
    summaries: list[SubjectSummary] = []
    for sid, group in manifest.subjects.items():
        subject_trials = by_subject[sid]
        if not subject_trials:
            continue
        summary = summarize_subject(sid, group.value, subject_trials)
        if summary is None:
            warnings.append(f"subject {sid}: no trials with retained fixations; excluded")
        else:
            summaries.append(summary)
    for group in (Group.CASE, Group.CONTROL):
        if not any(s.group == group.value for s in summaries):
            raise DegenerateDataError(
                f"group '{group.value}' has no subjects with retained fixations"
            )

    # one comparison row per metric key, seeded substreams in key order
    keys = metric_keys(attribute_names)
    optional_keys = {latency_key(a) for a in attribute_names}
    children = np.random.SeedSequence(config.seed).spawn(len(keys))
    comparisons: list[GroupComparison] = []
    for key, child in zip(keys, children):
        case_vals = _observations(key, config.granularity, summaries, trial_metrics, "case")
        ctrl_vals = _observations(key, config.granularity, summaries, trial_metrics, "control")
        if len(case_vals) < 2 or len(ctrl_vals) < 2:
            if key in optional_keys:
                warnings.append(f"{key}: fewer than 2 observations per group; row skipped")
                continue
            raise DegenerateDataError(
                f"{key}: need >= 2 observations per group "
                f"(got {len(case_vals)} case, {len(ctrl_vals)} control)"
            )
        comparisons.append(
            compare_groups(
                case_vals,
                ctrl_vals,
                key,
                n_perm=config.n_perm,
                seed=np.random.default_rng(child),
            )
        )

    # pooled per-group duration/saliency correlations per attribute
    correlations: dict[str, dict[str, dict]] = {}
    for group in ("case", "control"):
        per_attr = {}
        for name in attribute_names:
            pairs = [
                pair
                for tm in trial_metrics
                if tm.group == group
                for pair in tm.fixation_pairs.get(name, [])
            ]
            if len(pairs) >= 3:
                try:
                    r, p = duration_saliency_correlation(pairs)
                except DegenerateDataError:
                    continue
                per_attr[name] = {"r": r, "p": p, "n": len(pairs)}
        correlations[group] = per_attr

    # duration-weighted density per group per stimulus
    densities: list[DensityEntry] = []
    group_stim_fix: dict[tuple[str, str], list[FixationEvent]] = {}
    for (tm, kept), trial in zip(processed, trials):
        group_stim_fix.setdefault((trial.group.value, trial.stimulus_id), []).extend(kept)
    if config.compute_densities:
        for stimulus_id, stim in manifest.stimuli.items():
            size = (stim.width, stim.height)
            dens_sigma = (
                config.density_sigma_px
                if config.density_sigma_px is not None
                else DEFAULT_SMOOTH_FRACTION * min(size)
            )
            for group in ("case", "control"):
                fixs = group_stim_fix.get((group, stimulus_id), [])
                density = fixation_density(fixs, size, dens_sigma)
                densities.append(
                    DensityEntry(
                        group=group,
                        stimulus_id=stimulus_id,
                        density=density,
                        peak=float(density.max()) if density.size else 0.0,
                        sigma_px=dens_sigma,
                    )
                )

    return AnalysisResult(
        comparisons=comparisons,
        subject_summaries=summaries,
        trial_metrics=trial_metrics,
        correlations=correlations,
        densities=densities,
        attribute_names=attribute_names,
        map_sigmas=map_sigmas,
        warnings=warnings,
        config=config,
        manifest=manifest,
    )
