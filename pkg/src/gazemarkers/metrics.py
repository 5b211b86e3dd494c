"""Per-trial and per-subject gaze markers scored against saliency maps.

Metric keys
-----------
Every metric a trial can produce is addressed by a flat string key so that
aggregation and group comparison share one code path:

* ``<attribute>``          mean fixation saliency on that attribute map
* ``center_bias``          mean fixation saliency on the center-prior map
* ``fixation_count``       number of retained fixations
* ``latency_<attribute>``  ms from onset to the first salient fixation

Trials with zero retained fixations contribute no values at all (absent,
never zero), and subject summaries average only over trials that have the
metric present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .errors import DegenerateDataError
from .events import FixationEvent
from .salmap import SaliencyMap, sample_saliency, smooth_array

CENTER_BIAS_KEY = "center_bias"
FIXATION_COUNT_KEY = "fixation_count"
LATENCY_PREFIX = "latency_"

# midpoint of the normalized [0,255] range; signed differential maps use 0
DEFAULT_LATENCY_THRESHOLD = 127.0


def latency_key(attribute: str) -> str:
    return LATENCY_PREFIX + attribute


@dataclass
class TrialMetrics:
    trial_id: str
    subject_id: str
    group: str
    stimulus_id: str
    fixation_count: int
    # metric key -> value; keys absent when the trial produced no value
    values: dict[str, float] = field(default_factory=dict)
    # attribute -> (duration_ms, saliency) per fixation, for pooled correlation
    fixation_pairs: dict[str, list[tuple[float, float]]] = field(default_factory=dict)


@dataclass
class SubjectSummary:
    subject_id: str
    group: str
    # metric key -> unweighted mean over this subject's contributing trials
    values: dict[str, float]
    # metric key -> number of trials that contributed
    n_trials: dict[str, int]


def _centroid_arrays(fixations) -> tuple[np.ndarray, np.ndarray]:
    cx = np.array([f.centroid_x for f in fixations], dtype=np.float64)
    cy = np.array([f.centroid_y for f in fixations], dtype=np.float64)
    return cx, cy


def _sample_at_centroids(fixations, smap: SaliencyMap) -> np.ndarray:
    """Map values at fixation centroids, clamped into the bilinear domain.

    Filtered fixations sit inside the image; the clamp only absorbs the
    half-open boundary strip (< 1 px) that survives the OOB filter.
    """
    cx, cy = _centroid_arrays(fixations)
    cx = np.clip(cx, 0.0, smap.width - 1)
    cy = np.clip(cy, 0.0, smap.height - 1)
    return np.atleast_1d(sample_saliency(smap, cx, cy))


def trial_fixation_saliency(fixations, smap: SaliencyMap) -> float | None:
    """Unweighted mean map value over fixation centroids; None when empty."""
    if not fixations:
        return None
    return float(_sample_at_centroids(fixations, smap).mean())


def latency_to_salient_fixation(
    fixations,
    smap: SaliencyMap,
    threshold: float = DEFAULT_LATENCY_THRESHOLD,
    onset_ms: float = 0.0,
) -> float | None:
    """start_ms - onset_ms of the first fixation with saliency >= threshold.

    Fixations are scanned in time order; None when no fixation qualifies.
    """
    if not fixations:
        return None
    ordered = sorted(fixations, key=lambda f: f.start_ms)
    vals = _sample_at_centroids(ordered, smap)
    for fix, val in zip(ordered, vals):
        if val >= threshold:
            return float(fix.start_ms - onset_ms)
    return None


def fixation_density(
    fixations,
    stimulus_size: tuple[int, int],
    sigma_px: float,
) -> np.ndarray:
    """Duration-weighted fixation density over the stimulus grid.

    Each fixation deposits its duration at the pixel nearest its centroid;
    the grid is Gaussian-smoothed and renormalized to sum to 1.  All-zero
    when there are no fixations.
    """
    w, h = stimulus_size
    grid = np.zeros((h, w), dtype=np.float64)
    for f in fixations:
        ix = int(np.clip(round(f.centroid_x), 0, w - 1))
        iy = int(np.clip(round(f.centroid_y), 0, h - 1))
        grid[iy, ix] += f.duration_ms
    total = grid.sum()
    if total == 0:
        return grid
    grid = smooth_array(grid, sigma_px)
    return grid / grid.sum()


def pearson_r(x, y) -> tuple[float, float]:
    """Pearson r with two-sided p from the t distribution (df = n - 2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n != len(y) or n < 3:
        raise DegenerateDataError("correlation requires >= 3 paired values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateDataError("undefined correlation: zero variance")
    r = float(dx @ dy / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if 1.0 - r * r <= 0:
        return r, 0.0
    t_sq = df * r * r / (1.0 - r * r)
    # two-sided p = regularized incomplete beta I_{df/(df+t^2)}(df/2, 1/2)
    p = float(betainc(df / 2.0, 0.5, df / (df + t_sq)))
    return r, p


def duration_saliency_correlation(pairs) -> tuple[float, float]:
    """Pooled per-fixation (duration, saliency) correlation for one group."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise DegenerateDataError("correlation requires >= 3 paired values")
    return pearson_r(arr[:, 0], arr[:, 1])


def compute_trial_metrics(
    trial_id: str,
    subject_id: str,
    group: str,
    stimulus_id: str,
    fixations: list[FixationEvent],
    attribute_maps: dict[str, SaliencyMap],
    center_map: SaliencyMap | None = None,
    latency_thresholds: dict[str, float] | None = None,
    onset_ms: float = 0.0,
) -> TrialMetrics:
    """Score one trial's filtered fixations against every attribute map.

    Zero-fixation trials come back with an empty values dict; aggregation
    skips them entirely.
    """
    tm = TrialMetrics(
        trial_id=trial_id,
        subject_id=subject_id,
        group=group,
        stimulus_id=stimulus_id,
        fixation_count=len(fixations),
    )
    if not fixations:
        return tm
    tm.values[FIXATION_COUNT_KEY] = float(len(fixations))
    thresholds = latency_thresholds or {}
    durations = [f.duration_ms for f in fixations]
    for name, smap in attribute_maps.items():
        vals = _sample_at_centroids(fixations, smap)
        tm.values[name] = float(vals.mean())
        tm.fixation_pairs[name] = list(zip(durations, vals.tolist()))
        thr = thresholds.get(name, DEFAULT_LATENCY_THRESHOLD)
        lat = latency_to_salient_fixation(fixations, smap, thr, onset_ms)
        if lat is not None:
            tm.values[latency_key(name)] = lat
    if center_map is not None:
        tm.values[CENTER_BIAS_KEY] = float(
            _sample_at_centroids(fixations, center_map).mean()
        )
    return tm


def summarize_subject(
    subject_id: str,
    group: str,
    trials: list[TrialMetrics],
) -> SubjectSummary | None:
    """Per-metric unweighted means over trials with >= 1 retained fixation.

    None when every trial came back empty; callers drop the subject with a
    warning.
    """
    kept = [t for t in trials if t.fixation_count >= 1]
    if not kept:
        return None
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for t in kept:
        for key, val in t.values.items():
            sums[key] = sums.get(key, 0.0) + val
            counts[key] = counts.get(key, 0) + 1
    means = {k: sums[k] / counts[k] for k in sums}
    return SubjectSummary(
        subject_id=subject_id, group=group, values=means, n_trials=counts
    )
