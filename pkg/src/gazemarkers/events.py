"""Oculomotor event classification: blinks, fixations, saccades.

Fixations are grown with a dispersion window (max pairwise visual angle)
and saccades are taken from the leftover sample runs by a velocity plus
amplitude rule.  All angular thresholds are in visual degrees; comparisons
happen on chord lengths between unit eye rays, which is numerically stable
for the sub-degree angles involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GazeDataError
from .ingest import (
    DisplayRect,
    Eye,
    GazeTrace,
    ViewingGeometry,
    angular_velocity,
    eye_ray_vectors,
    to_stimulus_coords,
    valid_runs,
)

_GROW_BLOCK = 128  # cap on samples appended per dispersion check batch


@dataclass(frozen=True)
class DetectionConfig:
    fixation_dispersion_deg: float = 0.1
    fixation_min_ms: float = 100.0
    saccade_velocity_deg_s: float = 30.0
    saccade_min_amplitude_deg: float = 0.1
    fixation_keep_min_ms: float = 50.0
    oob_discard_fraction: float = 0.20
    blink_pad_ms: float = 50.0
    velocity_window_samples: int = 3
    # max pairwise visual angle; the alternative bounding-box reading is
    # axis-dependent and not offered
    dispersion_metric: str = "max_pairwise"

    def __post_init__(self):
        for name in (
            "fixation_dispersion_deg",
            "fixation_min_ms",
            "saccade_velocity_deg_s",
            "saccade_min_amplitude_deg",
            "fixation_keep_min_ms",
            "oob_discard_fraction",
            "blink_pad_ms",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_json_dict(self) -> dict:
        return {
            "fixation_dispersion_deg": self.fixation_dispersion_deg,
            "fixation_min_ms": self.fixation_min_ms,
            "saccade_velocity_deg_s": self.saccade_velocity_deg_s,
            "saccade_min_amplitude_deg": self.saccade_min_amplitude_deg,
            "fixation_keep_min_ms": self.fixation_keep_min_ms,
            "oob_discard_fraction": self.oob_discard_fraction,
            "blink_pad_ms": self.blink_pad_ms,
            "velocity_window_samples": self.velocity_window_samples,
            "dispersion_metric": self.dispersion_metric,
        }


@dataclass(frozen=True)
class FixationEvent:
    start_ms: float
    end_ms: float
    centroid_x: float
    centroid_y: float
    dispersion_deg: float
    index_start: int  # inclusive trace sample range
    index_stop: int  # exclusive
    in_image_coords: bool = False
    oob_fraction: float = float("nan")

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms

    @property
    def sample_indices(self) -> np.ndarray:
        return np.arange(self.index_start, self.index_stop)


@dataclass(frozen=True)
class SaccadeEvent:
    start_ms: float
    end_ms: float
    amplitude_deg: float
    peak_velocity_deg_s: float

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class BlinkEvent:
    start_ms: float
    end_ms: float


# --------------------------------------------------------------------------
# blinks


def detect_blinks(
    trace: GazeTrace,
    config: DetectionConfig,
    window: tuple[float, float] | None = None,
) -> list[BlinkEvent]:
    """Maximal lost-signal runs (invalid or pupil 0), padded and merged.

    Each run is padded by ``blink_pad_ms`` per side, overlapping padded
    intervals are merged, and the result is clipped to ``window`` (the
    trial window; defaults to the trace extent).
    """
    n = len(trace)
    if n == 0:
        return []
    lo, hi = window if window is not None else (float(trace.t_ms[0]), float(trace.t_ms[-1]))
    lost = (~trace.valid) | (trace.pupil == 0)
    intervals: list[list[float]] = []
    i = 0
    while i < n:
        if lost[i]:
            j = i
            while j < n and lost[j]:
                j += 1
            start = max(lo, float(trace.t_ms[i]) - config.blink_pad_ms)
            end = min(hi, float(trace.t_ms[j - 1]) + config.blink_pad_ms)
            if intervals and start <= intervals[-1][1]:
                intervals[-1][1] = max(intervals[-1][1], end)
            else:
                intervals.append([start, end])
            i = j
        else:
            i += 1
    return [BlinkEvent(a, b) for a, b in intervals]


def exclude_blinks(trace: GazeTrace, blinks: list[BlinkEvent]) -> GazeTrace:
    """Copy of the trace with samples inside blink intervals marked invalid."""
    out = trace.copy()
    for blink in blinks:
        inside = (out.t_ms >= blink.start_ms) & (out.t_ms <= blink.end_ms)
        out.valid[inside] = False
    return out


# --------------------------------------------------------------------------
# fixations and saccades


def _chord_sq_threshold(angle_deg: float) -> float:
    # chord between unit vectors u, v: |u-v|^2 = 2 - 2 u.v = (2 sin(angle/2))^2
    return (2.0 * math.sin(math.radians(angle_deg) / 2.0)) ** 2


_tri_masks: dict[int, np.ndarray] = {}


def _strict_lower(m: int) -> np.ndarray:
    mask = _tri_masks.get(m)
    if mask is None:
        mask = np.tri(m, m, -1, dtype=bool)
        _tri_masks[m] = mask
    return mask


def _grow_window(vecs: np.ndarray, start: int, stop: int, chord_sq_max: float) -> tuple[int, float]:
    """Largest j such that samples [start..j] have all pairwise chord^2 <= max.

    Returns (j, max_chord_sq_in_window).  ``vecs`` holds unit rays for the
    whole segment; indices are segment-local.  Candidates are checked in
    blocks but acceptance stays strictly incremental, so the break point is
    identical to one-at-a-time growth.
    """
    j = start
    worst = 0.0
    # scalar probe: saccade samples reject the very first candidate, so skip
    # the block machinery for that common case
    if j + 1 < stop:
        first_chord = 2.0 - 2.0 * float(vecs[j] @ vecs[j + 1])
        if first_chord > chord_sq_max:
            return j, worst
    block = 8
    while j + 1 < stop:
        end = min(j + block, stop - 1)
        cand = vecs[j + 1 : end + 1]
        m = cand.shape[0]
        # min dot of each candidate vs the already-accepted window ...
        vs_window = (cand @ vecs[start : j + 1].T).min(axis=1)
        # ... and vs strictly-prior candidates within the block
        if m > 1:
            gram = cand @ cand.T
            prior = np.where(_strict_lower(m), gram, np.inf).min(axis=1)
            cand_min = np.minimum(vs_window, prior)
        else:
            cand_min = vs_window
        # prefix min dot -> prefix max chord^2 (monotone exact transform)
        running_chord = 2.0 - 2.0 * np.minimum.accumulate(cand_min)
        ok = running_chord <= chord_sq_max
        if ok.all():
            j = end
            worst = max(worst, float(running_chord[-1]))
            block = min(block * 2, _GROW_BLOCK)
        else:
            n_ok = int(np.argmin(ok))  # first rejected candidate
            if n_ok > 0:
                worst = max(worst, float(running_chord[n_ok - 1]))
            return j + n_ok, worst
    return j, worst


def _fixations_in_segment(
    trace: GazeTrace,
    vecs: np.ndarray,
    seg_start: int,
    seg_stop: int,
    config: DetectionConfig,
) -> list[FixationEvent]:
    chord_sq_max = _chord_sq_threshold(config.fixation_dispersion_deg)
    t = trace.t_ms
    events: list[FixationEvent] = []
    i = seg_start
    while i < seg_stop:
        j, worst = _grow_window(vecs, i - seg_start, seg_stop - seg_start, chord_sq_max)
        j += seg_start
        if t[j] - t[i] >= config.fixation_min_ms:
            cx = float(np.mean(trace.x_px[i : j + 1]))
            cy = float(np.mean(trace.y_px[i : j + 1]))
            dispersion = math.degrees(2.0 * math.asin(min(1.0, math.sqrt(worst) / 2.0)))
            events.append(
                FixationEvent(
                    start_ms=float(t[i]),
                    end_ms=float(t[j]),
                    centroid_x=cx,
                    centroid_y=cy,
                    dispersion_deg=dispersion,
                    index_start=i,
                    index_stop=j + 1,
                )
            )
            i = j + 1
        else:
            i += 1
    return events


def detect_events(
    trace: GazeTrace, geometry: ViewingGeometry, config: DetectionConfig
) -> tuple[list[FixationEvent], list[SaccadeEvent]]:
    """Classify a blink-excised trace into fixations and saccades.

    Fixation windows grow while the max pairwise visual angle stays within
    ``fixation_dispersion_deg`` and are emitted once they span at least
    ``fixation_min_ms``.  Sample runs left unclassified become saccades
    when their peak angular velocity and net amplitude clear the saccade
    thresholds; anything else stays unclassified.  Centroids are in screen
    pixels here; see :func:`project_fixations`.
    """
    fixations: list[FixationEvent] = []
    saccades: list[SaccadeEvent] = []
    if len(trace) == 0:
        return fixations, saccades
    velocity = angular_velocity(trace, geometry, config.velocity_window_samples)
    for seg_start, seg_stop in valid_runs(trace.valid):
        vecs = eye_ray_vectors(geometry, trace.x_px[seg_start:seg_stop], trace.y_px[seg_start:seg_stop])
        seg_fix = _fixations_in_segment(trace, vecs, seg_start, seg_stop, config)
        fixations.extend(seg_fix)
        # leftover runs between fixations are saccade candidates
        bounds = [seg_start]
        for f in seg_fix:
            bounds.extend([f.index_start, f.index_stop])
        bounds.append(seg_stop)
        for a, b in zip(bounds[0::2], bounds[1::2]):
            if b - a < 1:
                continue
            if len(velocity) == 0:
                continue
            peak = np.nanmax(velocity[a:b]) if np.any(~np.isnan(velocity[a:b])) else math.nan
            u = vecs[a - seg_start]
            v = vecs[b - 1 - seg_start]
            amplitude = math.degrees(
                math.atan2(float(np.linalg.norm(np.cross(u, v))), float(np.dot(u, v)))
            )
            if (
                not math.isnan(peak)
                and peak >= config.saccade_velocity_deg_s
                and amplitude >= config.saccade_min_amplitude_deg
            ):
                saccades.append(
                    SaccadeEvent(
                        start_ms=float(trace.t_ms[a]),
                        end_ms=float(trace.t_ms[b - 1]),
                        amplitude_deg=amplitude,
                        peak_velocity_deg_s=float(peak),
                    )
                )
    return fixations, saccades


def project_fixations(
    fixations: list[FixationEvent],
    trace: GazeTrace,
    rect: DisplayRect,
    stimulus_size: tuple[int, int],
) -> list[FixationEvent]:
    """Express fixations in stimulus-image coordinates and score out-of-bounds.

    The centroid maps through the same affine as the samples (means commute
    with affine maps); ``oob_fraction`` is the fraction of the fixation's
    samples falling outside [0, w) x [0, h).
    """
    w, h = stimulus_size
    out = []
    for f in fixations:
        sl = slice(f.index_start, f.index_stop)
        ix, iy = to_stimulus_coords(trace.x_px[sl], trace.y_px[sl], rect, stimulus_size)
        oob = (ix < 0) | (ix >= w) | (iy < 0) | (iy >= h)
        cx, cy = to_stimulus_coords(f.centroid_x, f.centroid_y, rect, stimulus_size)
        out.append(
            replace(
                f,
                centroid_x=float(cx),
                centroid_y=float(cy),
                in_image_coords=True,
                oob_fraction=float(np.mean(oob)),
            )
        )
    return out


def filter_fixations(
    fixations: list[FixationEvent],
    stimulus_size: tuple[int, int],
    config: DetectionConfig,
) -> list[FixationEvent]:
    """Drop fixations shorter than the keep threshold or with >= 20% samples off-image."""
    kept = []
    for f in fixations:
        if not f.in_image_coords:
            raise GazeDataError("filter_fixations requires image-projected fixations")
        if f.duration_ms < config.fixation_keep_min_ms:
            continue
        if f.oob_fraction >= config.oob_discard_fraction:
            continue
        kept.append(f)
    return kept


# --------------------------------------------------------------------------
# binocular averaging


def binocular_average(left: GazeTrace, right: GazeTrace) -> GazeTrace:
    """Cyclopean trace: per-timestamp mean where both eyes are valid, the
    single valid eye otherwise, invalid when neither."""
    if len(left) != len(right) or not np.array_equal(left.t_ms, right.t_ms):
        raise GazeDataError("binocular averaging requires matching timestamp grids")
    both = left.valid & right.valid
    only_l = left.valid & ~right.valid
    only_r = right.valid & ~left.valid
    n = len(left)
    x = np.full(n, np.nan)
    y = np.full(n, np.nan)
    pupil = np.zeros(n)
    x[both] = 0.5 * (left.x_px[both] + right.x_px[both])
    y[both] = 0.5 * (left.y_px[both] + right.y_px[both])
    pupil[both] = 0.5 * (left.pupil[both] + right.pupil[both])
    x[only_l], y[only_l], pupil[only_l] = left.x_px[only_l], left.y_px[only_l], left.pupil[only_l]
    x[only_r], y[only_r], pupil[only_r] = right.x_px[only_r], right.y_px[only_r], right.pupil[only_r]
    return GazeTrace(left.t_ms.copy(), x, y, pupil, left.valid | right.valid)


def cyclopean_trace(traces: dict[Eye, GazeTrace]) -> GazeTrace:
    """Binocular average when both eyes recorded, else the single eye."""
    if Eye.LEFT in traces and Eye.RIGHT in traces:
        return binocular_average(traces[Eye.LEFT], traces[Eye.RIGHT])
    if not traces:
        raise GazeDataError("recording contains no eyes")
    return next(iter(traces.values()))


def events_to_json(
    blinks: list[BlinkEvent],
    fixations: list[FixationEvent],
    saccades: list[SaccadeEvent],
) -> list[dict]:
    """Event-dump records for debugging and golden tests, time-ordered."""
    rows: list[dict] = []
    for b in blinks:
        rows.append({"type": "blink", "start_ms": b.start_ms, "end_ms": b.end_ms})
    for f in fixations:
        rows.append(
            {
                "type": "fixation",
                "start_ms": f.start_ms,
                "end_ms": f.end_ms,
                "centroid": [f.centroid_x, f.centroid_y],
                "dispersion_deg": f.dispersion_deg,
                "oob_fraction": None if math.isnan(f.oob_fraction) else f.oob_fraction,
            }
        )
    for s in saccades:
        rows.append(
            {
                "type": "saccade",
                "start_ms": s.start_ms,
                "end_ms": s.end_ms,
                "amplitude_deg": s.amplitude_deg,
                "peak_velocity_deg_s": s.peak_velocity_deg_s,
            }
        )
    rows.sort(key=lambda r: (r["start_ms"], r["type"]))
    return rows
