"""Gaze recording ingest: CSV parsing, cohort manifests, viewing geometry.

Screen coordinates are continuous pixels with the origin at the top-left
corner; the observer's eye sits on the normal through the screen center at
the configured viewing distance, which is what turns pixel offsets into
visual angles.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import GazeDataError, GeometryError, ManifestError

GAZE_CSV_HEADER = ["timestamp_ms", "eye", "x_px", "y_px", "pupil"]
LOST_SIGNAL_SENTINELS = ("", ".")


class Eye(str, Enum):
    LEFT = "L"
    RIGHT = "R"


class Group(str, Enum):
    CASE = "case"
    CONTROL = "control"


@dataclass(frozen=True)
class ViewingGeometry:
    """Physical display setup; all thresholds are expressed in visual degrees."""

    screen_width_px: int
    screen_height_px: int
    screen_width_mm: float
    screen_height_mm: float
    viewing_distance_mm: float
    sampling_rate_hz: float

    def __post_init__(self):
        for name in (
            "screen_width_px",
            "screen_height_px",
            "screen_width_mm",
            "screen_height_mm",
            "viewing_distance_mm",
            "sampling_rate_hz",
        ):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be strictly positive")
        px, py = self.pitch_x_mm, self.pitch_y_mm
        if abs(px - py) > 0.01 * max(px, py):
            raise GeometryError(
                f"anisotropic pixel pitch: {px:.6f} vs {py:.6f} mm/px differ by more than 1%"
            )

    @property
    def pitch_x_mm(self) -> float:
        return self.screen_width_mm / self.screen_width_px

    @property
    def pitch_y_mm(self) -> float:
        return self.screen_height_mm / self.screen_height_px

    @property
    def sample_interval_ms(self) -> float:
        return 1000.0 / self.sampling_rate_hz

    def to_json_dict(self) -> dict:
        return {
            "screen_width_px": self.screen_width_px,
            "screen_height_px": self.screen_height_px,
            "screen_width_mm": self.screen_width_mm,
            "screen_height_mm": self.screen_height_mm,
            "viewing_distance_mm": self.viewing_distance_mm,
            "sampling_rate_hz": self.sampling_rate_hz,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ViewingGeometry":
        try:
            return cls(
                screen_width_px=int(obj["screen_width_px"]),
                screen_height_px=int(obj["screen_height_px"]),
                screen_width_mm=float(obj["screen_width_mm"]),
                screen_height_mm=float(obj["screen_height_mm"]),
                viewing_distance_mm=float(obj["viewing_distance_mm"]),
                sampling_rate_hz=float(obj["sampling_rate_hz"]),
            )
        except KeyError as exc:
            raise ManifestError(f"geometry is missing field {exc}") from exc


@dataclass(frozen=True)
class GazeSample:
    timestamp_ms: float
    eye: Eye
    x_px: float  # NaN when invalid
    y_px: float
    pupil: float
    valid: bool


class GazeTrace:
    """Column-oriented gaze stream for one eye (or the cyclopean average)."""

    def __init__(
        self,
        t_ms: np.ndarray,
        x_px: np.ndarray,
        y_px: np.ndarray,
        pupil: np.ndarray,
        valid: np.ndarray,
    ):
        self.t_ms = np.asarray(t_ms, dtype=np.float64)
        self.x_px = np.asarray(x_px, dtype=np.float64)
        self.y_px = np.asarray(y_px, dtype=np.float64)
        self.pupil = np.asarray(pupil, dtype=np.float64)
        self.valid = np.asarray(valid, dtype=bool)
        n = len(self.t_ms)
        if not all(len(a) == n for a in (self.x_px, self.y_px, self.pupil, self.valid)):
            raise ValueError("trace columns must share one length")

    def __len__(self) -> int:
        return len(self.t_ms)

    def clipped(self, start_ms: float, stop_ms: float) -> "GazeTrace":
        """Samples with start_ms <= t <= stop_ms, order preserved."""
        keep = (self.t_ms >= start_ms) & (self.t_ms <= stop_ms)
        return GazeTrace(
            self.t_ms[keep], self.x_px[keep], self.y_px[keep], self.pupil[keep], self.valid[keep]
        )

    def copy(self) -> "GazeTrace":
        return GazeTrace(
            self.t_ms.copy(),
            self.x_px.copy(),
            self.y_px.copy(),
            self.pupil.copy(),
            self.valid.copy(),
        )

    @classmethod
    def from_samples(cls, samples: Iterable[GazeSample]) -> "GazeTrace":
        rows = list(samples)
        return cls(
            np.array([s.timestamp_ms for s in rows], dtype=np.float64),
            np.array([s.x_px for s in rows], dtype=np.float64),
            np.array([s.y_px for s in rows], dtype=np.float64),
            np.array([s.pupil for s in rows], dtype=np.float64),
            np.array([s.valid for s in rows], dtype=bool),
        )


@dataclass(frozen=True)
class DisplayRect:
    """Screen-pixel rectangle where the stimulus was shown."""

    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ManifestError("display_rect must have positive width and height")

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.width, self.height]


@dataclass
class TrialRecord:
    trial_id: str
    subject_id: str
    group: Group
    stimulus_id: str
    display_rect: DisplayRect
    onset_ms: float
    offset_ms: float
    gaze_file: str | None = None
    # per-eye traces clipped to [onset_ms, offset_ms]; absent until bound
    traces: dict[Eye, GazeTrace] | None = None

    def __post_init__(self):
        if self.offset_ms - self.onset_ms <= 0:
            raise ManifestError(f"trial {self.trial_id}: offset must exceed onset")


@dataclass(frozen=True)
class StimulusInfo:
    stimulus_id: str
    width: int
    height: int
    path: str | None = None


@dataclass(frozen=True)
class AttributeEntry:
    """Manifest attribute: names one saliency map expected per stimulus."""

    name: str
    map_pattern: str = "maps/{stimulus}.{attribute}.pgm"
    positive_prompt: str | None = None
    negative_prompt: str | None = None
    smooth_sigma_px: float | None = None  # None -> 0.02 * min(w, h)

    @property
    def differential(self) -> bool:
        return self.negative_prompt is not None


@dataclass
class CohortManifest:
    geometry: ViewingGeometry
    subjects: dict[str, Group]
    trials: list[TrialRecord]
    stimuli: dict[str, StimulusInfo]
    attributes: list[AttributeEntry]
    root: Path = field(default_factory=Path)

    def validate(self) -> None:
        groups = set(self.subjects.values())
        if len(groups) != 2:
            raise ManifestError(f"expected exactly two group labels, found {sorted(g.value for g in groups)}")
        for trial in self.trials:
            if trial.subject_id not in self.subjects:
                raise ManifestError(f"trial {trial.trial_id} references unknown subject {trial.subject_id}")
            if trial.stimulus_id not in self.stimuli:
                raise ManifestError(f"trial {trial.trial_id} references unknown stimulus {trial.stimulus_id}")
            rect = trial.display_rect
            if (
                rect.x < 0
                or rect.y < 0
                or rect.x + rect.width > self.geometry.screen_width_px
                or rect.y + rect.height > self.geometry.screen_height_px
            ):
                raise ManifestError(f"trial {trial.trial_id}: display_rect exceeds screen bounds")
        names = [a.name for a in self.attributes]
        if len(names) != len(set(names)):
            raise ManifestError("attribute names must be unique")

    def map_paths(self, stimulus_id: str, attribute: AttributeEntry) -> list[Path]:
        """Resolved map file paths: one for plain attributes, [pos, neg] for differential."""
        base = attribute.map_pattern.format(stimulus=stimulus_id, attribute=attribute.name)
        if not attribute.differential:
            return [self.root / base]
        stem, dot, ext = base.rpartition(".")
        if not dot:
            stem, ext = base, "pgm"
        return [self.root / f"{stem}.pos.{ext}", self.root / f"{stem}.neg.{ext}"]


# --------------------------------------------------------------------------
# gaze CSV


def _parse_coord(token: str) -> float:
    token = token.strip()
    if token in LOST_SIGNAL_SENTINELS:
        return math.nan
    return float(token)


def parse_gaze_csv(stream: IO[str] | Iterable[str], geometry: ViewingGeometry) -> list[GazeSample]:
    """Parse the documented gaze CSV dialect into samples, input order preserved.

    Blank or "." coordinate fields mark a lost-signal sample: validity is
    cleared and the pupil forced to 0.  Timestamps must be non-decreasing
    within each eye.
    """
    reader = csv.reader(stream)
    samples: list[GazeSample] = []
    last_t: dict[Eye, float] = {}
    header_seen = False
    line_no = 0
    for row in reader:
        line_no = reader.line_num
        if not row or (row[0].lstrip().startswith("#")):
            continue
        if not header_seen:
            if [c.strip() for c in row] != GAZE_CSV_HEADER:
                raise GazeDataError(
                    f"expected header {','.join(GAZE_CSV_HEADER)!r}, got {','.join(row)!r}",
                    line=line_no,
                )
            header_seen = True
            continue
        if len(row) != 5:
            raise GazeDataError(f"expected 5 columns, got {len(row)}", line=line_no)
        try:
            t = float(row[0])
            eye = Eye(row[1].strip())
            x = _parse_coord(row[2])
            y = _parse_coord(row[3])
            pupil_tok = row[4].strip()
            pupil = 0.0 if pupil_tok in LOST_SIGNAL_SENTINELS else float(pupil_tok)
        except (ValueError, KeyError) as exc:
            raise GazeDataError(f"malformed row ({exc})", line=line_no) from None
        if pupil < 0:
            raise GazeDataError("pupil must be nonnegative", line=line_no)
        valid = not (math.isnan(x) or math.isnan(y))
        if not valid:
            x = y = math.nan
            pupil = 0.0
        if eye in last_t and t < last_t[eye]:
            raise GazeDataError("non-monotonic timestamp", line=line_no)
        last_t[eye] = t
        samples.append(GazeSample(t, eye, x, y, pupil, valid))
    if not header_seen:
        raise GazeDataError("empty gaze CSV: header missing", line=line_no or 1)
    return samples


def split_by_eye(samples: Sequence[GazeSample]) -> dict[Eye, GazeTrace]:
    """Group samples into per-eye traces, preserving order."""
    out: dict[Eye, GazeTrace] = {}
    for eye in Eye:
        rows = [s for s in samples if s.eye is eye]
        if rows:
            out[eye] = GazeTrace.from_samples(rows)
    return out


def load_recording(path: Path | str, geometry: ViewingGeometry) -> dict[Eye, GazeTrace]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            samples = parse_gaze_csv(fh, geometry)
    except OSError as exc:
        raise GazeDataError(f"cannot read gaze file {path}: {exc}") from exc
    return split_by_eye(samples)


def format_gaze_value(v: float) -> str:
    """Shortest round-trip decimal form; NaN coordinates become the '.' sentinel."""
    v = float(v)  # numpy scalars repr as np.float64(...)
    if math.isnan(v):
        return "."
    return repr(v)


def write_gaze_csv(stream: IO[str], samples: Iterable[GazeSample]) -> None:
    stream.write(",".join(GAZE_CSV_HEADER) + "\n")
    for s in samples:
        stream.write(
            f"{float(s.timestamp_ms)!r},{s.eye.value},{format_gaze_value(s.x_px)},"
            f"{format_gaze_value(s.y_px)},{float(s.pupil)!r}\n"
        )


def interleave_traces(traces: dict[Eye, GazeTrace]) -> list[GazeSample]:
    """Merge per-eye traces into one timestamp-sorted sample list (L before R on ties)."""
    rows: list[GazeSample] = []
    for eye in (Eye.LEFT, Eye.RIGHT):
        trace = traces.get(eye)
        if trace is None:
            continue
        for i in range(len(trace)):
            rows.append(
                GazeSample(
                    float(trace.t_ms[i]),
                    eye,
                    float(trace.x_px[i]),
                    float(trace.y_px[i]),
                    float(trace.pupil[i]),
                    bool(trace.valid[i]),
                )
            )
    rows.sort(key=lambda s: (s.timestamp_ms, s.eye.value))
    return rows


# --------------------------------------------------------------------------
# viewing geometry math


def eye_ray_vectors(geometry: ViewingGeometry, x_px: np.ndarray, y_px: np.ndarray) -> np.ndarray:
    """Unit vectors from the eye to screen points, shape (..., 3).

    The eye sits on the normal through the screen center at the viewing
    distance; x/y are converted to millimetres around that center.
    """
    dx = (np.asarray(x_px, dtype=np.float64) - geometry.screen_width_px / 2.0) * geometry.pitch_x_mm
    dy = (np.asarray(y_px, dtype=np.float64) - geometry.screen_height_px / 2.0) * geometry.pitch_y_mm
    dz = np.full_like(dx, geometry.viewing_distance_mm)
    vec = np.stack([dx, dy, dz], axis=-1)
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    return vec / norm


def visual_angle_deg(
    geometry: ViewingGeometry,
    p: tuple[float, float] | np.ndarray,
    q: tuple[float, float] | np.ndarray,
) -> float:
    """Angle in degrees subtended at the eye between two screen points."""
    u = eye_ray_vectors(geometry, np.asarray(p[0]), np.asarray(p[1]))
    v = eye_ray_vectors(geometry, np.asarray(q[0]), np.asarray(q[1]))
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return float(np.degrees(np.arctan2(cross, dot)))


def _pairwise_angles_deg(geometry: ViewingGeometry, trace: GazeTrace, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    u = eye_ray_vectors(geometry, trace.x_px[i], trace.y_px[i])
    v = eye_ray_vectors(geometry, trace.x_px[j], trace.y_px[j])
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def angular_velocity(
    trace: GazeTrace, geometry: ViewingGeometry, window_samples: int = 3
) -> np.ndarray:
    """Per-sample angular speed in deg/s (NaN where the window touches invalid data).

    Central differences over ``window_samples`` (odd, >= 3) inside each
    maximal run of valid samples; run endpoints fall back to one-sided
    differences.  Returns an empty array when fewer than 2 valid samples
    exist.
    """
    if window_samples < 3 or window_samples % 2 == 0:
        raise ValueError("window_samples must be an odd integer >= 3")
    n = len(trace)
    if int(trace.valid.sum()) < 2:
        return np.empty(0, dtype=np.float64)
    half = (window_samples - 1) // 2
    vel = np.full(n, np.nan, dtype=np.float64)
    for start, stop in valid_runs(trace.valid):
        m = stop - start
        if m < 2:
            continue
        idx = np.arange(start, stop)
        h = min(half, m - 1)
        lo = np.clip(idx - h, start, stop - 1)
        hi = np.clip(idx + h, start, stop - 1)
        ang = _pairwise_angles_deg(geometry, trace, lo, hi)
        span_s = (trace.t_ms[hi] - trace.t_ms[lo]) / 1000.0
        vel[idx] = ang / span_s
    return vel


def valid_runs(valid: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, stop) runs of True."""
    runs: list[tuple[int, int]] = []
    n = len(valid)
    i = 0
    while i < n:
        if valid[i]:
            j = i
            while j < n and valid[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


# --------------------------------------------------------------------------
# screen <-> stimulus coordinates


def to_stimulus_coords(
    x_px: np.ndarray | float,
    y_px: np.ndarray | float,
    rect: DisplayRect,
    stimulus_size: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Affine map screen -> stimulus-image pixels; out-of-rect points stay representable."""
    w, h = stimulus_size
    ix = (np.asarray(x_px, dtype=np.float64) - rect.x) * (w / rect.width)
    iy = (np.asarray(y_px, dtype=np.float64) - rect.y) * (h / rect.height)
    return ix, iy


def from_stimulus_coords(
    ix: np.ndarray | float,
    iy: np.ndarray | float,
    rect: DisplayRect,
    stimulus_size: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    w, h = stimulus_size
    x = np.asarray(ix, dtype=np.float64) * (rect.width / w) + rect.x
    y = np.asarray(iy, dtype=np.float64) * (rect.height / h) + rect.y
    return x, y


# --------------------------------------------------------------------------
# manifest


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ManifestError(f"{where}: missing required field {key!r}")
    return obj[key]


def parse_manifest_dict(doc: dict, root: Path) -> CohortManifest:
    geometry = ViewingGeometry.from_json_dict(_require(doc, "geometry", "manifest"))
    subjects: dict[str, Group] = {}
    for entry in _require(doc, "subjects", "manifest"):
        sid = str(_require(entry, "id", "subject"))
        try:
            group = Group(_require(entry, "group", f"subject {sid}"))
        except ValueError:
            raise ManifestError(
                f"subject {sid}: group must be one of {[g.value for g in Group]}"
            ) from None
        if sid in subjects:
            raise ManifestError(f"duplicate subject id {sid}")
        subjects[sid] = group

    stimuli: dict[str, StimulusInfo] = {}
    for entry in _require(doc, "stimuli", "manifest"):
        sid = str(_require(entry, "id", "stimulus"))
        stimuli[sid] = StimulusInfo(
            stimulus_id=sid,
            width=int(_require(entry, "width", f"stimulus {sid}")),
            height=int(_require(entry, "height", f"stimulus {sid}")),
            path=entry.get("path"),
        )

    trials: list[TrialRecord] = []
    for entry in _require(doc, "trials", "manifest"):
        tid = str(_require(entry, "trial_id", "trial"))
        subject_id = str(_require(entry, "subject_id", f"trial {tid}"))
        rect_vals = _require(entry, "display_rect", f"trial {tid}")
        if len(rect_vals) != 4:
            raise ManifestError(f"trial {tid}: display_rect must be [x, y, width, height]")
        if subject_id not in subjects:
            raise ManifestError(f"trial {tid} references unknown subject {subject_id}")
        trials.append(
            TrialRecord(
                trial_id=tid,
                subject_id=subject_id,
                group=subjects[subject_id],
                stimulus_id=str(_require(entry, "stimulus_id", f"trial {tid}")),
                display_rect=DisplayRect(*[float(v) for v in rect_vals]),
                onset_ms=float(_require(entry, "onset_ms", f"trial {tid}")),
                offset_ms=float(_require(entry, "offset_ms", f"trial {tid}")),
                gaze_file=str(_require(entry, "gaze_file", f"trial {tid}")),
            )
        )

    attributes = [
        AttributeEntry(
            name=str(_require(entry, "name", "attribute")),
            map_pattern=entry.get("map_pattern", "maps/{stimulus}.{attribute}.pgm"),
            positive_prompt=entry.get("positive_prompt"),
            negative_prompt=entry.get("negative_prompt"),
            smooth_sigma_px=entry.get("smooth_sigma_px"),
        )
        for entry in doc.get("attributes", [])
    ]

    manifest = CohortManifest(
        geometry=geometry,
        subjects=subjects,
        trials=trials,
        stimuli=stimuli,
        attributes=attributes,
        root=root,
    )
    manifest.validate()
    return manifest


def load_manifest(path: Path | str) -> CohortManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    return parse_manifest_dict(doc, root=path.parent)


def bind_trial(trial: TrialRecord, manifest: CohortManifest) -> TrialRecord:
    """Load the trial's recording and clip samples to [onset, offset]."""
    if trial.gaze_file is None:
        raise GazeDataError(f"trial {trial.trial_id} has no gaze file")
    traces = load_recording(manifest.root / trial.gaze_file, manifest.geometry)
    trial.traces = {
        eye: trace.clipped(trial.onset_ms, trial.offset_ms) for eye, trace in traces.items()
    }
    return trial


def manifest_to_dict(manifest: CohortManifest) -> dict:
    return {
        "geometry": manifest.geometry.to_json_dict(),
        "subjects": [
            {"id": sid, "group": group.value} for sid, group in manifest.subjects.items()
        ],
        "stimuli": [
            {
                "id": s.stimulus_id,
                "width": s.width,
                "height": s.height,
                **({"path": s.path} if s.path else {}),
            }
            for s in manifest.stimuli.values()
        ],
        "trials": [
            {
                "trial_id": t.trial_id,
                "subject_id": t.subject_id,
                "stimulus_id": t.stimulus_id,
                "display_rect": t.display_rect.as_list(),
                "onset_ms": t.onset_ms,
                "offset_ms": t.offset_ms,
                "gaze_file": t.gaze_file,
            }
            for t in manifest.trials
        ],
        "attributes": [
            {
                "name": a.name,
                "map_pattern": a.map_pattern,
                **({"positive_prompt": a.positive_prompt} if a.positive_prompt else {}),
                **({"negative_prompt": a.negative_prompt} if a.negative_prompt else {}),
                **({"smooth_sigma_px": a.smooth_sigma_px} if a.smooth_sigma_px is not None else {}),
            }
            for a in manifest.attributes
        ],
    }
