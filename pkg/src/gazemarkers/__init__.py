"""Gaze-marker toolkit: score eye-tracking fixations against prompt-derived
saliency maps and compare the resulting markers between two groups."""

from ._version import __version__
from .cohortsim import (
    PlantedFixation,
    SimProfile,
    SimulatedCohort,
    generate_cohort,
    make_stimulus_map,
    sample_fixation_points,
    simulate_cohort,
    synthesize_trace,
)
from .errors import (
    DegenerateDataError,
    GazeDataError,
    GazeToolkitError,
    GeometryError,
    ManifestError,
    MapFormatError,
)
from .events import (
    BlinkEvent,
    DetectionConfig,
    FixationEvent,
    SaccadeEvent,
    binocular_average,
    cyclopean_trace,
    detect_blinks,
    detect_events,
    exclude_blinks,
    filter_fixations,
    project_fixations,
)
from .ingest import (
    AttributeEntry,
    CohortManifest,
    DisplayRect,
    Eye,
    GazeSample,
    GazeTrace,
    Group,
    StimulusInfo,
    TrialRecord,
    ViewingGeometry,
    angular_velocity,
    bind_trial,
    load_manifest,
    load_recording,
    parse_gaze_csv,
    visual_angle_deg,
    write_gaze_csv,
)
from .metrics import (
    SubjectSummary,
    TrialMetrics,
    compute_trial_metrics,
    duration_saliency_correlation,
    fixation_density,
    latency_to_salient_fixation,
    pearson_r,
    summarize_subject,
    trial_fixation_saliency,
)
from .pipeline import AnalysisConfig, AnalysisResult, analyze_cohort, prepare_attribute_map
from .report import write_reports
from .salmap import (
    MapKind,
    SaliencyMap,
    center_prior_map,
    differential_map,
    gaussian_smooth,
    load_map,
    normalize_255,
    sample_saliency,
    write_pgm,
)
from .stats import (
    GroupComparison,
    cohens_d,
    compare_groups,
    mann_whitney_u,
    permutation_test,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
