"""Prompt-driven saliency map generation with a hermetic mock backend.

Adapts text-promptable segmentation backends to the map file conventions
of the gaze analysis toolkit: one 8-bit grayscale PGM per (stimulus,
prompt) pair, differential attributes split into separate positive and
negative maps, and a provenance sidecar recording what produced each file.
"""

from .attrs import AttributeSpec, load_attributes
from .backends import BackendUnavailableError, get_backend
from .job import JobOutcome, ProviderJob, discover_stimuli, generate_maps

__version__ = "0.1.0"

__all__ = [
    "AttributeSpec",
    "BackendUnavailableError",
    "JobOutcome",
    "ProviderJob",
    "discover_stimuli",
    "generate_maps",
    "get_backend",
    "load_attributes",
    "__version__",
]
