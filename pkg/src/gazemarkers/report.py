"""Report emission: comparison CSV/JSON, subject metrics CSV, density images.

All text output is byte-deterministic: floats use repr (shortest exact
round-trip), dict order follows construction, and nothing embeds a
timestamp.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from ._version import __version__
from .pipeline import AnalysisResult
from .salmap import write_pgm
from .stats import GroupComparison

COMPARISON_HEADER = "attribute,n_case,n_control,mean_case,mean_control,U,p_mw,d,p_perm,significant"
SUBJECT_HEADER = "subject_id,group,attribute,mean_saliency,n_trials"

# piecewise-linear heat LUT anchors: value -> (r, g, b)
_LUT_ANCHORS = [
    (0, (0, 0, 0)),
    (64, (32, 0, 96)),
    (128, (208, 40, 24)),
    (192, (255, 160, 0)),
    (255, (255, 255, 255)),
]


def _fmt(value: float) -> str:
    return repr(float(value))


def comparisons_to_csv(comparisons: list[GroupComparison]) -> str:
    lines = [COMPARISON_HEADER]
    for c in comparisons:
        lines.append(
            f"{c.attribute},{c.n_case},{c.n_control},{_fmt(c.mean_case)},"
            f"{_fmt(c.mean_control)},{_fmt(c.u)},{_fmt(c.p_mw)},{_fmt(c.d)},"
            f"{_fmt(c.p_perm)},{'true' if c.significant else 'false'}"
        )
    return "\n".join(lines) + "\n"


def subject_metrics_csv(result: AnalysisResult) -> str:
    """One row per subject per metric key, in summary then key order."""
    lines = [SUBJECT_HEADER]
    for s in result.subject_summaries:
        for key, mean in s.values.items():
            lines.append(f"{s.subject_id},{s.group},{key},{_fmt(mean)},{s.n_trials[key]}")
    return "\n".join(lines) + "\n"


def comparison_dict(c: GroupComparison) -> dict:
    return {
        "attribute": c.attribute,
        "n_case": c.n_case,
        "n_control": c.n_control,
        "mean_case": c.mean_case,
        "mean_control": c.mean_control,
        "U": c.u,
        "p_mw": c.p_mw,
        "d": c.d,
        "p_perm": c.p_perm,
        "significant": c.significant,
    }


def run_metadata(result: AnalysisResult) -> dict:
    config = result.config
    return {
        "version": __version__,
        "seed": config.seed,
        "n_perm": config.n_perm,
        "granularity": config.granularity,
        # --jobs is deliberately not recorded: reports must be byte-identical
        # at any parallelism level
        "detection": config.detection.to_json_dict(),
        "attributes": result.attribute_names,
        "map_smooth_sigma_px": result.map_sigmas,
        "density_sigma_px": config.density_sigma_px,
        "center_prior_sigma_px": config.center_prior_sigma_px,
    }


def report_dict(result: AnalysisResult) -> dict:
    return {
        "metadata": run_metadata(result),
        "comparisons": [comparison_dict(c) for c in result.comparisons],
        "subjects": [
            {
                "subject_id": s.subject_id,
                "group": s.group,
                "means": s.values,
                "n_trials": s.n_trials,
            }
            for s in result.subject_summaries
        ],
        "correlations": result.correlations,
        "warnings": result.warnings,
    }


def _heat_lut() -> np.ndarray:
    lut = np.zeros((256, 3), dtype=np.uint8)
    for (v0, c0), (v1, c1) in zip(_LUT_ANCHORS, _LUT_ANCHORS[1:]):
        span = v1 - v0
        for i in range(v0, v1 + 1):
            f = (i - v0) / span
            lut[i] = [round(c0[k] + f * (c1[k] - c0[k])) for k in range(3)]
    return lut


_LUT = _heat_lut()


def density_to_gray(density: np.ndarray) -> np.ndarray:
    """Quantize a density grid to 0..255 by its own peak (all-zero stays zero)."""
    peak = density.max()
    if peak <= 0:
        return np.zeros(density.shape, dtype=np.uint8)
    return np.rint(density * (255.0 / peak)).astype(np.uint8)


def heatmap_png_bytes(gray: np.ndarray) -> bytes:
    rgb = _LUT[gray]
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def write_reports(result: AnalysisResult, out_dir) -> list[Path]:
    """Write the full report tree; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def _write_text(name: str, text: str) -> None:
        path = out / name
        path.write_text(text)
        written.append(path)

    _write_text("comparisons.csv", comparisons_to_csv(result.comparisons))
    _write_text("subject_metrics.csv", subject_metrics_csv(result))
    _write_text("report.json", json.dumps(report_dict(result), indent=2) + "\n")
    _write_text("run_metadata.json", json.dumps(run_metadata(result), indent=2) + "\n")

    density_dir = out / "density"
    density_dir.mkdir(exist_ok=True)
    for entry in result.densities:
        stem = f"{entry.group}.{entry.stimulus_id}"
        gray = density_to_gray(entry.density)
        pgm_path = density_dir / f"{stem}.pgm"
        write_pgm(pgm_path, gray)
        written.append(pgm_path)
        sidecar = {
            "group": entry.group,
            "stimulus_id": entry.stimulus_id,
            "peak_density": entry.peak,
            "sigma_px": entry.sigma_px,
        }
        side_path = density_dir / f"{stem}.json"
        side_path.write_text(json.dumps(sidecar, indent=2) + "\n")
        written.append(side_path)
        png_path = density_dir / f"{stem}.png"
        png_path.write_bytes(heatmap_png_bytes(gray))
        written.append(png_path)
    return written
