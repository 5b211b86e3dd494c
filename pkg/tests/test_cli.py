"""Command-line workflows: simulate, analyze, validate-maps, exit codes."""

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from gazemarkers._version import __version__
from gazemarkers.cli import (
    EXIT_DEGENERATE,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_VIOLATIONS,
    main,
)
from gazemarkers.salmap import write_pgm

PROFILE_CONFIG = {
    "case": {"bias_lambda": 0.2, "fixations_per_trial": 2.2, "jitter_deg": 0.0},
    "control": {"bias_lambda": 0.8, "fixations_per_trial": 3.8, "jitter_deg": 0.0},
    "n_subjects": 3,
    "n_trials": 3,
    "seed": 5,
    "stimulus_size": [200, 150],
    "trial_ms": 1500.0,
}


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohort")
    profile = root / "profile.json"
    profile.write_text(json.dumps(PROFILE_CONFIG))
    out = root / "tree"
    rc = main(["simulate", "--profile", str(profile), "--out", str(out)])
    assert rc == EXIT_OK
    return out


def analyze_args(cohort, out, *extra):
    return [
        "analyze",
        "--manifest", str(cohort / "manifest.json"),
        "--out", str(out),
        "--n-perm", "99",
        "--seed", "3",
        *extra,
    ]


def tree_bytes(root):
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# --------------------------------------------------------------------------
# simulate


def test_simulate_writes_valid_cohort(cohort_dir):
    assert (cohort_dir / "manifest.json").is_file()
    assert (cohort_dir / "planted.json").is_file()
    rc = main(["validate-maps", "--manifest", str(cohort_dir / "manifest.json")])
    assert rc == EXIT_OK


def test_simulate_print_default_profile(capsys):
    rc = main(["simulate", "--print-default-profile", "--out", "ignored"])
    assert rc == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["case"]["bias_lambda"] == 0.2
    assert doc["control"]["bias_lambda"] == 0.8
    assert doc["n_subjects"] == 30 and doc["n_trials"] == 20


def test_simulate_rejects_unknown_config_keys(tmp_path, capsys):
    profile = tmp_path / "p.json"
    profile.write_text(json.dumps({"n_sujets": 3}))
    rc = main(["simulate", "--profile", str(profile), "--out", str(tmp_path / "o")])
    assert rc == EXIT_INPUT
    assert "unknown profile config keys" in capsys.readouterr().err


def test_simulate_rejects_invalid_lambda(tmp_path, capsys):
    profile = tmp_path / "p.json"
    profile.write_text(json.dumps({"case": {"bias_lambda": 1.7}}))
    rc = main(["simulate", "--profile", str(profile), "--out", str(tmp_path / "o")])
    assert rc == EXIT_INPUT
    assert "bias_lambda" in capsys.readouterr().err


def test_simulate_missing_profile_file(tmp_path, capsys):
    rc = main(["simulate", "--profile", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert rc == EXIT_INPUT


# --------------------------------------------------------------------------
# analyze


def test_analyze_report_tree(cohort_dir, tmp_path, capsys):
    out = tmp_path / "report"
    rc = main(analyze_args(cohort_dir, out))
    assert rc == EXIT_OK
    for name in ("comparisons.csv", "subject_metrics.csv", "report.json", "run_metadata.json"):
        assert (out / name).is_file()
    density_files = list((out / "density").iterdir())
    assert any(p.suffix == ".png" for p in density_files)
    assert any(p.suffix == ".pgm" for p in density_files)
    assert any(p.suffix == ".json" for p in density_files)

    captured = capsys.readouterr().out
    assert "blobs:" in captured
    assert "report written to" in captured

    header = (out / "comparisons.csv").read_text().splitlines()[0]
    assert header == "attribute,n_case,n_control,mean_case,mean_control,U,p_mw,d,p_perm,significant"
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["seed"] == 3 and meta["n_perm"] == 99
    assert meta["version"] == __version__


def test_analyze_reports_are_byte_identical_across_runs_and_jobs(cohort_dir, tmp_path):
    outs = [tmp_path / f"r{i}" for i in range(3)]
    assert main(analyze_args(cohort_dir, outs[0])) == EXIT_OK
    assert main(analyze_args(cohort_dir, outs[1])) == EXIT_OK
    assert main(analyze_args(cohort_dir, outs[2], "--jobs", "3")) == EXIT_OK
    base = tree_bytes(outs[0])
    assert base
    assert tree_bytes(outs[1]) == base
    assert tree_bytes(outs[2]) == base


def test_analyze_trial_granularity(cohort_dir, tmp_path):
    out = tmp_path / "report"
    rc = main(analyze_args(cohort_dir, out, "--granularity", "trial"))
    assert rc == EXIT_OK
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["granularity"] == "trial"
    report = json.loads((out / "report.json").read_text())
    (row,) = [c for c in report["comparisons"] if c["attribute"] == "blobs"]
    assert row["n_case"] == 9  # 3 subjects x 3 trials


def test_analyze_missing_map_names_attribute_and_stimulus(cohort_dir, tmp_path, capsys):
    broken = tmp_path / "broken"
    shutil.copytree(cohort_dir, broken)
    (map_path,) = (broken / "maps").iterdir()
    map_path.unlink()
    rc = main(analyze_args(broken, tmp_path / "report"))
    assert rc == EXIT_INPUT
    err = capsys.readouterr().err
    assert "blobs" in err and "stim00" in err


def test_analyze_unreadable_recording_names_trial(cohort_dir, tmp_path, capsys):
    broken = tmp_path / "broken"
    shutil.copytree(cohort_dir, broken)
    (broken / "gaze" / "case00" / "case00_t00.csv").unlink()
    rc = main(analyze_args(broken, tmp_path / "report"))
    assert rc == EXIT_INPUT
    assert "trial case00_t00" in capsys.readouterr().err


def test_analyze_unknown_attribute_selection(cohort_dir, tmp_path, capsys):
    rc = main(analyze_args(cohort_dir, tmp_path / "report", "--attributes", "nope"))
    assert rc == EXIT_INPUT
    assert "unknown attributes" in capsys.readouterr().err


def test_analyze_missing_manifest(tmp_path, capsys):
    rc = main(["analyze", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert rc == EXIT_INPUT


# --------------------------------------------------------------------------
# degenerate cohorts


def minimal_manifest_doc():
    return {
        "geometry": {
            "screen_width_px": 1000,
            "screen_height_px": 1000,
            "screen_width_mm": 500.0,
            "screen_height_mm": 500.0,
            "viewing_distance_mm": 600.0,
            "sampling_rate_hz": 500.0,
        },
        "subjects": [
            {"id": "c1", "group": "case"},
            {"id": "k1", "group": "control"},
        ],
        "stimuli": [{"id": "s", "width": 20, "height": 20}],
        "trials": [
            {
                "trial_id": f"{sid}_t0",
                "subject_id": sid,
                "stimulus_id": "s",
                "display_rect": [400, 400, 200, 200],
                "onset_ms": 0.0,
                "offset_ms": 1000.0,
                "gaze_file": f"{sid}.csv",
            }
            for sid in ("c1", "k1")
        ],
        "attributes": [{"name": "thing"}],
    }


def write_steady_gaze(path, n=150, x=500.0, y=500.0):
    lines = ["timestamp_ms,eye,x_px,y_px,pupil"]
    for i in range(n):
        lines.append(f"{2.0 * i},L,{x},{y},3.0")
    path.write_text("\n".join(lines) + "\n")


def write_lost_gaze(path, n=150):
    lines = ["timestamp_ms,eye,x_px,y_px,pupil"]
    for i in range(n):
        lines.append(f"{2.0 * i},L,.,.,0.0")
    path.write_text("\n".join(lines) + "\n")


def test_analyze_empty_group_after_filtering(tmp_path, capsys):
    doc = minimal_manifest_doc()
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    (tmp_path / "maps").mkdir()
    rng = np.random.default_rng(0)
    write_pgm(tmp_path / "maps" / "s.thing.pgm", rng.integers(0, 256, (20, 20)).astype(np.uint8))
    write_lost_gaze(tmp_path / "c1.csv")  # the whole case group drops out
    write_steady_gaze(tmp_path / "k1.csv")
    rc = main(analyze_args(tmp_path, tmp_path / "report"))
    assert rc == EXIT_DEGENERATE
    assert "group 'case' has no subjects with retained fixations" in capsys.readouterr().err


# --------------------------------------------------------------------------
# validate-maps


def test_validate_maps_reports_wrong_dimensions(cohort_dir, tmp_path, capsys):
    broken = tmp_path / "broken"
    shutil.copytree(cohort_dir, broken)
    (map_path,) = (broken / "maps").iterdir()
    write_pgm(map_path, np.zeros((5, 5), dtype=np.uint8))
    rc = main(["validate-maps", "--manifest", str(broken / "manifest.json")])
    assert rc == EXIT_VIOLATIONS
    out = capsys.readouterr().out
    violation_lines = [l for l in out.splitlines() if l.startswith("stim00 blobs:")]
    assert len(violation_lines) == 1
    assert "5x5" in violation_lines[0]


def test_validate_maps_reports_missing_file(cohort_dir, tmp_path, capsys):
    broken = tmp_path / "broken"
    shutil.copytree(cohort_dir, broken)
    (map_path,) = (broken / "maps").iterdir()
    map_path.unlink()
    rc = main(["validate-maps", "--manifest", str(broken / "manifest.json")])
    assert rc == EXIT_VIOLATIONS
    assert "file missing" in capsys.readouterr().out


def test_validate_maps_empty_attributes_warns(tmp_path, capsys):
    doc = minimal_manifest_doc()
    doc["attributes"] = []
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    rc = main(["validate-maps", "--manifest", str(tmp_path / "manifest.json")])
    assert rc == EXIT_OK
    assert "no attributes" in capsys.readouterr().err


def test_validate_maps_missing_manifest(tmp_path):
    rc = main(["validate-maps", "--manifest", str(tmp_path / "nope.json")])
    assert rc == EXIT_INPUT


# --------------------------------------------------------------------------
# packaging


def test_console_entry_point_reports_version():
    out = subprocess.run(
        [sys.executable, "-m", "gazemarkers.cli", "--version"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert out.stdout.strip() == __version__
