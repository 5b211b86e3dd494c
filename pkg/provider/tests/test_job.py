"""Job orchestration: discovery, fan-out, failures, provenance."""

import json

import pytest

from _samples import STIMULUS_SHAPES
from promptmaps.attrs import AttributeSpec, load_attributes
from promptmaps.backends import BackendUnavailableError
from promptmaps.images import write_pgm_atomic
from promptmaps.job import PROVENANCE_FILE, JobOutcome, ProviderJob, discover_stimuli, generate_maps


def make_job(stimuli_dir, attrs_path, out, **overrides):
    return ProviderJob(
        stimuli_dir=stimuli_dir,
        attributes=load_attributes(attrs_path),
        out_dir=out,
        **overrides,
    )


# --------------------------------------------------------------------------
# attribute specs


def test_attribute_prompt_plan_shapes():
    plain = AttributeSpec(name="faces", positive_prompt="human faces")
    assert plain.prompt_plan() == [(None, "human faces")]
    unnamed = AttributeSpec(name="depth")
    assert unnamed.prompt_plan() == [(None, "depth")]  # name doubles as prompt
    diff = AttributeSpec(name="texture", positive_prompt="rough", negative_prompt="smooth")
    assert diff.differential
    assert diff.prompt_plan() == [("pos", "rough"), ("neg", "smooth")]


def test_attribute_rejects_blank_prompt():
    with pytest.raises(ValueError, match="positive_prompt is empty"):
        AttributeSpec(name="x", positive_prompt="   ")


def test_load_attributes_accepts_bare_list(tmp_path):
    path = tmp_path / "attrs.json"
    path.write_text(json.dumps([{"name": "faces"}]))
    assert [s.name for s in load_attributes(path)] == ["faces"]


def test_load_attributes_rejects_duplicates_and_empties(tmp_path):
    path = tmp_path / "attrs.json"
    path.write_text(json.dumps([{"name": "a"}, {"name": "a"}]))
    with pytest.raises(ValueError, match="unique"):
        load_attributes(path)
    path.write_text(json.dumps([]))
    with pytest.raises(ValueError, match="no attributes"):
        load_attributes(path)


# --------------------------------------------------------------------------
# discovery


def test_discover_sorted_ids(stimuli_dir):
    found = discover_stimuli(stimuli_dir)
    assert [sid for sid, _ in found] == ["scene01", "scene02", "scene03"]


def test_discover_rejects_ambiguous_stem(stimuli_dir):
    (stimuli_dir / "scene01.png").write_bytes(b"whatever")
    with pytest.raises(ValueError, match="ambiguous stimulus id 'scene01'"):
        discover_stimuli(stimuli_dir)


def test_discover_missing_or_empty_dir(tmp_path):
    with pytest.raises(FileNotFoundError, match="not found"):
        discover_stimuli(tmp_path / "nope")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(FileNotFoundError, match="no stimulus images"):
        discover_stimuli(empty)


# --------------------------------------------------------------------------
# generation


def test_plain_and_differential_file_fanout(stimuli_dir, attrs_path, tmp_path):
    out = tmp_path / "out"
    outcome = generate_maps(make_job(stimuli_dir, attrs_path, out))
    assert outcome.failures == []
    # 3 stimuli x (1 plain + 2 differential halves)
    assert len(outcome.written) == 9
    for sid in STIMULUS_SHAPES:
        assert (out / f"{sid}.faces.pgm").is_file()
        assert (out / f"{sid}.texture.pos.pgm").is_file()
        assert (out / f"{sid}.texture.neg.pgm").is_file()
        assert not (out / f"{sid}.texture.pgm").exists()


def test_map_dimensions_follow_each_stimulus(stimuli_dir, attrs_path, tmp_path):
    out = tmp_path / "out"
    generate_maps(make_job(stimuli_dir, attrs_path, out))
    for sid, (h, w) in STIMULUS_SHAPES.items():
        header = (out / f"{sid}.faces.pgm").read_bytes().split(b"\n", 3)
        assert header[0] == b"P5"
        assert header[1] == f"{w} {h}".encode()


def test_provenance_records_prompts_and_backend(stimuli_dir, attrs_path, tmp_path):
    out = tmp_path / "out"
    generate_maps(make_job(stimuli_dir, attrs_path, out))
    doc = json.loads((out / PROVENANCE_FILE).read_text())
    assert doc["backend"] == "mock"
    by_file = {r["file"]: r for r in doc["maps"]}
    assert len(by_file) == 9
    faces = by_file["scene01.faces.pgm"]
    assert faces["prompt"] == "human faces"
    assert faces["role"] is None
    assert "generator" in faces and "scaling" in faces
    assert by_file["scene01.texture.pos.pgm"]["prompt"] == "complex texture"
    assert by_file["scene01.texture.neg.pgm"]["prompt"] == "smooth region"


def test_unreadable_stimulus_skipped_job_continues(stimuli_dir, attrs_path, tmp_path):
    (stimuli_dir / "scene00.pgm").write_bytes(b"this is not an image")
    out = tmp_path / "out"
    outcome = generate_maps(make_job(stimuli_dir, attrs_path, out))
    assert [name for name, _ in outcome.failures] == ["scene00.pgm"]
    assert "cannot read stimulus" in outcome.failures[0][1]
    assert len(outcome.written) == 9  # the three good stimuli still emitted
    assert not any(p.name.startswith("scene00") for p in outcome.written)


def test_unknown_backend_raises(stimuli_dir, attrs_path, tmp_path):
    job = make_job(stimuli_dir, attrs_path, tmp_path / "out", backend="external-model")
    with pytest.raises(BackendUnavailableError, match="'external-model'"):
        generate_maps(job)


def test_job_validation():
    with pytest.raises(ValueError, match="jobs"):
        ProviderJob("s", [AttributeSpec(name="a")], "o", jobs=0)
    with pytest.raises(ValueError, match="no attributes"):
        ProviderJob("s", [], "o")


def test_no_temp_leftovers_and_parallel_equivalence(stimuli_dir, attrs_path, tmp_path):
    serial = tmp_path / "serial"
    threaded = tmp_path / "threaded"
    generate_maps(make_job(stimuli_dir, attrs_path, serial))
    generate_maps(make_job(stimuli_dir, attrs_path, threaded, jobs=4))
    serial_files = {p.name: p.read_bytes() for p in serial.iterdir()}
    threaded_files = {p.name: p.read_bytes() for p in threaded.iterdir()}
    assert serial_files == threaded_files
    assert not [n for n in serial_files if n.endswith(".tmp")]


def test_outcome_default_is_empty():
    outcome = JobOutcome()
    assert outcome.written == [] and outcome.failures == []
