import json

import numpy as np
import pytest

from bubblekit import synth
from bubblekit.fields import read_field
from bubblekit.pipeline import (
    MissingInputError,
    RunPaths,
    SummaryConfig,
    extract_run,
    load_meta,
    open_store,
    summarize_run,
    with_desk_defaults,
)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("tiny_run")
    scene = synth.scene_steady_void(n_particles=120_000, n_timesteps=4)
    paths = RunPaths(run_dir)
    synth.save_scene(scene, paths.scene)
    for t in range(scene.n_timesteps):
        synth.write_particles(synth.generate(scene, t, chunks=3), paths.particles)
    return run_dir, scene


def test_summarize_writes_two_fields_per_step(tiny_run):
    run_dir, scene = tiny_run
    meta = summarize_run(run_dir, with_desk_defaults())
    paths = RunPaths(run_dir)
    assert meta["time_steps"] == list(range(4))
    for t in range(4):
        assert paths.field_file("pvf", t).is_file()
        assert paths.field_file("bsf", t).is_file()
        assert not paths.field_file("density", t).exists()
    assert paths.template.is_file()
    bsf, t_read = read_field(paths.field_file("bsf", 2))
    assert t_read == 2
    assert bsf.values.min() >= 0.0 and bsf.values.max() <= 1.0


def test_meta_contents(tiny_run):
    run_dir, scene = tiny_run
    meta = load_meta(run_dir)
    assert meta["sim_dt"] == scene.timestep_dt
    assert meta["summary_dt"] == scene.timestep_dt  # every=1
    assert meta["threshold"] == 0.92
    assert meta["gamma"] == 0.3
    assert meta["cluster_size"] == [3, 3, 3]
    assert meta["template"]["mean"] == 0.0
    assert all(d["converged"] for d in meta["slic"].values())


def test_extract_then_store(tiny_run):
    run_dir, scene = tiny_run
    n = extract_run(run_dir)
    assert n > 0
    store = open_store(run_dir)
    assert store.times == list(range(4))
    assert store.dt == scene.timestep_dt
    for t in store.times:
        assert any(b.is_freeboard for b in store.at(t))


def test_every_subsampling(tmp_path):
    scene = synth.scene_steady_void(n_particles=100_000, n_timesteps=5)
    paths = RunPaths(tmp_path)
    synth.save_scene(scene, paths.scene)
    for t in range(scene.n_timesteps):
        synth.write_particles(synth.generate(scene, t, chunks=1), paths.particles)
    config = with_desk_defaults(SummaryConfig(every=2))
    meta = summarize_run(tmp_path, config)
    assert meta["time_steps"] == [0, 2, 4]
    assert meta["summary_dt"] == pytest.approx(2 * scene.timestep_dt)
    extract_run(tmp_path)
    store = open_store(tmp_path)
    assert store.times == [0, 2, 4]
    assert store.dt == pytest.approx(2 * scene.timestep_dt)


def test_missing_particles_error(tmp_path):
    with pytest.raises(MissingInputError):
        summarize_run(tmp_path, with_desk_defaults())


def test_extract_requires_meta(tmp_path):
    with pytest.raises(MissingInputError):
        extract_run(tmp_path)


def test_extract_reports_missing_steps(tiny_run, tmp_path):
    run_dir, _ = tiny_run
    paths = RunPaths(run_dir)
    meta = load_meta(run_dir)
    # sabotage a copy of meta pointing at a step with no field file
    clone = tmp_path / "clone"
    clone.mkdir()
    (clone / "meta.json").write_text(
        json.dumps({**meta, "time_steps": meta["time_steps"] + [99]})
    )
    (clone / "fields").mkdir()
    for f in paths.fields.iterdir():
        (clone / "fields" / f.name).write_bytes(f.read_bytes())
    with pytest.raises(MissingInputError) as err:
        extract_run(clone)
    assert "99" in str(err.value)


def test_template_box_override(tmp_path):
    from bubblekit.similarity import BoxFilter

    scene = synth.scene_steady_void(n_particles=100_000, n_timesteps=1)
    paths = RunPaths(tmp_path)
    synth.save_scene(scene, paths.scene)
    synth.write_particles(synth.generate(scene, 0, chunks=1), paths.particles)
    # a box inside the scene's void: statistics match the freeboard default
    box = BoxFilter((10, 3, 30), (14, 5, 34))
    config = with_desk_defaults(SummaryConfig(template_box=box))
    meta = summarize_run(tmp_path, config)
    assert meta["template"]["box"]["lo"] == [10, 3, 30]
    assert meta["template"]["mean"] == 0.0
    assert meta["template"]["source"] == "explicit box"
