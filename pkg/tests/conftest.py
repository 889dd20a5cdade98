"""Shared fixtures: pipeline runs over the synthetic scenes.

The expensive scene runs are session-scoped; acceptance criteria and the
slower property tests share them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from bubblekit import bubbles, fields, synth, tracking
from bubblekit.pipeline import (
    RunPaths,
    SummaryConfig,
    extract_run,
    fit_run_template,
    summarize_run,
    summarize_step,
    with_desk_defaults,
)

DESK_DIMS = (64, 8, 64)
VOX = 0.03125

ACCEPTANCE_REPORT: list[str] = []


def record_criterion(line: str) -> None:
    ACCEPTANCE_REPORT.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_REPORT):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk_spec():
    return fields.GridSpec.from_bounds(
        ((0.0, 2.0), (0.0, 0.25), (0.0, 2.0)), DESK_DIMS
    )


def run_scene_in_memory(scene, spec, chunks_per_step=2):
    """Summarize + extract a scene without touching disk; returns a store."""
    config = with_desk_defaults()
    template = None
    steps = {}
    for t in range(scene.n_timesteps):
        chunks = synth.generate(scene, t, chunks=chunks_per_step)
        if template is None:
            hist = fields.reduce_partials([fields.bin_particles(c, spec) for c in chunks])
            template, _ = fit_run_template(fields.finalize_density(hist), config)
        summary = summarize_step(chunks, spec, config, template)
        steps[t] = bubbles.extract_bubbles(summary.bsf, t)
    return tracking.BubbleStore(steps, spec, dt=scene.timestep_dt)


@dataclass
class FiveVoidRun:
    scene: synth.SceneSpec
    run_dir: Path
    paths: RunPaths
    meta: dict
    store: tracking.BubbleStore
    pipeline_seconds: float  # summarize + extract wall time


@pytest.fixture(scope="session")
def five_void_run(tmp_path_factory) -> FiveVoidRun:
    """The detection benchmark: 50 steps, five voids, written to a real run
    directory with raw particle files (criteria 4, 7, 9 measure this run)."""
    run_dir = tmp_path_factory.mktemp("five_void_run")
    scene = synth.scene_five_voids()
    paths = RunPaths(run_dir)
    synth.save_scene(scene, paths.scene)
    for t in range(scene.n_timesteps):
        synth.write_particles(synth.generate(scene, t, chunks=4), paths.particles)

    t0 = time.time()
    meta = summarize_run(run_dir, with_desk_defaults())
    extract_run(run_dir)
    elapsed = time.time() - t0

    from bubblekit.pipeline import open_store

    return FiveVoidRun(
        scene=scene,
        run_dir=run_dir,
        paths=paths,
        meta=meta,
        store=open_store(run_dir),
        pipeline_seconds=elapsed,
    )


@pytest.fixture(scope="session")
def rising_store(desk_spec):
    return synth.scene_rising_void(), run_scene_in_memory(
        synth.scene_rising_void(), desk_spec
    )


@pytest.fixture(scope="session")
def steady_store(desk_spec):
    return synth.scene_steady_void(), run_scene_in_memory(
        synth.scene_steady_void(), desk_spec
    )


@pytest.fixture(scope="session")
def merge_store(desk_spec):
    return synth.scene_merging_voids(), run_scene_in_memory(
        synth.scene_merging_voids(), desk_spec
    )


@pytest.fixture(scope="session")
def split_store(desk_spec):
    return synth.scene_splitting_void(), run_scene_in_memory(
        synth.scene_splitting_void(), desk_spec
    )


@pytest.fixture(scope="session")
def growing_store(desk_spec):
    return synth.scene_growing_void(), run_scene_in_memory(
        synth.scene_growing_void(), desk_spec
    )


@pytest.fixture(scope="session")
def small_run_dir(tmp_path_factory) -> Path:
    """A compact fully-built run directory (catalog included) for catalog
    and HTTP service tests."""
    from bubblekit.catalog import build_catalog
    from bubblekit.tracking import save_track, track_all

    run_dir = tmp_path_factory.mktemp("small_run")
    scene = synth.scene_merging_voids(n_particles=150_000)
    paths = RunPaths(run_dir)
    synth.save_scene(scene, paths.scene)
    for t in range(scene.n_timesteps):
        synth.write_particles(synth.generate(scene, t, chunks=2), paths.particles)
    summarize_run(run_dir, with_desk_defaults())
    extract_run(run_dir)
    build_catalog(run_dir)
    from bubblekit.pipeline import open_store

    store = open_store(run_dir)
    for rec in track_all(0, store):
        save_track(rec, paths.tracks)
    return run_dir


def match_components_to_voids(records, scene, spec, t):
    """Assign each non-freeboard component to the void holding the majority
    of its voxels; returns ({void index: [records]}, unmatched records)."""
    centers = [v.center_at(t, scene.timestep_dt) for v in scene.voids if v.active(t)]
    radii = [np.asarray(v.radii) for v in scene.voids if v.active(t)]
    matched: dict[int, list] = {}
    unmatched = []
    for rec in records:
        if rec.is_freeboard:
            continue
        vc = spec.voxel_centers(rec.voxels)
        fracs = [
            float((((vc - c) / r) ** 2).sum(axis=1).__lt__(1.0).mean())
            for c, r in zip(centers, radii)
        ]
        best = int(np.argmax(fracs)) if fracs else -1
        if best >= 0 and fracs[best] >= 0.5:
            matched.setdefault(best, []).append(rec)
        else:
            unmatched.append(rec)
    return matched, unmatched
