"""Run-directory orchestration for the two pipeline stages.

A run directory holds everything one analysis produces:

    scene.json        synthetic scene (ground truth, bounds, dt)
    particles/        raw per-chunk particle files (inputs to summarize)
    fields/           per-step rise-velocity + bubble-similarity fields
    template.json     the fitted feature template
    meta.json         grid spec, parameters, processed time steps
    bubbles/          per-step extracted bubble records
    catalog.csv       attribute table (one row per bubble)
    images/           per-bubble projection renderings
    tracks/           computed track records

``summarize`` is the in-situ-style stage: it consumes raw particles chunk
by chunk and persists only the two summary fields per processed step.
``extract`` and everything after run from those summaries alone, so the
particle files can be deleted once summarize has finished.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import similarity
from .bubbles import DEFAULT_MIN_VOXELS, DEFAULT_THRESHOLD, bubbles_filename, extract_bubbles, save_bubbles
from .fields import (
    GridSpec,
    ScalarGrid,
    bin_particles,
    field_filename,
    finalize_density,
    finalize_pvf,
    read_field,
    reduce_partials,
    write_field,
)
from .similarity import BoxFilter, FeatureTemplate, build_bsf, build_distribution_field
from .slic import SlicParams, SupervoxelLabels, slic_partition
from .synth import ParticleChunk, SceneSpec, load_scene, read_particles
from .tracking import LOW_CONFIDENCE_DICE, VOLUME_JUMP_RATIO, BubbleStore

DEFAULT_GRID_DIMS = (128, 16, 128)
DESK_GRID_DIMS = (64, 8, 64)


class MissingInputError(FileNotFoundError):
    """A pipeline stage is missing its input files."""


@dataclass
class SummaryConfig:
    """Parameters of the summarize stage (defaults follow the pipeline's
    stable operating point: 128x16x128 bins, gamma 0.3, 3x3x3 clusters,
    similarity threshold 0.92)."""

    grid_dims: tuple[int, int, int] = DEFAULT_GRID_DIMS
    gamma: float = 0.3
    cluster_size: tuple[int, int, int] = (3, 3, 3)
    # the pipeline runs the partitioner to an assignment fixed point; on
    # integer-count density fields that takes 15..40 sweeps, so the cap
    # here is above the library default of 10
    max_iters: int = 40
    threshold: float = DEFAULT_THRESHOLD
    min_voxels: int = DEFAULT_MIN_VOXELS
    every: int = 1
    dt: float | None = None          # simulation seconds per step; scene dt if None
    template_box: BoxFilter | None = None
    keep_density: bool = False
    low_confidence_dice: float = LOW_CONFIDENCE_DICE
    volume_jump_ratio: float = VOLUME_JUMP_RATIO


@dataclass
class RunPaths:
    root: Path

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def scene(self) -> Path:
        return self.root / "scene.json"

    @property
    def particles(self) -> Path:
        return self.root / "particles"

    @property
    def fields(self) -> Path:
        return self.root / "fields"

    @property
    def template(self) -> Path:
        return self.root / "template.json"

    @property
    def meta(self) -> Path:
        return self.root / "meta.json"

    @property
    def bubbles(self) -> Path:
        return self.root / "bubbles"

    @property
    def catalog_csv(self) -> Path:
        return self.root / "catalog.csv"

    @property
    def images(self) -> Path:
        return self.root / "images"

    @property
    def tracks(self) -> Path:
        return self.root / "tracks"

    def field_file(self, name: str, t: int) -> Path:
        return self.fields / field_filename(name, t)


@dataclass
class StepSummary:
    """All fields derived from one time step (density is intermediate)."""

    time_index: int
    density: ScalarGrid
    pvf: ScalarGrid
    labels: SupervoxelLabels
    bsf: ScalarGrid


def summarize_step(
    chunks: list[ParticleChunk],
    spec: GridSpec,
    config: SummaryConfig,
    template: FeatureTemplate,
) -> StepSummary:
    """Chunk-wise binning, order-fixed reduction, SLIC, and BSF for one step."""
    partials = [bin_particles(c, spec) for c in sorted(chunks, key=lambda c: c.rank)]
    global_hist = reduce_partials(partials)
    density = finalize_density(global_hist)
    pvf = finalize_pvf(global_hist)
    labels = slic_partition(
        density,
        SlicParams(
            cluster_size=config.cluster_size,
            gamma=config.gamma,
            max_iters=config.max_iters,
        ),
    )
    dfield = build_distribution_field(density, labels, template)
    bsf = build_bsf(dfield)
    return StepSummary(
        time_index=chunks[0].time_index if chunks else 0,
        density=density,
        pvf=pvf,
        labels=labels,
        bsf=bsf,
    )


def fit_run_template(
    density: ScalarGrid, config: SummaryConfig
) -> tuple[FeatureTemplate, str]:
    box = config.template_box
    source = "explicit box"
    if box is None:
        box = similarity.default_template_box(density.spec)
        source = "freeboard default box"
    return similarity.fit_template(density, box), source


def _grid_for_scene(scene: SceneSpec | None, chunks: list[ParticleChunk], dims) -> GridSpec:
    if scene is not None:
        return GridSpec.from_bounds(scene.domain_bounds, dims)
    # no scene sidecar: estimate the domain from the global particle bounds
    pos = np.concatenate([c.positions for c in chunks if len(c)], axis=0)
    lo = pos.min(axis=0).astype(np.float64)
    hi = pos.max(axis=0).astype(np.float64)
    pad = np.maximum(1e-9, 1e-6 * (hi - lo))
    bounds = tuple((float(l), float(h + p)) for l, h, p in zip(lo, hi, pad))
    return GridSpec.from_bounds(bounds, dims)


def summarize_run(run_dir: str | Path, config: SummaryConfig | None = None) -> dict:
    """Run the summarize stage over a run directory's particle files.

    Processes every ``config.every``-th available time step, writes the
    rise-velocity and bubble-similarity fields per processed step (plus
    the density field when ``keep_density`` is set), the fitted template,
    and ``meta.json``. Returns the metadata dict.
    """
    config = config or SummaryConfig()
    paths = RunPaths(run_dir)
    if not paths.particles.is_dir():
        raise MissingInputError(f"no particles directory at {paths.particles}")

    scene = load_scene(paths.scene) if paths.scene.exists() else None
    dt = config.dt if config.dt is not None else (scene.timestep_dt if scene else None)
    if dt is None:
        raise ValueError("dt is required when no scene.json is present")

    all_chunks = read_particles(paths.particles)
    if not all_chunks:
        raise MissingInputError(f"no particle files in {paths.particles}")
    by_time: dict[int, list[ParticleChunk]] = {}
    for c in all_chunks:
        by_time.setdefault(c.time_index, []).append(c)
    times = sorted(by_time)[:: config.every]

    spec = _grid_for_scene(scene, all_chunks, config.grid_dims)
    paths.fields.mkdir(parents=True, exist_ok=True)

    template = None
    template_source = ""
    slic_diag = {}
    for t in times:
        chunks = by_time[t]
        if template is None:
            partials = [bin_particles(c, spec) for c in sorted(chunks, key=lambda c: c.rank)]
            density0 = finalize_density(reduce_partials(partials))
            template, template_source = fit_run_template(density0, config)
            similarity.save_template(
                template, paths.template,
                created_from=f"{template_source}, time step {t}",
            )
        summary = summarize_step(chunks, spec, config, template)
        write_field(summary.pvf, paths.field_file("pvf", t), t)
        write_field(summary.bsf, paths.field_file("bsf", t), t)
        if config.keep_density:
            write_field(summary.density, paths.field_file("density", t), t)
        d = summary.labels.diagnostics
        slic_diag[str(t)] = {
            "iterations": d.iterations,
            "converged": d.converged,
            "global_fallbacks": d.global_fallbacks,
            "fragments_relabeled": d.fragments_relabeled,
        }

    meta = {
        "grid": spec.to_json(),
        "time_steps": times,
        "every": config.every,
        "sim_dt": dt,
        "summary_dt": dt * config.every,
        "gamma": config.gamma,
        "cluster_size": list(config.cluster_size),
        "max_iters": config.max_iters,
        "threshold": config.threshold,
        "min_voxels": config.min_voxels,
        "low_confidence_dice": config.low_confidence_dice,
        "volume_jump_ratio": config.volume_jump_ratio,
        "template": {
            "mean": template.gaussian.mean,
            "var": template.gaussian.var,
            "n": template.gaussian.n,
            "box": {"lo": list(template.source_box.lo), "hi": list(template.source_box.hi)},
            "source": template_source,
        },
        "keep_density": config.keep_density,
        "slic": slic_diag,
    }
    paths.meta.write_text(json.dumps(meta, indent=2))
    return meta


def load_meta(run_dir: str | Path) -> dict:
    paths = RunPaths(run_dir)
    if not paths.meta.exists():
        raise MissingInputError(
            f"no meta.json in {paths.root}; run the summarize stage first"
        )
    return json.loads(paths.meta.read_text())


def extract_run(
    run_dir: str | Path,
    threshold: float | None = None,
    min_voxels: int | None = None,
) -> int:
    """Extract bubbles from every stored similarity field; returns the count."""
    paths = RunPaths(run_dir)
    meta = load_meta(run_dir)
    times = meta["time_steps"]
    missing = [t for t in times if not paths.field_file("bsf", t).exists()]
    if missing:
        raise MissingInputError(
            f"missing similarity fields for time steps {missing} in {paths.fields}"
        )
    threshold = meta["threshold"] if threshold is None else threshold
    min_voxels = meta["min_voxels"] if min_voxels is None else min_voxels

    paths.bubbles.mkdir(parents=True, exist_ok=True)
    n_total = 0
    for t in times:
        bsf, t_file = read_field(paths.field_file("bsf", t))
        records = extract_bubbles(bsf, t_file, threshold=threshold, min_voxels=min_voxels)
        save_bubbles(records, bsf.spec, paths.bubbles / bubbles_filename(t))
        n_total += len(records)
    return n_total


def open_store(run_dir: str | Path) -> BubbleStore:
    """Load the per-step bubble records with the run's tracking cadence."""
    meta = load_meta(run_dir)
    paths = RunPaths(run_dir)
    return BubbleStore.load(paths.bubbles, dt=meta["summary_dt"])


def with_desk_defaults(config: SummaryConfig | None = None) -> SummaryConfig:
    """The configuration used by tests and demos: a 64 x 8 x 64 grid."""
    return replace(config or SummaryConfig(), grid_dims=DESK_GRID_DIMS)
