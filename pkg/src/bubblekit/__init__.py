"""Bubble dynamics analysis for particle-based fluidized-bed data.

The package is organized as a small numpy/scipy library around one
workflow: raw particles are summarized into a particle-density field and
a particle rise-velocity field (PVF), the density field is partitioned
into supervoxels and classified against a statistical bubble template to
produce a bubble similarity field (BSF), and the stored BSF/PVF pair is
then segmented, characterized, tracked over time, and exposed through a
file catalog plus an HTTP query service.

Modules
-------
synth       deterministic synthetic bed scenes with ground-truth voids
fields      spatial-histogram density / rise-velocity fields, chunked reduction
slic        supervoxel partitioning of the density field
similarity  Gaussian summaries, Bhattacharyya scoring, BSF construction
bubbles     segmentation, connected components, per-bubble characteristics
tracking    overlap (Dice) tracking, merge/split events, rise velocity
catalog     CSV + PNG image database, multivariate queries
pipeline    run-directory orchestration (summarize / extract stages)
server      read-only HTTP API over a built catalog
cli         command-line entry points
"""

from . import bubbles, catalog, fields, pipeline, similarity, slic, synth, tracking
from .bubbles import BubbleRecord, connected_components, extract_bubbles, segment
from .fields import (
    GridSpec,
    PartialHistogram,
    ScalarGrid,
    bin_particles,
    finalize_density,
    finalize_pvf,
    reduce_partials,
)
from .similarity import (
    FeatureTemplate,
    GaussianSummary,
    bhattacharyya,
    build_bsf,
    build_distribution_field,
    fit_gaussian,
    fit_template,
)
from .slic import SlicParams, SupervoxelLabels, slic_distance, slic_partition
from .synth import ParticleChunk, SceneSpec, VoidSpec, chunk, generate
from .tracking import BubbleStore, TrackRecord, dice, match_step, track, track_all

__version__ = "0.1.0"

__all__ = [
    "BubbleRecord",
    "BubbleStore",
    "FeatureTemplate",
    "GaussianSummary",
    "GridSpec",
    "ParticleChunk",
    "PartialHistogram",
    "ScalarGrid",
    "SceneSpec",
    "SlicParams",
    "SupervoxelLabels",
    "TrackRecord",
    "VoidSpec",
    "bhattacharyya",
    "bin_particles",
    "build_bsf",
    "build_distribution_field",
    "bubbles",
    "catalog",
    "chunk",
    "connected_components",
    "dice",
    "extract_bubbles",
    "fields",
    "finalize_density",
    "finalize_pvf",
    "fit_gaussian",
    "fit_template",
    "generate",
    "match_step",
    "pipeline",
    "reduce_partials",
    "segment",
    "similarity",
    "slic",
    "slic_distance",
    "slic_partition",
    "synth",
    "track",
    "track_all",
    "tracking",
]
