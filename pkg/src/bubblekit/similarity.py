"""Statistical bubble classification of the density field.

A bubble feature template is a single Gaussian fitted over the density
values in a user-chosen voxel box (bubbles are homogeneous low-density
regions, so one Gaussian suffices). Each supervoxel is likewise
summarized as a Gaussian, scored against the template with the
closed-form Bhattacharyya distance between univariate Gaussians,

    D = (mu1 - mu2)^2 / (8 * (v1 + v2) / 2)
        + 0.5 * ln( ((v1 + v2) / 2) / sqrt(v1 * v2) )

and the distances are normalized by the per-field maximum and flipped
(``1 - D / D_max``) into a bubble similarity field (BSF) in [0, 1].

Variances are population variances floored at ``VARIANCE_FLOOR`` so that
perfectly homogeneous regions (sample variance zero) keep the distance
finite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import GridSpec, ScalarGrid
from .slic import SupervoxelLabels

# Variance floor in density^2 units. Density values are integer particle
# counts, so variance structure below (half a count)^2 is measurement
# noise; flooring there keeps the log-variance term of the Bhattacharyya
# distance from treating "exactly constant" regions (empty voids, the
# freeboard) as infinitely far from near-constant ones.
VARIANCE_FLOOR = 0.25


class EmptySampleError(ValueError):
    """A Gaussian cannot be fitted from zero samples."""


@dataclass(frozen=True)
class GaussianSummary:
    mean: float
    var: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"sample count must be >= 1, got {self.n}")
        if self.var < VARIANCE_FLOOR:
            object.__setattr__(self, "var", VARIANCE_FLOOR)


@dataclass(frozen=True)
class BoxFilter:
    """Half-open axis-aligned voxel box [lo, hi) per axis."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(int(v) for v in self.hi))
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box is empty: lo={self.lo} hi={self.hi}")

    def inside(self, dims: tuple[int, int, int]) -> bool:
        return all(l >= 0 and h <= d for l, h, d in zip(self.lo, self.hi, dims))


@dataclass(frozen=True)
class FeatureTemplate:
    gaussian: GaussianSummary
    source_box: BoxFilter


@dataclass
class DistributionField:
    """Per-cluster Gaussian summaries plus raw template distances."""

    labels: SupervoxelLabels
    per_cluster: list[GaussianSummary]
    distances: np.ndarray

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=np.float64)
        if len(self.per_cluster) != self.labels.n_clusters:
            raise ValueError("one Gaussian per cluster required")
        if len(self.distances) != self.labels.n_clusters:
            raise ValueError("one distance per cluster required")


def fit_gaussian(values) -> GaussianSummary:
    """Mean and population variance of a sample, variance floored."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if len(values) == 0:
        raise EmptySampleError("cannot fit a Gaussian to an empty sample")
    mean = float(values.mean())
    var = float(values.var())  # population variance (divide by n)
    return GaussianSummary(mean=mean, var=var, n=len(values))


def fit_template(density: ScalarGrid, box: BoxFilter) -> FeatureTemplate:
    """Fit the feature Gaussian over the density values inside a voxel box."""
    if not box.inside(density.spec.dims):
        raise ValueError(f"box {box} not inside grid dims {density.spec.dims}")
    vol = density.as_3d()[box.lo[0]:box.hi[0], box.lo[1]:box.hi[1], box.lo[2]:box.hi[2]]
    return FeatureTemplate(gaussian=fit_gaussian(vol), source_box=box)


def bhattacharyya(g1: GaussianSummary, g2: GaussianSummary) -> float:
    """Closed-form Bhattacharyya distance between two univariate Gaussians."""
    v = 0.5 * (g1.var + g2.var)
    d = g1.mean - g2.mean
    return float(0.125 * d * d / v + 0.5 * np.log(v / np.sqrt(g1.var * g2.var)))


def build_distribution_field(
    density: ScalarGrid, labels: SupervoxelLabels, template: FeatureTemplate
) -> DistributionField:
    """Fit one Gaussian per cluster and score it against the template."""
    lab = labels.labels
    n_c = labels.n_clusters
    values = np.asarray(density.values, dtype=np.float64)
    counts = np.bincount(lab, minlength=n_c)
    sums = np.bincount(lab, weights=values, minlength=n_c)
    means = sums / counts
    dev = values - means[lab]
    variances = np.bincount(lab, weights=dev * dev, minlength=n_c) / counts
    variances = np.maximum(variances, VARIANCE_FLOOR)

    per_cluster = [
        GaussianSummary(mean=float(m), var=float(v), n=int(n))
        for m, v, n in zip(means, variances, counts)
    ]
    tv = template.gaussian.var
    tm = template.gaussian.mean
    mid = 0.5 * (variances + tv)
    dm = means - tm
    distances = 0.125 * dm * dm / mid + 0.5 * np.log(mid / np.sqrt(variances * tv))
    return DistributionField(labels=labels, per_cluster=per_cluster, distances=distances)


def build_bsf(dfield: DistributionField) -> ScalarGrid:
    """Normalize distances by the per-field maximum and flip to [0, 1].

    Clusters at the maximum distance map to 0, clusters identical to the
    template map to 1. A field where every distance is 0 maps to all 1.
    """
    d = dfield.distances
    d_max = float(d.max()) if len(d) else 0.0
    if d_max > 0:
        per_cluster = 1.0 - d / d_max
    else:
        per_cluster = np.ones(len(d))
    values = per_cluster[dfield.labels.labels]
    return ScalarGrid(spec=dfield.labels.spec, values=values, name="bsf")


def save_template(template: FeatureTemplate, path: str | Path, created_from: str = "") -> None:
    obj = {
        "mean": template.gaussian.mean,
        "var": template.gaussian.var,
        "n": template.gaussian.n,
        "box": {"lo": list(template.source_box.lo), "hi": list(template.source_box.hi)},
        "created_from": created_from,
    }
    Path(path).write_text(json.dumps(obj, indent=2))


def load_template(path: str | Path) -> FeatureTemplate:
    obj = json.loads(Path(path).read_text())
    return FeatureTemplate(
        gaussian=GaussianSummary(mean=obj["mean"], var=obj["var"], n=obj["n"]),
        source_box=BoxFilter(lo=tuple(obj["box"]["lo"]), hi=tuple(obj["box"]["hi"])),
    )


def default_template_box(spec: GridSpec) -> BoxFilter:
    """Freeboard-interior box: top 6% of x, middle half of y and z.

    The region above the bed is particle-free, so its density statistics
    match a bubble interior; this gives a usable template without manual
    region selection. Override with an explicit box to mimic picking a
    bubble by hand.
    """
    nx, ny, nz = spec.dims
    x0 = max(0, nx - max(1, round(0.06 * nx)))
    return BoxFilter(
        lo=(x0, ny // 4, nz // 4),
        hi=(nx, max(ny // 4 + 1, 3 * ny // 4), max(nz // 4 + 1, 3 * nz // 4)),
    )
