"""Bubble extraction from stored similarity fields.

The BSF is thresholded with one global similarity value, the resulting
mask is split into 6-connected components, the component touching the top
of the domain is flagged as freeboard (the particle-free region above the
bed is detected like a bubble but is not one), and each component is
characterized by volume, centroid, bounding box, and aspect ratio.

x is the rise axis; aspect ratio is width / height with width the mean of
the two lateral bounding-box extents and height the extent along x, all
in world units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .fields import GridSpec, ScalarGrid
from .slic import FACE_STRUCTURE

DEFAULT_THRESHOLD = 0.92
DEFAULT_MIN_VOXELS = 2  # single-voxel specks are treated as noise


@dataclass
class BubbleRecord:
    """One extracted bubble at one time step."""

    time_index: int
    bubble_id: int
    voxels: np.ndarray          # sorted flat voxel indices
    volume: float               # world units (voxel count * voxel volume)
    centroid: tuple[float, float, float]
    bbox: tuple[tuple[int, int, int], tuple[int, int, int]]  # inclusive voxel corners
    aspect_ratio: float
    is_freeboard: bool
    mean_similarity: float

    @property
    def n_voxels(self) -> int:
        return len(self.voxels)


def segment(bsf: ScalarGrid, threshold: float) -> np.ndarray:
    """Boolean bubble mask: BSF value >= threshold (flat, x-fastest)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return np.asarray(bsf.values) >= threshold


def connected_components(mask: np.ndarray, spec: GridSpec) -> list[np.ndarray]:
    """Maximal 6-connected components of the true voxels.

    ``mask`` is either flat in the grid's x-fastest layout (as produced by
    :func:`segment`) or a 3-D array indexed ``[ix, iy, iz]``. Returns
    sorted flat-index arrays ordered by descending size; ties keep
    raster-scan discovery order, so component ids are deterministic.
    """
    nx, ny, nz = spec.dims
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 3:
        if mask.shape != (nx, ny, nz):
            raise ValueError(f"mask shape {mask.shape} does not match dims {spec.dims}")
        mask3 = mask
    else:
        mask3 = mask.reshape((nz, ny, nx)).transpose(2, 1, 0)
    lab, n = ndimage.label(mask3, structure=FACE_STRUCTURE)
    if n == 0:
        return []
    lab_flat = lab.transpose(2, 1, 0).ravel()  # back to x-fastest layout
    order = np.argsort(lab_flat, kind="stable")
    flat_sorted = lab_flat[order]
    starts = np.searchsorted(flat_sorted, np.arange(1, n + 1))
    ends = np.searchsorted(flat_sorted, np.arange(1, n + 1), side="right")
    comps = [np.sort(order[s:e]) for s, e in zip(starts, ends)]
    comps.sort(key=lambda c: -len(c))  # stable: equal sizes keep label order
    return comps


def characterize(
    voxels: np.ndarray,
    spec: GridSpec,
    bsf: ScalarGrid,
    time_index: int,
    bubble_id: int = 0,
) -> BubbleRecord:
    """Compute volume, centroid, bbox, and aspect ratio for one component."""
    voxels = np.asarray(voxels, dtype=np.int64)
    if len(voxels) == 0:
        raise ValueError("cannot characterize an empty voxel set")
    ix, iy, iz = spec.unflatten(voxels)
    centers = spec.voxel_centers(voxels)
    centroid = tuple(float(c) for c in centers.mean(axis=0))
    lo = (int(ix.min()), int(iy.min()), int(iz.min()))
    hi = (int(ix.max()), int(iy.max()), int(iz.max()))
    sx, sy, sz = spec.spacing
    height = (hi[0] - lo[0] + 1) * sx
    width = 0.5 * ((hi[1] - lo[1] + 1) * sy + (hi[2] - lo[2] + 1) * sz)
    return BubbleRecord(
        time_index=time_index,
        bubble_id=bubble_id,
        voxels=voxels,
        volume=len(voxels) * spec.voxel_volume,
        centroid=centroid,
        bbox=(lo, hi),
        aspect_ratio=width / height,
        is_freeboard=False,
        mean_similarity=float(np.asarray(bsf.values)[voxels].mean()),
    )


def filter_freeboard(records: list[BubbleRecord], spec: GridSpec) -> list[BubbleRecord]:
    """Flag components whose bbox touches the last voxel plane along x.

    Flagged records stay in the catalog but are excluded from matching,
    tracking, and default queries.
    """
    nx = spec.dims[0]
    for rec in records:
        rec.is_freeboard = rec.bbox[1][0] == nx - 1
    return records


def extract_bubbles(
    bsf: ScalarGrid,
    time_index: int,
    threshold: float = DEFAULT_THRESHOLD,
    min_voxels: int = DEFAULT_MIN_VOXELS,
) -> list[BubbleRecord]:
    """Segment one BSF and characterize every component of >= min_voxels."""
    mask = segment(bsf, threshold)
    comps = [c for c in connected_components(mask, bsf.spec) if len(c) >= min_voxels]
    records = [
        characterize(c, bsf.spec, bsf, time_index, bubble_id=i)
        for i, c in enumerate(comps)
    ]
    return filter_freeboard(records, bsf.spec)


# ---------------------------------------------------------------------------
# Per-step bubble store files (JSON), the post hoc input for tracking.


def bubbles_filename(time_index: int) -> str:
    return f"bubbles_t{time_index:06d}.json"


def save_bubbles(records: list[BubbleRecord], spec: GridSpec, path: str | Path) -> None:
    obj = {
        "time_index": records[0].time_index if records else None,
        "grid": spec.to_json(),
        "bubbles": [
            {
                "bubble_id": r.bubble_id,
                "voxels": r.voxels.tolist(),
                "volume": r.volume,
                "centroid": list(r.centroid),
                "bbox": [list(r.bbox[0]), list(r.bbox[1])],
                "aspect_ratio": r.aspect_ratio,
                "is_freeboard": r.is_freeboard,
                "mean_similarity": r.mean_similarity,
                "time_index": r.time_index,
            }
            for r in records
        ],
    }
    Path(path).write_text(json.dumps(obj))


def load_bubbles(path: str | Path) -> tuple[list[BubbleRecord], GridSpec]:
    obj = json.loads(Path(path).read_text())
    spec = GridSpec.from_json(obj["grid"])
    records = [
        BubbleRecord(
            time_index=int(b["time_index"]),
            bubble_id=int(b["bubble_id"]),
            voxels=np.asarray(b["voxels"], dtype=np.int64),
            volume=float(b["volume"]),
            centroid=tuple(b["centroid"]),
            bbox=(tuple(b["bbox"][0]), tuple(b["bbox"][1])),
            aspect_ratio=float(b["aspect_ratio"]),
            is_freeboard=bool(b["is_freeboard"]),
            mean_similarity=float(b["mean_similarity"]),
        )
        for b in obj["bubbles"]
    ]
    return records, spec
