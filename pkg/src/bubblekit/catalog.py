"""Image-plus-attribute bubble database and multivariate queries.

The catalog is a directory of open formats: ``catalog.csv`` holds one row
per extracted bubble, ``images/`` holds a pre-rendered X-Z projection per
bubble (rendered once at build time with fixed view and color mapping so
images are comparable across bubbles and steps), and ``tracks/`` collects
computed track records. Everything downstream (HTTP service, browser
explorer) reads these files only.

The bed's y extent is thin, so projections collapse y by maximum
intensity onto the X-Z plane, with the rise axis x pointing up.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

import numpy as np
from PIL import Image

from .bubbles import BubbleRecord, load_bubbles
from .fields import GridSpec, ScalarGrid, read_field
from .pipeline import MissingInputError, RunPaths, load_meta

CSV_COLUMNS = [
    "time_index",
    "bubble_id",
    "volume",
    "x_center",
    "y_center",
    "z_center",
    "aspect_ratio",
    "mean_similarity",
    "is_freeboard",
    "image_path",
]

DEFAULT_IMAGE_PX = 256

# fixed palette: context bubbles pale grey, subject bubble a golden-angle hue
CONTEXT_RGBA = (185, 185, 185, 140)


@dataclass
class CatalogRow:
    time_index: int
    bubble_id: int
    volume: float
    x_center: float
    y_center: float
    z_center: float
    aspect_ratio: float
    mean_similarity: float
    is_freeboard: bool
    image_path: str

    @classmethod
    def from_record(cls, rec: BubbleRecord, image_path: str) -> "CatalogRow":
        return cls(
            time_index=rec.time_index,
            bubble_id=rec.bubble_id,
            volume=rec.volume,
            x_center=rec.centroid[0],
            y_center=rec.centroid[1],
            z_center=rec.centroid[2],
            aspect_ratio=rec.aspect_ratio,
            mean_similarity=rec.mean_similarity,
            is_freeboard=rec.is_freeboard,
            image_path=image_path,
        )


NUMERIC_COLUMNS = [
    "time_index",
    "bubble_id",
    "volume",
    "x_center",
    "y_center",
    "z_center",
    "aspect_ratio",
    "mean_similarity",
]


@dataclass
class QuerySpec:
    """Conjunction of closed per-attribute ranges plus a freeboard switch."""

    ranges: dict[str, tuple[float, float]] | None = None
    t0: int | None = None
    t1: int | None = None
    include_freeboard: bool = False

    def __post_init__(self):
        self.ranges = dict(self.ranges or {})
        for col, (lo, hi) in self.ranges.items():
            if col not in NUMERIC_COLUMNS:
                raise ValueError(f"unknown query column {col!r}")
            if lo > hi:
                raise ValueError(f"range for {col!r} has lo {lo} > hi {hi}")


def query(rows: list[CatalogRow], spec: QuerySpec) -> list[CatalogRow]:
    """Rows satisfying every range predicate, ordered by (time, id)."""
    out = []
    for row in rows:
        if row.is_freeboard and not spec.include_freeboard:
            continue
        if spec.t0 is not None and row.time_index < spec.t0:
            continue
        if spec.t1 is not None and row.time_index > spec.t1:
            continue
        ok = True
        for col, (lo, hi) in spec.ranges.items():
            v = getattr(row, col)
            if not (lo <= v <= hi):
                ok = False
                break
        if ok:
            out.append(row)
    return sorted(out, key=lambda r: (r.time_index, r.bubble_id))


# ---------------------------------------------------------------------------
# Projection rendering.


def bubble_hue_rgba(bubble_id: int) -> tuple[int, int, int, int]:
    """Golden-angle hue wheel: a stable distinct color per bubble id."""
    h = (bubble_id * 0.61803398875) % 1.0
    i = int(h * 6.0)
    f = h * 6.0 - i
    q, t = 1.0 - f, f
    r, g, b = [
        (1, t, 0), (q, 1, 0), (0, 1, t), (0, q, 1), (t, 0, 1), (1, 0, q),
    ][i % 6]
    return (int(55 + 200 * r), int(55 + 200 * g), int(55 + 200 * b), 235)


def project_field(grid: ScalarGrid, y_slab: int | None = None) -> np.ndarray:
    """Maximum-intensity X-Z projection along y (or one y slab), shape (nx, nz)."""
    vol = grid.as_3d()
    if y_slab is not None:
        return np.array(vol[:, y_slab, :], dtype=np.float64)
    return vol.max(axis=1)


def project_mask(voxels: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Boolean X-Z footprint of a voxel set, shape (nx, nz)."""
    nx, _, nz = spec.dims
    out = np.zeros((nx, nz), dtype=bool)
    if len(voxels):
        ix, _, iz = spec.unflatten(np.asarray(voxels, dtype=np.int64))
        out[ix, iz] = True
    return out


def _to_image(rgba_xz: np.ndarray, size_px: int) -> Image.Image:
    """(nx, nz, 4) voxel colors -> PNG-ready image with +x pointing up."""
    nx, nz = rgba_xz.shape[:2]
    scale = max(1, size_px // max(nx, nz))
    img = rgba_xz[::-1, :, :]            # x ascending -> image rows top-down
    img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return Image.fromarray(img, mode="RGBA")


def field_colormap(values: np.ndarray, name: str, vmin: float, vmax: float) -> np.ndarray:
    """Fixed value -> color mapping per field kind, shape (nx, nz, 4) uint8.

    density/bsf use a white-to-blue ramp; pvf uses a blue-white-red
    diverging map centered on zero.
    """
    span = max(vmax - vmin, 1e-12)
    rgba = np.zeros(values.shape + (4,), dtype=np.uint8)
    if name == "pvf":
        half = max(abs(vmin), abs(vmax), 1e-12)
        u = np.clip(values / half, -1.0, 1.0)
        up = np.clip(u, 0, 1)
        down = np.clip(-u, 0, 1)
        rgba[..., 0] = np.round(255 * (1.0 - down)).astype(np.uint8)
        rgba[..., 1] = np.round(255 * (1.0 - 0.9 * np.maximum(up, down))).astype(np.uint8)
        rgba[..., 2] = np.round(255 * (1.0 - up)).astype(np.uint8)
    else:
        u = np.clip((values - vmin) / span, 0.0, 1.0)
        rgba[..., 0] = np.round(255 * (1.0 - 0.85 * u)).astype(np.uint8)
        rgba[..., 1] = np.round(255 * (1.0 - 0.55 * u)).astype(np.uint8)
        rgba[..., 2] = 255
    rgba[..., 3] = 255
    return rgba


def render_projection(
    field_or_bubble,
    spec: GridSpec | None = None,
    size_px: int = DEFAULT_IMAGE_PX,
    context: list[BubbleRecord] | None = None,
    value_range: tuple[float, float] | None = None,
) -> Image.Image:
    """Render a field or a bubble voxel set as an X-Z projection image.

    Fields use their fixed colormap over ``value_range``; bubbles render
    as a filled footprint in their id's hue over optional grey context
    bubbles on a transparent background. An empty voxel set yields a fully
    transparent image.
    """
    if isinstance(field_or_bubble, ScalarGrid):
        grid = field_or_bubble
        values = project_field(grid)
        if value_range is None:
            value_range = (float(values.min()), float(values.max()))
        rgba = field_colormap(values, grid.name, *value_range)
        return _to_image(rgba, size_px)

    if isinstance(field_or_bubble, BubbleRecord):
        voxels = field_or_bubble.voxels
        bubble_id = field_or_bubble.bubble_id
        subject = (field_or_bubble.time_index, field_or_bubble.bubble_id)
        if spec is None:
            raise ValueError("spec is required when rendering a BubbleRecord")
    else:
        voxels = np.asarray(field_or_bubble, dtype=np.int64)
        bubble_id = 0
        subject = None
        if spec is None:
            raise ValueError("spec is required when rendering a voxel set")

    nx, _, nz = spec.dims
    rgba = np.zeros((nx, nz, 4), dtype=np.uint8)
    for other in context or []:
        if subject is not None and (other.time_index, other.bubble_id) == subject:
            continue
        rgba[project_mask(other.voxels, spec)] = CONTEXT_RGBA
    rgba[project_mask(voxels, spec)] = bubble_hue_rgba(bubble_id)
    return _to_image(rgba, size_px)


# ---------------------------------------------------------------------------
# Catalog build / load.


def image_relpath(time_index: int, bubble_id: int) -> str:
    return f"images/t{time_index:06d}_b{bubble_id:04d}.png"


def build_catalog(run_dir: str | Path, size_px: int = DEFAULT_IMAGE_PX) -> list[CatalogRow]:
    """Render every bubble image and write ``catalog.csv``.

    Rebuilding from the same inputs is idempotent: CSV and PNG bytes are
    reproduced exactly.
    """
    paths = RunPaths(run_dir)
    meta = load_meta(run_dir)
    times = meta["time_steps"]

    missing = [t for t in times if not (paths.bubbles / f"bubbles_t{t:06d}.json").exists()]
    if missing:
        raise MissingInputError(
            f"missing bubble records for time steps {missing}; run the extract stage"
        )

    paths.images.mkdir(parents=True, exist_ok=True)
    paths.tracks.mkdir(parents=True, exist_ok=True)
    rows: list[CatalogRow] = []
    for t in times:
        records, spec = load_bubbles(paths.bubbles / f"bubbles_t{t:06d}.json")
        for rec in records:
            rel = image_relpath(t, rec.bubble_id)
            img = render_projection(rec, spec=spec, size_px=size_px, context=records)
            img.save(paths.root / rel, format="PNG")
            rows.append(CatalogRow.from_record(rec, rel))

    rows.sort(key=lambda r: (r.time_index, r.bubble_id))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row.time_index,
                row.bubble_id,
                repr(row.volume),
                repr(row.x_center),
                repr(row.y_center),
                repr(row.z_center),
                repr(row.aspect_ratio),
                repr(row.mean_similarity),
                "true" if row.is_freeboard else "false",
                row.image_path,
            ]
        )
    paths.catalog_csv.write_text(buf.getvalue())
    return rows


def load_catalog(run_dir: str | Path) -> list[CatalogRow]:
    paths = RunPaths(run_dir)
    if not paths.catalog_csv.exists():
        raise MissingInputError(
            f"no catalog.csv in {paths.root}; run the catalog stage first"
        )
    rows = []
    with open(paths.catalog_csv, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(
                CatalogRow(
                    time_index=int(rec["time_index"]),
                    bubble_id=int(rec["bubble_id"]),
                    volume=float(rec["volume"]),
                    x_center=float(rec["x_center"]),
                    y_center=float(rec["y_center"]),
                    z_center=float(rec["z_center"]),
                    aspect_ratio=float(rec["aspect_ratio"]),
                    mean_similarity=float(rec["mean_similarity"]),
                    is_freeboard=rec["is_freeboard"] == "true",
                    image_path=rec["image_path"],
                )
            )
    return rows


def attribute_ranges(rows: list[CatalogRow]) -> dict[str, tuple[float, float]]:
    """Per-column (min, max) over all rows, for query slider bounds."""
    out = {}
    for col in NUMERIC_COLUMNS:
        vals = [getattr(r, col) for r in rows]
        if vals:
            out[col] = (min(vals), max(vals))
    return out


def row_to_json(row: CatalogRow) -> dict:
    return {f.name: getattr(row, f.name) for f in dc_fields(CatalogRow)}
