"""Particle-density and rise-velocity fields via chunked spatial histograms.

Each particle chunk is binned locally into a partial histogram (counts
plus per-bin x-velocity sums); partials are then combined by an
order-fixed elementwise reduction, mirroring a distributed map/reduce
without requiring one. Counts are integers and velocity sums are
accumulated in float64, so the reduction is exact and therefore
independent of the chunking: any chunk count reproduces serial binning
bit for bit.

Grid layout: values are stored as one dense array in x-fastest order,
``flat = ix + nx * (iy + ny * iz)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .synth import ParticleChunk

FIELD_MAGIC = b"BBLF"
FIELD_VERSION = 1
FIELD_NAMES = {0: "density", 1: "pvf", 2: "bsf", 3: "labels"}
FIELD_IDS = {v: k for k, v in FIELD_NAMES.items()}


class OutOfBoundsError(ValueError):
    """A particle lies outside the histogram domain."""

    def __init__(self, particle_index: int, position):
        super().__init__(
            f"particle {particle_index} at {tuple(float(p) for p in position)} "
            "is outside the grid domain"
        )
        self.particle_index = particle_index


class SpecMismatchError(ValueError):
    """Partial histograms with different grid specs cannot be reduced."""


class FieldFormatError(ValueError):
    """Field file is malformed; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class GridSpec:
    """Regular 3D binning grid: per-axis bin counts, origin, and spacing."""

    dims: tuple[int, int, int]
    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be >= 1 per axis, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be > 0 per axis, got {self.spacing}")

    @classmethod
    def from_bounds(
        cls,
        bounds: tuple[tuple[float, float], ...],
        dims: tuple[int, int, int],
    ) -> "GridSpec":
        """Cover an axis-aligned domain with ``dims`` bins per axis."""
        origin = tuple(float(lo) for lo, _ in bounds)
        spacing = tuple(
            (float(hi) - float(lo)) / d for (lo, hi), d in zip(bounds, dims)
        )
        return cls(dims=tuple(int(d) for d in dims), origin=origin, spacing=spacing)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def flat_index(self, ix, iy, iz):
        nx, ny, _ = self.dims
        return ix + nx * (iy + ny * iz)

    def unflatten(self, flat):
        """Inverse of ``flat_index``: flat -> (ix, iy, iz) arrays."""
        nx, ny, _ = self.dims
        flat = np.asarray(flat)
        ix = flat % nx
        iy = (flat // nx) % ny
        iz = flat // (nx * ny)
        return ix, iy, iz

    def voxel_centers(self, flat) -> np.ndarray:
        """World coordinates of voxel centers, shape (n, 3)."""
        ix, iy, iz = self.unflatten(flat)
        idx = np.stack([ix, iy, iz], axis=-1).astype(np.float64)
        return np.asarray(self.origin) + (idx + 0.5) * np.asarray(self.spacing)

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "origin": list(self.origin),
            "spacing": list(self.spacing),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridSpec":
        return cls(
            dims=tuple(int(d) for d in obj["dims"]),
            origin=tuple(float(v) for v in obj["origin"]),
            spacing=tuple(float(v) for v in obj["spacing"]),
        )


@dataclass
class ScalarGrid:
    """Dense scalar field on a GridSpec (x-fastest flat storage)."""

    spec: GridSpec
    values: np.ndarray
    name: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if len(self.values) != self.spec.n_voxels:
            raise ValueError(
                f"values length {len(self.values)} != voxel count {self.spec.n_voxels}"
            )

    def as_3d(self) -> np.ndarray:
        """View shaped (nx, ny, nz) with [ix, iy, iz] indexing."""
        nx, ny, nz = self.spec.dims
        return self.values.reshape((nz, ny, nx)).transpose(2, 1, 0)


@dataclass
class PartialHistogram:
    """One chunk's contribution: bin counts and per-bin vx sums."""

    spec: GridSpec
    counts: np.ndarray
    vx_sums: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).ravel()
        self.vx_sums = np.asarray(self.vx_sums, dtype=np.float64).ravel()
        if len(self.counts) != len(self.vx_sums):
            raise ValueError("counts and vx_sums must have equal length")
        if len(self.counts) != self.spec.n_voxels:
            raise ValueError("histogram length does not match grid spec")


def bin_particles(chunk: ParticleChunk, spec: GridSpec) -> PartialHistogram:
    """Bin one chunk's particles into counts and x-velocity sums.

    The bin index per axis is ``floor((p - origin) / spacing)``; positions
    exactly on the closed upper domain bound clamp into the last bin.
    Positions outside the closed domain raise :class:`OutOfBoundsError`
    naming the offending particle.
    """
    pos = chunk.positions.astype(np.float64)
    origin = np.asarray(spec.origin)
    spacing = np.asarray(spec.spacing)
    dims = np.asarray(spec.dims)
    upper = origin + spacing * dims

    bad = (pos < origin).any(axis=1) | (pos > upper).any(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise OutOfBoundsError(i, pos[i])

    idx = np.floor((pos - origin) / spacing).astype(np.int64)
    np.clip(idx, 0, dims - 1, out=idx)
    flat = spec.flat_index(idx[:, 0], idx[:, 1], idx[:, 2])

    counts = np.bincount(flat, minlength=spec.n_voxels).astype(np.int64)
    vx_sums = np.zeros(spec.n_voxels, dtype=np.float64)
    np.add.at(vx_sums, flat, chunk.velocities[:, 0].astype(np.float64))
    return PartialHistogram(spec=spec, counts=counts, vx_sums=vx_sums)


def reduce_partials(partials: list[PartialHistogram]) -> PartialHistogram:
    """Elementwise sum of partial histograms, in the given (rank) order."""
    if not partials:
        raise ValueError("cannot reduce an empty list of partials")
    spec = partials[0].spec
    for p in partials[1:]:
        if p.spec != spec:
            raise SpecMismatchError(f"grid spec mismatch: {p.spec} != {spec}")
    counts = np.zeros(spec.n_voxels, dtype=np.int64)
    vx_sums = np.zeros(spec.n_voxels, dtype=np.float64)
    for p in partials:
        counts += p.counts
        vx_sums += p.vx_sums
    return PartialHistogram(spec=spec, counts=counts, vx_sums=vx_sums)


def finalize_density(global_hist: PartialHistogram) -> ScalarGrid:
    """Particle count per bin, as a scalar field."""
    return ScalarGrid(
        spec=global_hist.spec,
        values=global_hist.counts.astype(np.float64),
        name="density",
    )


def finalize_pvf(global_hist: PartialHistogram) -> ScalarGrid:
    """Mean particle x-velocity per bin; empty bins map to 0."""
    counts = global_hist.counts
    values = np.zeros(len(counts), dtype=np.float64)
    occupied = counts > 0
    values[occupied] = global_hist.vx_sums[occupied] / counts[occupied]
    return ScalarGrid(spec=global_hist.spec, values=values, name="pvf")


# ---------------------------------------------------------------------------
# Field file format ("BBLF"): little-endian header + float32 payload.


def field_filename(name: str, time_index: int) -> str:
    return f"field_{name}_t{time_index:06d}.bblf"


def write_field(grid: ScalarGrid, path: str | Path, time_index: int) -> None:
    if grid.name not in FIELD_IDS:
        raise ValueError(f"unknown field name {grid.name!r}")
    nx, ny, nz = grid.spec.dims
    with open(path, "wb") as f:
        f.write(FIELD_MAGIC)
        f.write(struct.pack("<IIB", FIELD_VERSION, time_index, FIELD_IDS[grid.name]))
        f.write(struct.pack("<III", nx, ny, nz))
        f.write(struct.pack("<3d", *grid.spec.origin))
        f.write(struct.pack("<3d", *grid.spec.spacing))
        f.write(grid.values.astype("<f4").tobytes())


def read_field(path: str | Path) -> tuple[ScalarGrid, int]:
    """Read a ``.bblf`` file; returns the grid and its time index."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != FIELD_MAGIC:
        raise FieldFormatError(f"{path.name}: bad magic {raw[:4]!r}", 0)
    header = 4 + 9 + 12 + 24 + 24
    if len(raw) < header:
        raise FieldFormatError(f"{path.name}: truncated header", len(raw))
    version, time_index, name_id = struct.unpack_from("<IIB", raw, 4)
    if version != FIELD_VERSION:
        raise FieldFormatError(f"{path.name}: unsupported version {version}", 4)
    if name_id not in FIELD_NAMES:
        raise FieldFormatError(f"{path.name}: unknown field id {name_id}", 12)
    nx, ny, nz = struct.unpack_from("<III", raw, 13)
    origin = struct.unpack_from("<3d", raw, 25)
    spacing = struct.unpack_from("<3d", raw, 49)
    n = nx * ny * nz
    if len(raw) < header + 4 * n:
        raise FieldFormatError(
            f"{path.name}: truncated payload ({n} voxels declared)", len(raw)
        )
    values = np.frombuffer(raw, dtype="<f4", count=n, offset=header).astype(np.float64)
    spec = GridSpec(dims=(nx, ny, nz), origin=origin, spacing=spacing)
    return ScalarGrid(spec=spec, values=values, name=FIELD_NAMES[name_id]), time_index
