"""Supervoxel partitioning of scalar grids (SLIC-style local k-means).

Cluster centers start on a regular lattice at cluster-size stride; each
iteration assigns every voxel to the minimum-distance center among those
whose 2a x 2b x 2c window contains it, with ties broken by the lowest
cluster id, then recomputes centers as member means. The distance mixes
spatial proximity (voxel-index units) and value similarity:

    D = gamma * ||c_pos - p_pos||_2 + (1 - gamma) * |c_val - p_val| / value_scale

Afterwards a connectivity-enforcement pass relabels any disconnected
fragment into an adjacent cluster, so every final cluster is 6-connected.
The whole procedure is deterministic: identical inputs give identical
labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fields import GridSpec, ScalarGrid

FACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)  # 6-connectivity


@dataclass
class SlicParams:
    cluster_size: tuple[int, int, int] = (3, 3, 3)
    gamma: float = 0.3
    max_iters: int = 10
    value_scale: float | None = None  # None -> field max - min

    def __post_init__(self):
        if any(a < 1 for a in self.cluster_size):
            raise ValueError(f"cluster_size must be >= 1 per axis, got {self.cluster_size}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


@dataclass
class SlicDiagnostics:
    iterations: int = 0
    converged: bool = False
    global_fallbacks: int = 0       # voxels missed by every window, assigned globally
    fragments_relabeled: int = 0
    enforcement_passes: int = 0
    value_scale_used: float = 1.0


@dataclass
class SupervoxelLabels:
    """Per-voxel cluster id plus per-cluster centers (position, mean value)."""

    spec: GridSpec
    labels: np.ndarray          # (n_voxels,) int32, dense ids 0..n_clusters-1
    centers_pos: np.ndarray     # (n_clusters, 3) float64, voxel-index units
    centers_value: np.ndarray   # (n_clusters,) float64
    diagnostics: SlicDiagnostics = field(default_factory=SlicDiagnostics)

    @property
    def n_clusters(self) -> int:
        return len(self.centers_pos)

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)


def labels_to_grid(labels: "SupervoxelLabels") -> ScalarGrid:
    """Cluster ids as a scalar field, for debug dumps in the field format."""
    return ScalarGrid(
        spec=labels.spec, values=labels.labels.astype(np.float64), name="labels"
    )


def slic_distance(center, point, params: SlicParams) -> float:
    """Mixed spatial/value distance between a (pos, value) center and point."""
    (c_pos, c_val), (p_pos, p_val) = center, point
    dx = float(c_pos[0]) - float(p_pos[0])
    dy = float(c_pos[1]) - float(p_pos[1])
    dz = float(c_pos[2]) - float(p_pos[2])
    spatial = np.sqrt(dx * dx + dy * dy + dz * dz)
    scale = 1.0 if params.value_scale is None else params.value_scale
    value_term = abs(float(c_val) - float(p_val)) / scale
    return float(params.gamma * spatial + (1.0 - params.gamma) * value_term)


def _init_centers(dims, cluster_size):
    """Lattice of initial center voxels, ids enumerated x-fastest."""
    axes = []
    for d, a in zip(dims, cluster_size):
        k = max(1, d // a)
        axes.append(np.arange(k) * a + a // 2)
    gx, gy, gz = np.meshgrid(axes[0], axes[1], axes[2], indexing="ij")
    # x-fastest id order to match the flat voxel layout
    order = np.stack(
        [gx.transpose(2, 1, 0).ravel(), gy.transpose(2, 1, 0).ravel(), gz.transpose(2, 1, 0).ravel()],
        axis=1,
    )
    return order.astype(np.float64)


def _distance_f32(spatial, value_diff, gamma, scale):
    """Mixed distance rounded to float32 (assignment resolution)."""
    return (gamma * spatial + (1.0 - gamma) * (value_diff / scale)).astype(np.float32)


def _assign(field_flat, dims, centers_pos, centers_value, params, vox_coords):
    """One assignment sweep; returns (labels, n_fallback).

    Candidate distances are compared at float32 resolution so that the
    lowest-cluster-id tie rule also settles sub-resolution near-ties; the
    scatter-min then runs once on (distance bits, id) composite keys.
    """
    nx, ny, nz = dims
    n_vox = nx * ny * nz
    n_c = len(centers_pos)
    a, b, c = params.cluster_size
    gamma = params.gamma
    scale = params.value_scale if params.value_scale is not None else 1.0

    kx, ky, kz = np.meshgrid(
        np.arange(-a, a + 1), np.arange(-b, b + 1), np.arange(-c, c + 1),
        indexing="ij",
    )
    kx, ky, kz = kx.ravel(), ky.ravel(), kz.ravel()        # (W,)

    base = np.floor(centers_pos).astype(np.int64)          # (n_c, 3)
    coordx = base[:, 0:1] + kx[None, :]                    # (n_c, W)
    coordy = base[:, 1:2] + ky[None, :]
    coordz = base[:, 2:3] + kz[None, :]
    cx = coordx - centers_pos[:, 0:1]
    cy = coordy - centers_pos[:, 1:2]
    cz = coordz - centers_pos[:, 2:3]
    # window = the 2a x 2b x 2c box centered on the float center position
    valid = (
        (np.abs(cx) <= a) & (np.abs(cy) <= b) & (np.abs(cz) <= c)
        & (coordx >= 0) & (coordx < nx)
        & (coordy >= 0) & (coordy < ny)
        & (coordz >= 0) & (coordz < nz)
    )

    idx = np.flatnonzero(valid.ravel())
    rows = idx // len(kx)
    fv = (coordx.ravel()[idx] + nx * (coordy.ravel()[idx] + ny * coordz.ravel()[idx]))
    dxv, dyv, dzv = cx.ravel()[idx], cy.ravel()[idx], cz.ravel()[idx]
    spatial = np.sqrt(dxv * dxv + dyv * dyv + dzv * dzv)
    dist = _distance_f32(spatial, np.abs(centers_value[rows] - field_flat[fv]), gamma, scale)

    # float32 bits are order-preserving for non-negative values, so
    # (distance bits << 24) | cluster id sorts by distance then id
    keys = (dist.view(np.uint32).astype(np.int64) << 24) | rows
    best = np.full(n_vox, np.int64(1) << 62, dtype=np.int64)
    np.minimum.at(best, fv, keys)

    labels = best & ((1 << 24) - 1)
    missed = best == np.int64(1) << 62
    labels[missed] = n_c
    n_fallback = int(missed.sum())
    if n_fallback:
        # windowed search missed these voxels: nearest center globally
        p = vox_coords[missed]                              # (m, 3)
        dx = centers_pos[None, :, 0] - p[:, 0:1]
        dy = centers_pos[None, :, 1] - p[:, 1:2]
        dz = centers_pos[None, :, 2] - p[:, 2:3]
        sp = np.sqrt(dx * dx + dy * dy + dz * dz)
        vd = np.abs(centers_value[None, :] - field_flat[missed, None])
        labels[missed] = np.argmin(_distance_f32(sp, vd, gamma, scale), axis=1)
    return labels, n_fallback


def _cluster_components(labels, dims, cluster_ids):
    """6-connected components per cluster: {cluster: [sorted flat arrays]}."""
    nx, ny, nz = dims
    lab3 = labels.reshape((nz, ny, nx)).transpose(2, 1, 0)
    out = {}
    for cid in cluster_ids:
        vox = np.flatnonzero(labels == cid)
        if len(vox) == 0:
            out[cid] = []
            continue
        ix = vox % nx
        iy = (vox // nx) % ny
        iz = vox // (nx * ny)
        x0, x1 = ix.min(), ix.max() + 1
        y0, y1 = iy.min(), iy.max() + 1
        z0, z1 = iz.min(), iz.max() + 1
        mask = lab3[x0:x1, y0:y1, z0:z1] == cid
        comp, n_comp = ndimage.label(mask, structure=FACE_STRUCTURE)
        pieces = []
        for k in range(1, n_comp + 1):
            lx, ly, lz = np.nonzero(comp == k)
            flat = (lx + x0) + nx * ((ly + y0) + ny * (lz + z0))
            pieces.append(np.sort(flat))
        out[cid] = pieces
    return out


def _neighbors_of(flat, dims):
    """Unique 6-neighbors of a voxel set, excluding the set itself."""
    nx, ny, nz = dims
    ix = flat % nx
    iy = (flat // nx) % ny
    iz = flat // (nx * ny)
    neigh = []
    for d, i, n in ((1, ix, nx), (nx, iy, ny), (nx * ny, iz, nz)):
        neigh.append(flat[i > 0] - d)
        neigh.append(flat[i < n - 1] + d)
    neigh = np.unique(np.concatenate(neigh))
    return np.setdiff1d(neigh, flat, assume_unique=True)


def _enforce_connectivity(labels, dims, diagnostics):
    """Merge disconnected fragments into adjacent clusters until every
    cluster is a single 6-connected component.

    The largest component of each cluster is kept as its main body
    (ties: the component with the smallest flat index). Fragments only
    merge into a cluster's main body, which keeps each merge connected;
    fragments with no adjacent main body wait for a later pass.
    """
    n_c = int(labels.max()) + 1
    sizes = np.bincount(labels, minlength=n_c).astype(np.int64)
    while True:
        comps = _cluster_components(labels, dims, range(n_c))
        main_mask = np.zeros(len(labels), dtype=bool)
        fragments = []
        for cid in range(n_c):
            pieces = comps[cid]
            if not pieces:
                continue
            main = max(range(len(pieces)), key=lambda k: (len(pieces[k]), -pieces[k][0]))
            main_mask[pieces[main]] = True
            fragments.extend(p for k, p in enumerate(pieces) if k != main)
        if not fragments:
            break
        diagnostics.enforcement_passes += 1
        fragments.sort(key=lambda p: p[0])
        merged_any = False
        for frag in fragments:
            neigh = _neighbors_of(frag, dims)
            neigh = neigh[main_mask[neigh]]
            if len(neigh) == 0:
                continue
            cand = np.unique(labels[neigh])
            best = cand[np.lexsort((cand, -sizes[cand]))[0]]
            old = labels[frag[0]]
            sizes[old] -= len(frag)
            sizes[best] += len(frag)
            labels[frag] = best
            main_mask[frag] = True
            diagnostics.fragments_relabeled += 1
            merged_any = True
        if not merged_any:  # cannot happen: some fragment always borders a main body
            break
    return labels


def slic_partition(field: ScalarGrid, params: SlicParams) -> SupervoxelLabels:
    """Partition a scalar grid into spatially contiguous supervoxels."""
    dims = field.spec.dims
    if any(d < a for d, a in zip(dims, params.cluster_size)):
        raise ValueError(
            f"field dims {dims} smaller than cluster size {params.cluster_size}"
        )
    field_flat = np.asarray(field.values, dtype=np.float64)
    if params.value_scale is None:
        spread = float(field_flat.max() - field_flat.min())
        params = SlicParams(
            cluster_size=params.cluster_size,
            gamma=params.gamma,
            max_iters=params.max_iters,
            value_scale=spread if spread > 0 else 1.0,
        )
    diag = SlicDiagnostics(value_scale_used=params.value_scale)

    nx, ny, nz = dims
    n_vox = nx * ny * nz
    flat_all = np.arange(n_vox)
    vox_coords = np.stack(
        [flat_all % nx, (flat_all // nx) % ny, flat_all // (nx * ny)], axis=1
    ).astype(np.float64)

    centers_pos = _init_centers(dims, params.cluster_size)
    init_vox = centers_pos.astype(np.int64)
    centers_value = field_flat[
        init_vox[:, 0] + nx * (init_vox[:, 1] + ny * init_vox[:, 2])
    ].copy()
    n_c = len(centers_pos)

    labels = None
    for it in range(params.max_iters):
        new_labels, n_fallback = _assign(
            field_flat, dims, centers_pos, centers_value, params, vox_coords
        )
        diag.global_fallbacks += n_fallback
        diag.iterations = it + 1
        if labels is not None and np.array_equal(new_labels, labels):
            diag.converged = True
            labels = new_labels
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=n_c)
        occupied = counts > 0
        for axis in range(3):
            sums = np.bincount(labels, weights=vox_coords[:, axis], minlength=n_c)
            centers_pos[occupied, axis] = sums[occupied] / counts[occupied]
        vsums = np.bincount(labels, weights=field_flat, minlength=n_c)
        centers_value[occupied] = vsums[occupied] / counts[occupied]

    # drop clusters that won no voxels and make ids dense
    counts = np.bincount(labels, minlength=n_c)
    keep = np.flatnonzero(counts > 0)
    remap = np.full(n_c, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    labels = remap[labels]

    labels = _enforce_connectivity(labels, dims, diag)

    n_final = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=n_final)
    final_pos = np.zeros((n_final, 3), dtype=np.float64)
    for axis in range(3):
        final_pos[:, axis] = (
            np.bincount(labels, weights=vox_coords[:, axis], minlength=n_final) / counts
        )
    final_val = np.bincount(labels, weights=field_flat, minlength=n_final) / counts

    return SupervoxelLabels(
        spec=field.spec,
        labels=labels.astype(np.int32),
        centers_pos=final_pos,
        centers_value=final_val,
        diagnostics=diag,
    )
