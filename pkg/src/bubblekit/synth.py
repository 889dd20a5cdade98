"""Deterministic synthetic fluidized-bed particle scenes.

Stands in for simulation output: particles fill the bed uniformly except
inside rising ellipsoidal voids, with an upward wake below each void and
a downward flow along its flanks. Every scene carries its ground-truth
void trajectories so downstream detection and tracking can be scored
against a known answer.

Conventions: x is the rise axis; the bed occupies the lower
``BED_FRACTION`` of the x-extent and the region above it is particle-free
freeboard. All generation is a pure function of ``(scene, t)``.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BED_FRACTION = 0.8
WAKE_LENGTH_FACTOR = 2.0   # wake cylinder extends this many x-semi-axes below the void
FLANK_SCALE = 1.6          # flank shell = this multiple of the void ellipsoid
FLANK_SPEED_FACTOR = 0.5   # downward flank speed as a fraction of wake_speed

PARTICLE_MAGIC = b"BBLP"
PARTICLE_VERSION = 1
PARTICLE_FILE_RE = re.compile(r"particles_t(\d{6})_r(\d{4})\.bblp$")


class InvalidSceneError(ValueError):
    """Scene specification violates an invariant (degenerate bounds etc.)."""


class ParticleFormatError(ValueError):
    """Particle file is malformed; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class VoidSpec:
    """One ellipsoidal void rising through the bed along x.

    ``center_at_t0`` is the center position extrapolated to step 0; the
    void is only active (and carved out of the particle field) for steps
    in ``[birth_t, death_t]``.
    """

    center_at_t0: tuple[float, float, float]
    radii: tuple[float, float, float]
    rise_velocity: float
    birth_t: int
    death_t: int
    wake_speed: float

    def validate(self) -> None:
        if not all(r > 0 for r in self.radii):
            raise InvalidSceneError(f"void radii must be positive, got {self.radii}")
        if self.birth_t > self.death_t:
            raise InvalidSceneError(
                f"void birth_t {self.birth_t} > death_t {self.death_t}"
            )

    def active(self, t: int) -> bool:
        return self.birth_t <= t <= self.death_t

    def center_at(self, t: int, dt: float) -> np.ndarray:
        c = np.asarray(self.center_at_t0, dtype=np.float64).copy()
        c[0] += self.rise_velocity * dt * t
        return c


@dataclass
class SceneSpec:
    """Full description of a synthetic bed run."""

    domain_bounds: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    n_particles: int
    voids: list[VoidSpec] = field(default_factory=list)
    background_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    timestep_dt: float = 0.05
    n_timesteps: int = 1
    rng_seed: int = 0

    def validate(self) -> None:
        for axis, (lo, hi) in enumerate(self.domain_bounds):
            if not hi > lo:
                raise InvalidSceneError(
                    f"domain_bounds degenerate on axis {axis}: [{lo}, {hi}]"
                )
        if self.n_particles < 0:
            raise InvalidSceneError(f"n_particles must be >= 0, got {self.n_particles}")
        if not self.timestep_dt > 0:
            raise InvalidSceneError(f"timestep_dt must be > 0, got {self.timestep_dt}")
        for v in self.voids:
            v.validate()

    @property
    def bounds_min(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.domain_bounds], dtype=np.float64)

    @property
    def bounds_max(self) -> np.ndarray:
        return np.array([hi for _, hi in self.domain_bounds], dtype=np.float64)

    def bed_top(self) -> float:
        """World x-coordinate of the bed surface (freeboard starts above)."""
        (xlo, xhi) = self.domain_bounds[0]
        return xlo + BED_FRACTION * (xhi - xlo)

    def to_json(self) -> dict:
        return {
            "domain_bounds": [list(b) for b in self.domain_bounds],
            "n_particles": self.n_particles,
            "voids": [
                {
                    "center_at_t0": list(v.center_at_t0),
                    "radii": list(v.radii),
                    "rise_velocity": v.rise_velocity,
                    "birth_t": v.birth_t,
                    "death_t": v.death_t,
                    "wake_speed": v.wake_speed,
                }
                for v in self.voids
            ],
            "background_velocity": list(self.background_velocity),
            "timestep_dt": self.timestep_dt,
            "n_timesteps": self.n_timesteps,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SceneSpec":
        return cls(
            domain_bounds=tuple(tuple(b) for b in obj["domain_bounds"]),
            n_particles=int(obj["n_particles"]),
            voids=[
                VoidSpec(
                    center_at_t0=tuple(v["center_at_t0"]),
                    radii=tuple(v["radii"]),
                    rise_velocity=float(v["rise_velocity"]),
                    birth_t=int(v["birth_t"]),
                    death_t=int(v["death_t"]),
                    wake_speed=float(v["wake_speed"]),
                )
                for v in obj["voids"]
            ],
            background_velocity=tuple(obj["background_velocity"]),
            timestep_dt=float(obj["timestep_dt"]),
            n_timesteps=int(obj["n_timesteps"]),
            rng_seed=int(obj["rng_seed"]),
        )


def save_scene(scene: SceneSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene.to_json(), indent=2))


def load_scene(path: str | Path) -> SceneSpec:
    return SceneSpec.from_json(json.loads(Path(path).read_text()))


@dataclass
class ParticleChunk:
    """One rank's slice of a time step's particles."""

    rank: int
    time_index: int
    positions: np.ndarray   # (n, 3) float32
    velocities: np.ndarray  # (n, 3) float32

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float32).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=np.float32).reshape(-1, 3)
        if len(self.positions) != len(self.velocities):
            raise ValueError(
                f"positions ({len(self.positions)}) and velocities "
                f"({len(self.velocities)}) must have equal length"
            )

    def __len__(self) -> int:
        return len(self.positions)


def _f32_interval(lo: float, hi: float) -> tuple[np.float32, np.float32]:
    """Largest closed float32 interval contained in [lo, hi]."""
    f_lo = np.float32(lo)
    if float(f_lo) < lo:
        f_lo = np.nextafter(f_lo, np.float32(np.inf))
    f_hi = np.float32(hi)
    if float(f_hi) > hi:
        f_hi = np.nextafter(f_hi, np.float32(-np.inf))
    return f_lo, f_hi


def _inside_any_void(positions: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Boolean mask of points strictly inside any of the given ellipsoids."""
    if len(centers) == 0:
        return np.zeros(len(positions), dtype=bool)
    # (n, nv) normalized squared distance per void
    d = (positions[:, None, :] - centers[None, :, :]) / radii[None, :, :]
    return (np.sum(d * d, axis=2) < 1.0).any(axis=1)


def generate(scene: SceneSpec, t: int, chunks: int = 1) -> list[ParticleChunk]:
    """Generate all particles of step ``t``, split into ``chunks`` x-slabs.

    Particles are uniform in the bed region (lower ``BED_FRACTION`` of the
    x-extent), rejection-sampled against every active void so the particle
    count is exact. The bed is temporally coherent like real granular
    data: one base arrangement is drawn per scene, and each step only
    resamples the particles displaced by that step's void positions, so
    consecutive density fields differ only where voids moved. Velocities
    are the scene background everywhere except the wake cylinder below
    each void (upward at ``wake_speed``) and the flank shell around it
    (downward at ``FLANK_SPEED_FACTOR * wake_speed``). Deterministic: the
    same ``(scene, t)`` yields byte-identical chunks for any chunk count.
    """
    scene.validate()
    if t >= scene.n_timesteps:
        raise InvalidSceneError(
            f"time step {t} out of range (scene has {scene.n_timesteps} steps)"
        )

    lo = scene.bounds_min
    hi = scene.bounds_max.copy()
    hi[0] = scene.bed_top()

    dt = scene.timestep_dt
    active = [v for v in scene.voids if v.active(t)]
    centers = np.array([v.center_at(t, dt) for v in active], dtype=np.float64).reshape(-1, 3)
    radii = np.array([v.radii for v in active], dtype=np.float64).reshape(-1, 3)

    n = scene.n_particles
    rng_base = np.random.default_rng([scene.rng_seed, 0x0BED])
    positions = rng_base.uniform(lo, hi, size=(n, 3))

    rng_t = np.random.default_rng([scene.rng_seed, t])
    pending = np.flatnonzero(_inside_any_void(positions, centers, radii))
    while len(pending):
        draw = rng_t.uniform(lo, hi, size=(len(pending), 3))
        bad = _inside_any_void(draw, centers, radii)
        positions[pending] = draw
        pending = pending[bad]

    velocities = np.broadcast_to(
        np.asarray(scene.background_velocity, dtype=np.float64), (n, 3)
    ).copy()
    for v, c, r in zip(active, centers, radii):
        rel = (positions - c) / r
        in_flank = (
            (np.sum((rel / FLANK_SCALE) ** 2, axis=1) < 1.0)
            & (np.sum(rel * rel, axis=1) >= 1.0)
            & (np.abs(positions[:, 0] - c[0]) < r[0])
        )
        velocities[in_flank, 0] = -FLANK_SPEED_FACTOR * v.wake_speed
        lateral = (positions[:, 1] - c[1]) ** 2 + (positions[:, 2] - c[2]) ** 2
        in_wake = (
            (lateral < max(r[1], r[2]) ** 2)
            & (positions[:, 0] < c[0] - r[0])
            & (positions[:, 0] >= c[0] - (1.0 + WAKE_LENGTH_FACTOR) * r[0])
        )
        velocities[in_wake, 0] = v.wake_speed

    pos32 = positions.astype(np.float32)
    # float32 rounding may push a sample just past the domain walls; clip back in
    for axis in range(3):
        a_lo, a_hi = _f32_interval(lo[axis], scene.bounds_max[axis])
        np.clip(pos32[:, axis], a_lo, a_hi, out=pos32[:, axis])

    all_particles = ParticleChunk(
        rank=0, time_index=t, positions=pos32, velocities=velocities.astype(np.float32)
    )
    if chunks == 1:
        return [all_particles]
    return chunk(all_particles, chunks, scene.domain_bounds)


def chunk(
    particles: ParticleChunk,
    k: int,
    bounds: tuple[tuple[float, float], ...],
) -> list[ParticleChunk]:
    """Split particles into ``k`` disjoint x-slabs covering the domain.

    Slab ``i`` covers ``[xlo + i*w, xlo + (i+1)*w)`` with ``w`` the domain
    x-extent over ``k``; the last slab is closed above. Within each slab
    the original particle order is preserved, so concatenating the chunks
    in rank order is a permutation of the input. Empty slabs are allowed.
    """
    if k < 1:
        raise ValueError(f"chunk count must be >= 1, got {k}")
    xlo, xhi = bounds[0]
    width = (xhi - xlo) / k
    x = particles.positions[:, 0].astype(np.float64)
    slab = np.floor((x - xlo) / width).astype(np.int64)
    np.clip(slab, 0, k - 1, out=slab)
    out = []
    for r in range(k):
        sel = slab == r
        out.append(
            ParticleChunk(
                rank=r,
                time_index=particles.time_index,
                positions=particles.positions[sel],
                velocities=particles.velocities[sel],
            )
        )
    return out


def particle_filename(time_index: int, rank: int) -> str:
    return f"particles_t{time_index:06d}_r{rank:04d}.bblp"


def write_particles(chunks: list[ParticleChunk], directory: str | Path) -> list[Path]:
    """Write one ``.bblp`` file per chunk into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in chunks:
        path = directory / particle_filename(c.time_index, c.rank)
        data = np.empty((len(c), 6), dtype="<f4")
        data[:, :3] = c.positions
        data[:, 3:] = c.velocities
        with open(path, "wb") as f:
            f.write(PARTICLE_MAGIC)
            f.write(struct.pack("<IIQ", PARTICLE_VERSION, c.time_index, len(c)))
            f.write(data.tobytes())
        paths.append(path)
    return paths


def _read_particle_file(path: Path) -> ParticleChunk:
    raw = path.read_bytes()
    if raw[:4] != PARTICLE_MAGIC:
        raise ParticleFormatError(f"{path.name}: bad magic {raw[:4]!r}", 0)
    if len(raw) < 20:
        raise ParticleFormatError(f"{path.name}: truncated header", len(raw))
    version, time_index, count = struct.unpack_from("<IIQ", raw, 4)
    if version != PARTICLE_VERSION:
        raise ParticleFormatError(f"{path.name}: unsupported version {version}", 4)
    need = 20 + count * 24
    if len(raw) < need:
        raise ParticleFormatError(
            f"{path.name}: truncated payload ({count} particles declared)", len(raw)
        )
    data = np.frombuffer(raw, dtype="<f4", count=count * 6, offset=20).reshape(-1, 6)
    m = PARTICLE_FILE_RE.search(path.name)
    rank = int(m.group(2)) if m else 0
    return ParticleChunk(
        rank=rank,
        time_index=time_index,
        positions=data[:, :3].copy(),
        velocities=data[:, 3:].copy(),
    )


def read_particles(path: str | Path, time_index: int | None = None) -> list[ParticleChunk]:
    """Read one ``.bblp`` file, or every chunk file in a directory.

    When reading a directory, results are sorted by (time step, rank); pass
    ``time_index`` to restrict to one step.
    """
    path = Path(path)
    if path.is_file():
        return [_read_particle_file(path)]
    files = sorted(p for p in path.iterdir() if PARTICLE_FILE_RE.search(p.name))
    chunks = [_read_particle_file(p) for p in files]
    if time_index is not None:
        chunks = [c for c in chunks if c.time_index == time_index]
    return sorted(chunks, key=lambda c: (c.time_index, c.rank))


# ---------------------------------------------------------------------------
# Scene factories. Coordinates below are in voxel units of the default
# 64 x 8 x 64 grid over a (2.0, 0.25, 2.0) domain (voxel edge 0.03125) and
# converted to world units; the bed surface sits at x = 51.2 voxels.

_VOX = 0.03125


def _vox(*v: float) -> tuple[float, ...]:
    return tuple(x * _VOX for x in v)


_DEFAULT_BOUNDS = ((0.0, 2.0), (0.0, 0.25), (0.0, 2.0))


def scene_five_voids(
    n_particles: int = 400_000, n_timesteps: int = 50, seed: int = 7
) -> SceneSpec:
    """Five well-separated voids rising slowly; the detection benchmark.

    Semi-axes are 3 to 5.5 voxels and the particle count keeps the mean
    bed occupancy near ten particles per bin, which the statistical
    classifier separates cleanly from the empty void interiors.
    """
    dt = 0.05
    rise = 0.2 * _VOX / dt  # 0.2 voxels per step
    voids = []
    for x0, z0, (ry, rz) in [
        (10.0, 12.0, (3.0, 5.0)),
        (16.0, 40.0, (3.0, 4.5)),
        (22.0, 54.0, (3.2, 5.5)),
        (28.0, 22.0, (3.0, 4.0)),
        (34.0, 46.0, (3.2, 5.0)),
    ]:
        voids.append(
            VoidSpec(
                center_at_t0=_vox(x0, 4.0, z0),
                radii=_vox(5.0, ry, rz),
                rise_velocity=rise,
                birth_t=0,
                death_t=n_timesteps - 1,
                wake_speed=0.5,
            )
        )
    return SceneSpec(
        domain_bounds=_DEFAULT_BOUNDS,
        n_particles=n_particles,
        voids=voids,
        background_velocity=(-0.0625, 0.0, 0.0),
        timestep_dt=dt,
        n_timesteps=n_timesteps,
        rng_seed=seed,
    )


def scene_rising_void(
    n_particles: int = 400_000, n_timesteps: int = 40, seed: int = 11
) -> SceneSpec:
    """A single void rising 0.8 voxels per step for the full run."""
    dt = 0.05
    return SceneSpec(
        domain_bounds=_DEFAULT_BOUNDS,
        n_particles=n_particles,
        voids=[
            VoidSpec(
                center_at_t0=_vox(7.0, 4.0, 32.0),
                radii=_vox(5.0, 3.0, 5.0),
                rise_velocity=0.8 * _VOX / dt,
                birth_t=0,
                death_t=n_timesteps - 1,
                wake_speed=0.5,
            )
        ],
        background_velocity=(-0.0625, 0.0, 0.0),
        timestep_dt=dt,
        n_timesteps=n_timesteps,
        rng_seed=seed,
    )


def scene_steady_void(
    n_particles: int = 400_000, n_timesteps: int = 16, seed: int = 23
) -> SceneSpec:
    """A constant-volume void drifting slowly; no events should fire on it."""
    dt = 0.05
    return SceneSpec(
        domain_bounds=_DEFAULT_BOUNDS,
        n_particles=n_particles,
        voids=[
            VoidSpec(
                center_at_t0=_vox(12.0, 4.0, 32.0),
                radii=_vox(6.0, 3.0, 6.0),
                rise_velocity=0.25 * _VOX / dt,
                birth_t=0,
                death_t=n_timesteps - 1,
                wake_speed=0.5,
            )
        ],
        background_velocity=(-0.0625, 0.0, 0.0),
        timestep_dt=dt,
        n_timesteps=n_timesteps,
        rng_seed=seed,
    )


def scene_merging_voids(
    n_particles: int = 400_000, n_timesteps: int = 6, seed: int = 13
) -> SceneSpec:
    """Two voids approaching along x that interpenetrate at step 4.

    Center separation starts at 36 voxels and shrinks 8 per step: at
    step 3 the surfaces are still 2 voxels apart, at step 4 the
    ellipsoids overlap 6 voxels deep, so the contact step is unambiguous.
    """
    dt = 0.05
    v = 4.0 * _VOX / dt  # each void moves 4 voxels/step toward the other
    return SceneSpec(
        domain_bounds=_DEFAULT_BOUNDS,
        n_particles=n_particles,
        voids=[
            VoidSpec(
                center_at_t0=_vox(8.0, 4.0, 32.0),
                radii=_vox(5.0, 3.0, 5.0),
                rise_velocity=v,
                birth_t=0,
                death_t=n_timesteps - 1,
                wake_speed=0.5,
            ),
            VoidSpec(
                center_at_t0=_vox(44.0, 4.0, 32.0),
                radii=_vox(5.0, 3.0, 5.0),
                rise_velocity=-v,
                birth_t=0,
                death_t=n_timesteps - 1,
                wake_speed=0.5,
            ),
        ],
        background_velocity=(-0.0625, 0.0, 0.0),
        timestep_dt=dt,
        n_timesteps=n_timesteps,
        rng_seed=seed,
    )


MERGE_CONTACT_STEP = 4


def scene_splitting_void(
    n_particles: int = 400_000, n_timesteps: int = 12, seed: int = 17
) -> SceneSpec:
    """One wide void replaced at step 6 by two z-separated children."""
    dt = 0.05
    k = 6
    parent = VoidSpec(
        center_at_t0=_vox(20.0, 4.0, 32.0),
        radii=_vox(4.0, 3.0, 7.0),
        rise_velocity=0.0,
        birth_t=0,
        death_t=k - 1,
        wake_speed=0.5,
    )
    children = [
        VoidSpec(
            center_at_t0=_vox(20.0, 4.0, 27.0),
            radii=_vox(4.0, 3.0, 3.5),
            rise_velocity=0.0,
            birth_t=k,
            death_t=n_timesteps - 1,
            wake_speed=0.5,
        ),
        VoidSpec(
            center_at_t0=_vox(20.0, 4.0, 37.0),
            radii=_vox(4.0, 3.0, 3.5),
            rise_velocity=0.0,
            birth_t=k,
            death_t=n_timesteps - 1,
            wake_speed=0.5,
        ),
    ]
    return SceneSpec(
        domain_bounds=_DEFAULT_BOUNDS,
        n_particles=n_particles,
        voids=[parent] + children,
        background_velocity=(-0.0625, 0.0, 0.0),
        timestep_dt=dt,
        n_timesteps=n_timesteps,
        rng_seed=seed,
    )


SPLIT_STEP = 6


def scene_growing_void(
    n_particles: int = 800_000, n_timesteps: int = 24, seed: int = 19
) -> SceneSpec:
    """A void that grows and accelerates as it rises.

    Built as a chain of one-step voids along an accelerating trajectory
    with growing radii; consecutive instances overlap, so extraction plus
    overlap tracking sees a single bubble whose volume and rise velocity
    increase together.
    """
    dt = 0.05
    voids = []
    x = 7.0
    for t in range(n_timesteps):
        step = 0.4 + 2.0 * t / (n_timesteps - 1)  # voxels per step, 0.4 -> 2.4
        r = 3.6 + 2.2 * t / (n_timesteps - 1)     # semi-axes grow 3.6 -> 5.8
        voids.append(
            VoidSpec(
                center_at_t0=_vox(x, 4.0, 32.0),
                radii=_vox(r, min(3.2, r), r),
                rise_velocity=0.0,
                birth_t=t,
                death_t=t,
                wake_speed=0.5,
            )
        )
        x += step
    return SceneSpec(
        domain_bounds=_DEFAULT_BOUNDS,
        n_particles=n_particles,
        voids=voids,
        background_velocity=(-0.0625, 0.0, 0.0),
        timestep_dt=dt,
        n_timesteps=n_timesteps,
        rng_seed=seed,
    )


SCENE_PRESETS = {
    "default": scene_five_voids,
    "rising": scene_rising_void,
    "steady": scene_steady_void,
    "merge": scene_merging_voids,
    "split": scene_splitting_void,
    "growing": scene_growing_void,
}
