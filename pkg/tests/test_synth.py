import numpy as np
import pytest

from bubblekit import synth
from bubblekit.synth import (
    BED_FRACTION,
    InvalidSceneError,
    ParticleChunk,
    ParticleFormatError,
    SceneSpec,
    VoidSpec,
    chunk,
    generate,
    read_particles,
    write_particles,
)

BOUNDS = ((0.0, 2.0), (0.0, 0.25), (0.0, 2.0))


def simple_scene(voids=(), n=1000, seed=3):
    return SceneSpec(
        domain_bounds=BOUNDS,
        n_particles=n,
        voids=list(voids),
        background_velocity=(-0.0625, 0.0, 0.0),
        timestep_dt=0.05,
        n_timesteps=4,
        rng_seed=seed,
    )


def test_zero_voids_all_particles_present():
    chunks = generate(simple_scene(), 0)
    assert sum(len(c) for c in chunks) == 1000


def test_spherical_void_is_empty():
    void = VoidSpec(
        center_at_t0=(1.0, 0.125, 1.0),
        radii=(0.1, 0.1, 0.1),
        rise_velocity=0.0,
        birth_t=0,
        death_t=3,
        wake_speed=0.5,
    )
    scene = simple_scene(voids=[void], n=20000)
    for t in range(scene.n_timesteps):
        (c,) = generate(scene, t)
        d = np.linalg.norm(c.positions.astype(np.float64) - [1.0, 0.125, 1.0], axis=1)
        assert not (d < 0.1).any()


def test_generate_is_deterministic():
    scene = simple_scene(n=5000)
    a = generate(scene, 2)
    b = generate(scene, 2)
    assert len(a) == len(b) == 1
    assert a[0].positions.tobytes() == b[0].positions.tobytes()
    assert a[0].velocities.tobytes() == b[0].velocities.tobytes()


def test_generate_rejects_bad_time_step():
    with pytest.raises(InvalidSceneError):
        generate(simple_scene(), 99)


def test_degenerate_domain_rejected():
    scene = simple_scene()
    scene.domain_bounds = ((0.0, 0.0), (0.0, 0.25), (0.0, 2.0))
    with pytest.raises(InvalidSceneError):
        generate(scene, 0)


def test_particles_stay_in_bed_region():
    (c,) = generate(simple_scene(n=30000), 0)
    bed_top = BED_FRACTION * 2.0
    assert c.positions[:, 0].max() < bed_top
    assert c.positions.min() >= 0.0


def test_chunk_single_and_empty():
    p = ParticleChunk(rank=0, time_index=0,
                      positions=np.random.rand(10, 3).astype(np.float32) * [1.6, 0.25, 2.0],
                      velocities=np.zeros((10, 3), np.float32))
    out = chunk(p, 1, BOUNDS)
    assert len(out) == 1 and len(out[0]) == 10

    empty = ParticleChunk(rank=0, time_index=0,
                          positions=np.zeros((0, 3), np.float32),
                          velocities=np.zeros((0, 3), np.float32))
    out = chunk(empty, 4, BOUNDS)
    assert len(out) == 4 and all(len(c) == 0 for c in out)


def test_chunk_slab_split_hand_partition():
    # 8 particles at distinct x in [0, 1); k=2 over a [0, 1) x-domain
    # splits slabs at 0.5
    xs = np.array([0.05, 0.15, 0.3, 0.45, 0.55, 0.6, 0.8, 0.95], np.float32)
    pos = np.zeros((8, 3), np.float32)
    pos[:, 0] = xs
    p = ParticleChunk(rank=0, time_index=0, positions=pos,
                      velocities=np.zeros((8, 3), np.float32))
    lo, hi = chunk(p, 2, ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)))
    assert sorted(lo.positions[:, 0].tolist()) == [x for x in xs if x < 0.5]
    assert sorted(hi.positions[:, 0].tolist()) == [x for x in xs if x >= 0.5]


@pytest.mark.parametrize("k", range(1, 17))
def test_chunk_partition_is_permutation(k):
    (p,) = generate(simple_scene(n=3000), 1)
    parts = chunk(p, k, BOUNDS)
    cat = np.concatenate([c.positions for c in parts])
    assert cat.shape == p.positions.shape
    order_a = np.lexsort(p.positions.T)
    order_b = np.lexsort(cat.T)
    np.testing.assert_array_equal(p.positions[order_a], cat[order_b])


def test_particle_file_roundtrip(tmp_path):
    scene = simple_scene(n=2000)
    chunks = generate(scene, 0, chunks=3)
    write_particles(chunks, tmp_path)
    back = read_particles(tmp_path)
    assert len(back) == 3
    for a, b in zip(chunks, back):
        assert a.rank == b.rank and a.time_index == b.time_index
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.velocities, b.velocities)


def test_empty_chunk_file_roundtrip(tmp_path):
    empty = ParticleChunk(rank=0, time_index=7,
                          positions=np.zeros((0, 3), np.float32),
                          velocities=np.zeros((0, 3), np.float32))
    write_particles([empty], tmp_path)
    (back,) = read_particles(tmp_path)
    assert back.time_index == 7 and len(back) == 0


def test_bad_magic_raises_with_offset(tmp_path):
    bad = tmp_path / "particles_t000000_r0000.bblp"
    bad.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ParticleFormatError) as err:
        read_particles(bad)
    assert err.value.offset == 0


def test_truncated_file_raises(tmp_path):
    scene = simple_scene(n=100)
    (path,) = write_particles(generate(scene, 0), tmp_path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(ParticleFormatError):
        read_particles(path)


def test_void_emptiness_invariant_across_steps():
    scene = synth.scene_rising_void(n_particles=30000, n_timesteps=6)
    for t in range(scene.n_timesteps):
        (c,) = generate(scene, t)
        for v in scene.voids:
            if not v.active(t):
                continue
            rel = (c.positions.astype(np.float64) - v.center_at(t, scene.timestep_dt)) / v.radii
            assert not ((rel**2).sum(axis=1) < 1.0).any()


def test_wake_region_moves_up_flanks_move_down():
    scene = synth.scene_rising_void(n_particles=200_000, n_timesteps=3)
    (c,) = generate(scene, 0)
    v = scene.voids[0]
    center = v.center_at(0, scene.timestep_dt)
    pos = c.positions.astype(np.float64)
    lateral = (pos[:, 1] - center[1]) ** 2 + (pos[:, 2] - center[2]) ** 2
    wake = (lateral < max(v.radii[1], v.radii[2]) ** 2) & \
           (pos[:, 0] < center[0] - v.radii[0]) & \
           (pos[:, 0] >= center[0] - 3 * v.radii[0])
    assert wake.any()
    assert (c.velocities[wake, 0] == np.float32(v.wake_speed)).all()
    rel = (pos - center) / v.radii
    flank = ((rel / synth.FLANK_SCALE) ** 2).sum(1) < 1.0
    flank &= (rel**2).sum(1) >= 1.0
    flank &= np.abs(pos[:, 0] - center[0]) < v.radii[0]
    assert flank.any()
    assert (c.velocities[flank, 0] < 0).all()


def test_scene_json_roundtrip(tmp_path):
    scene = synth.scene_five_voids(n_particles=1000, n_timesteps=3)
    synth.save_scene(scene, tmp_path / "scene.json")
    back = synth.load_scene(tmp_path / "scene.json")
    assert back == scene
