"""Turn raw particles into the two persisted summary fields.

Each chunk of particles is binned into a local spatial histogram; the
partials reduce into one global histogram regardless of how the particles
were split, and the density and rise-velocity fields fall out of it.
The two float32 fields are all that later stages ever read, which is
where the storage reduction comes from.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bubblekit import fields, synth

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

scene = synth.scene_rising_void(n_particles=300_000, n_timesteps=4)
spec = fields.GridSpec.from_bounds(scene.domain_bounds, (64, 8, 64))

chunks = synth.generate(scene, 2, chunks=8)
partials = [fields.bin_particles(c, spec) for c in chunks]
combined = fields.reduce_partials(partials)

serial = fields.bin_particles(synth.generate(scene, 2)[0], spec)
print("chunked reduction equals serial binning:",
      np.array_equal(combined.counts, serial.counts)
      and np.array_equal(combined.vx_sums, serial.vx_sums))

density = fields.finalize_density(combined)
pvf = fields.finalize_pvf(combined)
print(f"density: total {density.values.sum():.0f} particles, "
      f"max {density.values.max():.0f}/bin")
print(f"pvf: range [{pvf.values.min():.3f}, {pvf.values.max():.3f}] "
      f"(wake speed {scene.voids[0].wake_speed})")

raw_bytes = scene.n_particles * 24
summary_bytes = 2 * spec.n_voxels * 4
print(f"storage: raw {raw_bytes/1e6:.1f} MB/step -> summaries "
      f"{summary_bytes/1e3:.0f} kB/step ({100*summary_bytes/raw_bytes:.1f}%)")

fig, axes = plt.subplots(1, 2, figsize=(11, 5))
for ax, grid, label in ((axes[0], density, "density"), (axes[1], pvf, "rise velocity")):
    img = grid.as_3d().max(axis=1)  # project along the thin y axis
    im = ax.imshow(img.T, origin="lower", aspect="auto", cmap="viridis")
    ax.set_title(label)
    ax.set_xlabel("x (rise axis)")
    ax.set_ylabel("z")
    fig.colorbar(im, ax=ax, shrink=0.8)
fig.tight_layout()
fig.savefig(OUT / "02_fields.png", dpi=120)
print(f"wrote {OUT / '02_fields.png'}")
