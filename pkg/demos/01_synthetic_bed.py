"""Generate a synthetic fluidized bed and look at its raw particles.

The scene: a particle-filled bed occupying the lower 80% of the x extent,
ellipsoidal voids rising through it, an upward wake under each void, and
a particle-free freeboard on top. Everything is deterministic in
(scene, time step).
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bubblekit import synth

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

scene = synth.scene_five_voids(n_particles=150_000, n_timesteps=10)
print(f"scene: {scene.n_particles} particles/step, {len(scene.voids)} voids, "
      f"{scene.n_timesteps} steps, dt={scene.timestep_dt}")

t = 5
(chunk,) = synth.generate(scene, t)
pos = chunk.positions
print(f"step {t}: {len(chunk)} particles, "
      f"x range [{pos[:, 0].min():.3f}, {pos[:, 0].max():.3f}] "
      f"(bed surface at {scene.bed_top():.3f})")

for i, v in enumerate(scene.voids):
    c = v.center_at(t, scene.timestep_dt)
    inside = (((pos - c) / v.radii) ** 2).sum(axis=1) < 1.0
    print(f"  void {i}: center {np.round(c, 3)}, particles inside: {inside.sum()}")

rising = chunk.velocities[:, 0] > 0
print(f"wake particles (moving up): {rising.sum()}")

# thin bed: a scatter of the x-z plane shows the voids directly
fig, ax = plt.subplots(figsize=(6, 6))
sel = np.random.default_rng(0).choice(len(pos), 30_000, replace=False)
ax.scatter(pos[sel, 2], pos[sel, 0], s=0.3, c="steelblue", linewidths=0)
for v in scene.voids:
    c = v.center_at(t, scene.timestep_dt)
    ax.add_patch(plt.Circle((c[2], c[0]), v.radii[2], fill=False, color="crimson"))
ax.axhline(scene.bed_top(), color="grey", ls="--", lw=1, label="bed surface")
ax.set_xlabel("z")
ax.set_ylabel("x (rise axis)")
ax.set_title(f"particle positions at step {t}")
ax.legend(loc="upper right")
fig.tight_layout()
fig.savefig(OUT / "01_particles.png", dpi=120)
print(f"wrote {OUT / '01_particles.png'}")
