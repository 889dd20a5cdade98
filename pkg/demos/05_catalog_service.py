"""Build the image catalog for a run and query it over HTTP.

Runs the whole pipeline into a run directory (the same thing the CLI
does), builds catalog.csv plus one projection image per bubble, then
starts the read-only API and issues a few requests against it.
"""

import json
import pathlib
import tempfile
import threading
import urllib.request

from bubblekit import synth
from bubblekit.catalog import QuerySpec, build_catalog, load_catalog, query
from bubblekit.pipeline import RunPaths, extract_run, summarize_run, with_desk_defaults
from bubblekit.server import serve

run_dir = pathlib.Path(tempfile.mkdtemp(prefix="bubblekit_demo_"))
print(f"run directory: {run_dir}")

scene = synth.scene_splitting_void()
paths = RunPaths(run_dir)
synth.save_scene(scene, paths.scene)
for t in range(scene.n_timesteps):
    synth.write_particles(synth.generate(scene, t, chunks=4), paths.particles)

summarize_run(run_dir, with_desk_defaults())
n = extract_run(run_dir)
rows = build_catalog(run_dir)
print(f"extracted {n} bubbles -> {len(rows)} catalog rows + images")

big = query(rows, QuerySpec(ranges={"volume": (0.004, 1.0)}))
print(f"bubbles with volume >= 0.004: {[(r.time_index, r.bubble_id) for r in big]}")

httpd = serve(run_dir, port=0)
port = httpd.server_address[1]
threading.Thread(target=httpd.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{port}"
print(f"serving on {base}")

with urllib.request.urlopen(f"{base}/api/meta") as resp:
    meta = json.loads(resp.read())
print(f"GET /api/meta -> grid {meta['grid']['dims']}, steps {meta['time_range']}")

with urllib.request.urlopen(f"{base}/api/bubbles?volume_min=0.004") as resp:
    print(f"GET /api/bubbles?volume_min=0.004 -> {len(json.loads(resp.read()))} rows")

req = urllib.request.Request(
    f"{base}/api/tracks", data=json.dumps({"t": 0, "id": big[0].bubble_id}).encode(),
    method="POST",
)
with urllib.request.urlopen(req) as resp:
    track = json.loads(resp.read())
print(f"POST /api/tracks -> {track['track_id']}: {len(track['steps'])} steps, "
      f"events {[e['kind'] for e in track['events']]}")

httpd.shutdown()
httpd.server_close()
print("done; explore the directory or restart with: "
      f"bubblekit serve --out {run_dir} --port 8080")
