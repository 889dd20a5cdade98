"""Read-only HTTP API over a built catalog directory.

Endpoints (JSON unless noted):

    GET  /api/meta                          grid spec, parameters, time range
    GET  /api/bubbles?t0=&t1=&volume_min=...&freeboard=false
    GET  /api/bubbles/{t}/{id}              one row plus voxel bbox
    POST /api/tracks  {"t": T, "id": B}     compute (or reuse) a track
    GET  /api/tracks/{track_id}
    GET  /api/tracks_all/{t}                track ids for collective tracking
    GET  /api/fields/{t}/{name}/projection  2D value array (density|pvf|bsf)
    GET  /images/...                        static PNGs
    GET  /                                  explorer app, when frontend/ exists

Track computation is serialized and cached as ``tracks/track_*.json``;
everything else serves static data, so concurrent reads are safe.
"""

from __future__ import annotations

import json
import re
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .bubbles import load_bubbles
from .catalog import (
    NUMERIC_COLUMNS,
    QuerySpec,
    attribute_ranges,
    load_catalog,
    query,
    row_to_json,
)
from .fields import read_field
from .pipeline import MissingInputError, RunPaths, load_meta
from .tracking import save_track, track, track_from_json, track_key, track_to_json

# query params accepted as {name}_min / {name}_max
_PARAM_COLUMNS = {
    "volume": "volume",
    "aspect": "aspect_ratio",
    "aspect_ratio": "aspect_ratio",
    "x_center": "x_center",
    "y_center": "y_center",
    "z_center": "z_center",
    "similarity": "mean_similarity",
    "mean_similarity": "mean_similarity",
    "bubble_id": "bubble_id",
    "time_index": "time_index",
}


class _BadRequest(ValueError):
    pass


def _query_from_params(params: dict[str, list[str]]) -> QuerySpec:
    ranges: dict[str, tuple[float, float]] = {}
    lo, hi = {}, {}
    for key, values in params.items():
        if key in ("t0", "t1", "freeboard"):
            continue
        m = re.fullmatch(r"(.+)_(min|max)", key)
        if not m or m.group(1) not in _PARAM_COLUMNS:
            raise _BadRequest(f"unknown query parameter {key!r}")
        col = _PARAM_COLUMNS[m.group(1)]
        try:
            v = float(values[-1])
        except ValueError:
            raise _BadRequest(f"parameter {key!r} is not a number: {values[-1]!r}")
        (lo if m.group(2) == "min" else hi)[col] = v
    for col in set(lo) | set(hi):
        ranges[col] = (lo.get(col, float("-inf")), hi.get(col, float("inf")))

    def _int(key):
        if key not in params:
            return None
        try:
            return int(params[key][-1])
        except ValueError:
            raise _BadRequest(f"parameter {key!r} is not an integer")

    include_freeboard = params.get("freeboard", ["false"])[-1].lower() in ("1", "true", "yes")
    try:
        return QuerySpec(
            ranges=ranges, t0=_int("t0"), t1=_int("t1"), include_freeboard=include_freeboard
        )
    except ValueError as e:
        raise _BadRequest(str(e))


class CatalogState:
    """Lazily loaded run-directory state shared across requests."""

    def __init__(self, run_dir: str | Path):
        self.paths = RunPaths(run_dir)
        self._lock = threading.Lock()
        self._rows = None
        self._meta = None
        self._store = None

    @property
    def meta(self) -> dict:
        if self._meta is None:
            self._meta = load_meta(self.paths.root)
        return self._meta

    @property
    def rows(self):
        if self._rows is None:
            self._rows = load_catalog(self.paths.root)
        return self._rows

    def store(self):
        from .pipeline import open_store

        with self._lock:
            if self._store is None:
                self._store = open_store(self.paths.root)
            return self._store

    def compute_track(self, t: int, bubble_id: int) -> dict:
        path = self.paths.tracks / f"track_{track_key((t, bubble_id))}.json"
        with self._lock:
            if path.exists():
                return json.loads(path.read_text())
        record = track((t, bubble_id), self.store())
        with self._lock:
            if not path.exists():
                save_track(record, self.paths.tracks)
        return track_to_json(record)


def make_handler(state: CatalogState, frontend_dir: Path | None = None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def _send(self, code: int, body: bytes, content_type: str):
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _json(self, obj, code: int = 200):
            self._send(code, json.dumps(obj).encode(), "application/json")

        def _error(self, code: int, message: str):
            self._json({"error": message}, code=code)

        def _file(self, path: Path, content_type: str):
            if not path.is_file():
                return self._error(404, f"no such file: {path.name}")
            self._send(200, path.read_bytes(), content_type)

        def do_GET(self):
            try:
                self._route_get()
            except MissingInputError as e:
                self._error(409, str(e))
            except _BadRequest as e:
                self._error(400, str(e))
            except (KeyError, FileNotFoundError) as e:
                self._error(404, str(e))
            except BrokenPipeError:
                pass

        def do_POST(self):
            try:
                self._route_post()
            except MissingInputError as e:
                self._error(409, str(e))
            except _BadRequest as e:
                self._error(400, str(e))
            except (KeyError, ValueError) as e:
                self._error(404, str(e))
            except BrokenPipeError:
                pass

        def _route_get(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]

            if parts == ["api", "meta"]:
                meta = dict(state.meta)
                times = meta.get("time_steps", [])
                meta["time_range"] = [min(times), max(times)] if times else None
                meta["dt"] = meta.get("summary_dt")
                meta["attribute_ranges"] = {
                    k: list(v) for k, v in attribute_ranges(state.rows).items()
                }
                return self._json(meta)

            if parts == ["api", "bubbles"]:
                spec = _query_from_params(parse_qs(url.query))
                return self._json([row_to_json(r) for r in query(state.rows, spec)])

            if len(parts) == 4 and parts[:2] == ["api", "bubbles"]:
                t, bubble_id = int(parts[2]), int(parts[3])
                rows = [
                    r for r in state.rows
                    if r.time_index == t and r.bubble_id == bubble_id
                ]
                if not rows:
                    return self._error(404, f"no bubble {bubble_id} at step {t}")
                records, spec = load_bubbles(
                    state.paths.bubbles / f"bubbles_t{t:06d}.json"
                )
                rec = next(r for r in records if r.bubble_id == bubble_id)
                out = row_to_json(rows[0])
                out["bbox"] = [list(rec.bbox[0]), list(rec.bbox[1])]
                out["n_voxels"] = rec.n_voxels
                return self._json(out)

            if len(parts) == 3 and parts[:2] == ["api", "tracks"]:
                path = state.paths.tracks / f"track_{parts[2]}.json"
                if not path.exists():
                    return self._error(404, f"no track {parts[2]}")
                return self._json(json.loads(path.read_text()))

            if len(parts) == 3 and parts[:2] == ["api", "tracks_all"]:
                t = int(parts[2])
                ids = []
                for row in state.rows:
                    if row.time_index == t and not row.is_freeboard:
                        obj = state.compute_track(t, row.bubble_id)
                        ids.append(obj["track_id"])
                return self._json({"t": t, "track_ids": ids})

            if len(parts) == 5 and parts[:2] == ["api", "fields"] and parts[4] == "projection":
                t, name = int(parts[2]), parts[3]
                if name not in ("density", "pvf", "bsf"):
                    raise _BadRequest(f"unknown field {name!r}")
                path = state.paths.field_file(name, t)
                if not path.exists():
                    return self._error(404, f"field {name} not stored for step {t}")
                grid, _ = read_field(path)
                params = parse_qs(url.query)
                y_slab = int(params["y"][-1]) if "y" in params else None
                from .catalog import project_field

                values = project_field(grid, y_slab=y_slab)
                return self._json(
                    {
                        "t": t,
                        "name": name,
                        "shape": list(values.shape),
                        "values": [[float(v) for v in row] for row in values],
                    }
                )

            if any(p == ".." for p in parts):
                raise _BadRequest("path may not contain '..'")

            if parts and parts[0] == "images":
                return self._file(state.paths.root.joinpath(*parts), "image/png")

            if frontend_dir is not None:
                rel = parts or ["index.html"]
                target = frontend_dir.joinpath(*rel)
                if target.is_file():
                    types = {
                        ".html": "text/html",
                        ".js": "text/javascript",
                        ".css": "text/css",
                        ".map": "application/json",
                        ".svg": "image/svg+xml",
                    }
                    return self._file(target, types.get(target.suffix, "application/octet-stream"))

            return self._error(404, f"unknown path {url.path}")

        def _route_post(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if parts != ["api", "tracks"]:
                return self._error(404, f"unknown path {url.path}")
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                t, bubble_id = int(body["t"]), int(body["id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise _BadRequest('POST body must be {"t": <int>, "id": <int>}')
            try:
                return self._json(state.compute_track(t, bubble_id))
            except KeyError as e:
                return self._error(404, str(e))
            except ValueError as e:  # freeboard seeds are not trackable
                raise _BadRequest(str(e))

    return Handler


def serve(
    run_dir: str | Path, port: int, frontend_dir: str | Path | None = None
) -> ThreadingHTTPServer:
    """Create (but do not start) the catalog HTTP server.

    Call ``serve_forever()`` on the result, or use it from tests with
    ``threading.Thread(target=server.serve_forever)``. A missing or
    partial catalog is reported per request with status 409, so the
    service can be started before the catalog stage has run.
    """
    state = CatalogState(run_dir)
    handler = make_handler(
        state, Path(frontend_dir) if frontend_dir is not None else None
    )
    return ThreadingHTTPServer(("127.0.0.1", port), handler)
