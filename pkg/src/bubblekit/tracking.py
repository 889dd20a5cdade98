"""Overlap-based bubble tracking across time steps.

Correspondence between consecutive processed steps uses the Dice index
over voxel sets, ``2|A&B| / (|A| + |B|)``: each bubble maps to the
candidate with the highest Dice score (ties: larger raw overlap, then
lower id), and matches below a confidence threshold are flagged rather
than dropped. Tracks follow these matches forward and backward from a
seed until no overlapping bubble exists, so a track covers the bubble's
observable lifespan. Merge and split events come from the structure of
the overlap graph (many-to-one argmax, one-to-many overlap) and sudden
relative volume changes are reported alongside as ``volume_jump`` events.

Freeboard components are excluded from matching and tracking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bubbles import BubbleRecord, load_bubbles
from .fields import GridSpec

LOW_CONFIDENCE_DICE = 0.2
VOLUME_JUMP_RATIO = 0.25


@dataclass(frozen=True)
class Match:
    """A directed correspondence between bubbles at consecutive steps."""

    from_key: tuple[int, int]   # (t, bubble_id)
    to_key: tuple[int, int]
    dice: float
    overlap: int
    low_confidence: bool


@dataclass(frozen=True)
class Event:
    kind: str                   # merge | split | birth | death | volume_jump
    t: int
    participants: tuple[int, ...]
    detail: float | None = None


@dataclass
class TrackStep:
    t: int
    bubble_id: int
    dice: float | None          # Dice to the previous step; None on the first
    volume: float
    centroid: tuple[float, float, float]
    rise_velocity: float | None  # centroid x-speed from the previous step


@dataclass
class TrackRecord:
    track_id: str
    seed: tuple[int, int]
    steps: list[TrackStep]
    events: list[Event] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def times(self) -> list[int]:
        return [s.t for s in self.steps]

    def step_at(self, t: int) -> TrackStep | None:
        for s in self.steps:
            if s.t == t:
                return s
        return None


def dice(a, b) -> float:
    """Dice similarity of two voxel index sets; both empty -> 0."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    inter = len(np.intersect1d(a, b, assume_unique=True))
    return 2.0 * inter / (len(a) + len(b))


def match_step(
    bubbles_t: list[BubbleRecord],
    bubbles_u: list[BubbleRecord],
    low_confidence_dice: float = LOW_CONFIDENCE_DICE,
) -> list[Match]:
    """Best-overlap correspondence from every bubble at t to step u.

    Freeboard bubbles participate neither as sources nor as candidates.
    Bubbles with no positive-Dice candidate get no match.
    """
    sources = [b for b in bubbles_t if not b.is_freeboard]
    targets = [b for b in bubbles_u if not b.is_freeboard]
    matches = []
    for src in sources:
        best = None
        for cand in targets:
            inter = len(np.intersect1d(src.voxels, cand.voxels, assume_unique=True))
            if inter == 0:
                continue
            d = 2.0 * inter / (len(src.voxels) + len(cand.voxels))
            key = (-d, -inter, cand.bubble_id)
            if best is None or key < best[0]:
                best = (key, cand, d, inter)
        if best is not None:
            _, cand, d, inter = best
            matches.append(
                Match(
                    from_key=(src.time_index, src.bubble_id),
                    to_key=(cand.time_index, cand.bubble_id),
                    dice=d,
                    overlap=inter,
                    low_confidence=d < low_confidence_dice,
                )
            )
    return matches


class BubbleStore:
    """Immutable per-step bubble records over the processed time steps."""

    def __init__(self, steps: dict[int, list[BubbleRecord]], spec: GridSpec, dt: float):
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        self._steps = dict(sorted(steps.items()))
        self.spec = spec
        self.dt = dt  # time between consecutive processed steps
        self.times = list(self._steps.keys())
        self._pos = {t: i for i, t in enumerate(self.times)}
        self._matches: dict[tuple[int, int], list[Match]] = {}

    @classmethod
    def load(cls, bubbles_dir: str | Path, dt: float) -> "BubbleStore":
        bubbles_dir = Path(bubbles_dir)
        files = sorted(bubbles_dir.glob("bubbles_t*.json"))
        if not files:
            raise FileNotFoundError(
                f"no bubble files in {bubbles_dir}; run the extract stage first"
            )
        steps = {}
        spec = None
        for f in files:
            records, spec = load_bubbles(f)
            t = int(f.stem.split("_t")[1])
            steps[t] = records
        return cls(steps, spec, dt)

    def at(self, t: int) -> list[BubbleRecord]:
        return self._steps.get(t, [])

    def get(self, t: int, bubble_id: int) -> BubbleRecord:
        for b in self.at(t):
            if b.bubble_id == bubble_id:
                return b
        raise KeyError(f"no bubble {bubble_id} at time step {t}")

    def next_time(self, t: int) -> int | None:
        i = self._pos[t] + 1
        return self.times[i] if i < len(self.times) else None

    def prev_time(self, t: int) -> int | None:
        i = self._pos[t] - 1
        return self.times[i] if i >= 0 else None

    def matches(self, t: int, u: int) -> list[Match]:
        """Cached argmax matches from step t to adjacent processed step u."""
        key = (t, u)
        if key not in self._matches:
            self._matches[key] = match_step(self.at(t), self.at(u))
        return self._matches[key]

    def match_from(self, t: int, bubble_id: int, u: int) -> Match | None:
        for m in self.matches(t, u):
            if m.from_key == (t, bubble_id):
                return m
        return None


def bubble_rise_velocity(c_prev, c_next, dt: float) -> float:
    """Centroid x-displacement per unit time between matched bubbles."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return (float(c_next[0]) - float(c_prev[0])) / dt


def track_key(seed: tuple[int, int]) -> str:
    return f"t{seed[0]:06d}_b{seed[1]:04d}"


def track(seed: tuple[int, int], store: BubbleStore) -> TrackRecord:
    """Follow argmax matches forward and backward from a seed bubble."""
    t0, b0 = seed
    seed_bubble = store.get(t0, b0)  # raises KeyError for unknown seeds
    if seed_bubble.is_freeboard:
        raise ValueError(f"bubble {b0} at step {t0} is freeboard and is not tracked")

    chain = [seed_bubble]
    diagnostics: list[str] = []

    cur = seed_bubble
    while True:
        u = store.next_time(cur.time_index)
        if u is None:
            break
        m = store.match_from(cur.time_index, cur.bubble_id, u)
        if m is None:
            break
        nxt = store.get(*m.to_key)
        back = store.match_from(nxt.time_index, nxt.bubble_id, cur.time_index)
        if back is None or back.to_key != (cur.time_index, cur.bubble_id):
            diagnostics.append(
                f"non-mutual match {m.from_key}->{m.to_key} (backward argmax differs)"
            )
        chain.append(nxt)
        cur = nxt

    cur = seed_bubble
    while True:
        u = store.prev_time(cur.time_index)
        if u is None:
            break
        m = store.match_from(cur.time_index, cur.bubble_id, u)
        if m is None:
            break
        prv = store.get(*m.to_key)
        back = store.match_from(prv.time_index, prv.bubble_id, cur.time_index)
        if back is None or back.to_key != (cur.time_index, cur.bubble_id):
            diagnostics.append(
                f"non-mutual match {m.from_key}->{m.to_key} (backward argmax differs)"
            )
        chain.insert(0, prv)
        cur = prv

    steps = []
    prev: BubbleRecord | None = None
    for b in chain:
        if prev is None:
            d = rv = None
        else:
            d = dice(prev.voxels, b.voxels)
            rv = bubble_rise_velocity(prev.centroid, b.centroid, store.dt)
        steps.append(
            TrackStep(
                t=b.time_index,
                bubble_id=b.bubble_id,
                dice=d,
                volume=b.volume,
                centroid=b.centroid,
                rise_velocity=rv,
            )
        )
        prev = b

    record = TrackRecord(
        track_id=track_key(seed), seed=seed, steps=steps, diagnostics=diagnostics
    )
    record.events = detect_events(record, store)
    return record


def detect_events(
    record: TrackRecord,
    store: BubbleStore,
    volume_jump_ratio: float = VOLUME_JUMP_RATIO,
) -> list[Event]:
    """Structural merge/split plus volume-jump events along one track.

    merge at step u: two or more bubbles at the previous step argmax-map
    onto the track's bubble at u. split at step u: the track's bubble at
    the previous step overlaps two or more bubbles at u. volume_jump: the
    relative volume change between consecutive track steps reaches
    ``volume_jump_ratio``. Birth and death mark the track's endpoints when
    earlier/later processed steps exist.
    """
    events: list[Event] = []
    steps = record.steps
    if not steps:
        return events

    first, last = steps[0], steps[-1]
    if store.prev_time(first.t) is not None:
        events.append(Event(kind="birth", t=first.t, participants=(first.bubble_id,)))
    if store.next_time(last.t) is not None:
        events.append(Event(kind="death", t=last.t, participants=(last.bubble_id,)))

    for prev_step, step in zip(steps, steps[1:]):
        t, u = prev_step.t, step.t

        into = [
            m.from_key[1]
            for m in store.matches(t, u)
            if m.to_key == (u, step.bubble_id)
        ]
        if len(into) >= 2:
            rel = (step.volume - prev_step.volume) / prev_step.volume
            events.append(
                Event(kind="merge", t=u, participants=tuple(sorted(into)), detail=rel)
            )

        src = store.get(t, prev_step.bubble_id)
        targets = [
            b for b in store.at(u)
            if not b.is_freeboard
            and len(np.intersect1d(src.voxels, b.voxels, assume_unique=True)) > 0
        ]
        if len(targets) >= 2:
            events.append(
                Event(
                    kind="split",
                    t=u,
                    participants=tuple(sorted(b.bubble_id for b in targets)),
                )
            )

        rel = (step.volume - prev_step.volume) / prev_step.volume
        if abs(rel) >= volume_jump_ratio:
            events.append(
                Event(
                    kind="volume_jump",
                    t=u,
                    participants=(prev_step.bubble_id, step.bubble_id),
                    detail=rel,
                )
            )
    return events


def track_all(t: int, store: BubbleStore) -> list[TrackRecord]:
    """One track per non-freeboard bubble at step t, ordered by bubble id."""
    out = []
    for b in sorted(store.at(t), key=lambda b: b.bubble_id):
        if not b.is_freeboard:
            out.append(track((t, b.bubble_id), store))
    return out


# ---------------------------------------------------------------------------
# Track file I/O.


def track_to_json(record: TrackRecord) -> dict:
    return {
        "track_id": record.track_id,
        "seed": list(record.seed),
        "steps": [
            {
                "t": s.t,
                "bubble_id": s.bubble_id,
                "dice": s.dice,
                "volume": s.volume,
                "centroid": list(s.centroid),
                "rise_velocity": s.rise_velocity,
            }
            for s in record.steps
        ],
        "events": [
            {
                "kind": e.kind,
                "t": e.t,
                "participants": list(e.participants),
                "detail": e.detail,
            }
            for e in record.events
        ],
        "diagnostics": record.diagnostics,
    }


def track_from_json(obj: dict) -> TrackRecord:
    return TrackRecord(
        track_id=obj["track_id"],
        seed=tuple(obj["seed"]),
        steps=[
            TrackStep(
                t=int(s["t"]),
                bubble_id=int(s["bubble_id"]),
                dice=s["dice"],
                volume=float(s["volume"]),
                centroid=tuple(s["centroid"]),
                rise_velocity=s["rise_velocity"],
            )
            for s in obj["steps"]
        ],
        events=[
            Event(
                kind=e["kind"],
                t=int(e["t"]),
                participants=tuple(e["participants"]),
                detail=e["detail"],
            )
            for e in obj["events"]
        ],
        diagnostics=list(obj.get("diagnostics", [])),
    )


def save_track(record: TrackRecord, tracks_dir: str | Path) -> Path:
    tracks_dir = Path(tracks_dir)
    tracks_dir.mkdir(parents=True, exist_ok=True)
    path = tracks_dir / f"track_{record.track_id}.json"
    path.write_text(json.dumps(track_to_json(record), indent=2))
    return path


def load_track(path: str | Path) -> TrackRecord:
    return track_from_json(json.loads(Path(path).read_text()))
