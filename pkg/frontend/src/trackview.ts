/** Single-bubble track timeline: one frame per tracked step, side by side
 * in time order, with Dice confidence flags and event annotations. */

import { Api } from "./api.js";
import { TrackEvent, TrackRecord } from "./types.js";

export interface TimelineFrame {
  t: number;
  bubbleId: number;
  imagePath: string;
  dice: number | null;
  lowConfidence: boolean;
  events: TrackEvent[];
}

export const LOW_CONFIDENCE_DICE = 0.2;

/** Frame descriptors for a track: exactly one per track step; event
 * markers attach only to steps present in the record. */
export function timelineFrames(track: TrackRecord): TimelineFrame[] {
  return track.steps.map((step) => ({
    t: step.t,
    bubbleId: step.bubble_id,
    imagePath: imagePathFor(step.t, step.bubble_id),
    dice: step.dice,
    lowConfidence: step.dice !== null && step.dice < LOW_CONFIDENCE_DICE,
    events: track.events.filter((e) => e.t === step.t),
  }));
}

export function imagePathFor(t: number, bubbleId: number): string {
  const ts = String(t).padStart(6, "0");
  const bs = String(bubbleId).padStart(4, "0");
  return `images/t${ts}_b${bs}.png`;
}

const EVENT_GLYPH: Record<string, string> = {
  merge: "⊕ merge",
  split: "⊘ split",
  birth: "• birth",
  death: "× death",
  volume_jump: "Δ volume",
};

export function renderTimeline(
  host: HTMLElement,
  track: TrackRecord,
  api: Api,
  onSelectStep?: (t: number, bubbleId: number) => void,
): void {
  host.innerHTML = "";
  const strip = document.createElement("div");
  strip.className = "timeline";
  for (const frame of timelineFrames(track)) {
    const cell = document.createElement("div");
    cell.className = "timeline-frame" + (frame.lowConfidence ? " low-confidence" : "");
    const img = document.createElement("img");
    img.src = api.imageUrl(frame.imagePath);
    img.alt = `bubble ${frame.bubbleId} at step ${frame.t}`;
    img.addEventListener("click", () => onSelectStep?.(frame.t, frame.bubbleId));
    const label = document.createElement("div");
    label.className = "timeline-label";
    const dice = frame.dice === null ? "seedward" : `dice ${frame.dice.toFixed(2)}`;
    label.textContent = `t=${frame.t} ${dice}`;
    cell.append(img, label);
    for (const e of frame.events) {
      const marker = document.createElement("div");
      marker.className = `event-marker event-${e.kind}`;
      marker.textContent = EVENT_GLYPH[e.kind] ?? e.kind;
      marker.title = e.detail != null ? `${(100 * e.detail).toFixed(0)}%` : e.kind;
      cell.append(marker);
    }
    strip.append(cell);
  }
  host.append(strip);
}
