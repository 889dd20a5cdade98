/** One store for the whole app; updates are serialized through set(). */

import { Brushes, emptyQuery } from "./filter.js";
import { LayerToggles, QueryState } from "./types.js";

export interface ViewState {
  query: QueryState;
  brushes: Brushes;
  selectedBubble: [number, number] | null; // (t, id)
  selectedTrackId: string | null;
  hoveredBubble: [number, number] | null;
  layers: LayerToggles;
  time: number;
}

export function initialState(): ViewState {
  return {
    query: emptyQuery(),
    brushes: {},
    selectedBubble: null,
    selectedTrackId: null,
    hoveredBubble: null,
    layers: { tracked_bubble: true, context_bubbles: true, pvf: true },
    time: 0,
  };
}

type Listener = (state: ViewState, changed: Set<keyof ViewState>) => void;

export class Store {
  private state: ViewState;
  private listeners: Listener[] = [];

  constructor(state: ViewState = initialState()) {
    this.state = state;
  }

  get(): ViewState {
    return this.state;
  }

  set(partial: Partial<ViewState>): void {
    const changed = new Set<keyof ViewState>();
    for (const key of Object.keys(partial) as (keyof ViewState)[]) {
      if (this.state[key] !== partial[key]) changed.add(key);
    }
    if (changed.size === 0) return;
    this.state = { ...this.state, ...partial };
    for (const fn of this.listeners) fn(this.state, changed);
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  setBrush(axis: string, range: [number, number] | null): void {
    this.set({ brushes: { ...this.state.brushes, [axis]: range } });
  }

  clearBrushes(): void {
    this.set({ brushes: {} });
  }

  toggleLayer(name: keyof LayerToggles): void {
    this.set({ layers: { ...this.state.layers, [name]: !this.state.layers[name] } });
  }
}
