/** Shared data shapes; these mirror the catalog service's JSON exactly. */

export interface GridSpec {
  dims: [number, number, number];
  origin: [number, number, number];
  spacing: [number, number, number];
}

export interface Meta {
  grid: GridSpec;
  time_steps: number[];
  time_range: [number, number] | null;
  every: number;
  sim_dt: number;
  summary_dt: number;
  dt: number;
  gamma: number;
  cluster_size: [number, number, number];
  threshold: number;
  min_voxels: number;
  attribute_ranges: Record<string, [number, number]>;
}

export interface CatalogRow {
  time_index: number;
  bubble_id: number;
  volume: number;
  x_center: number;
  y_center: number;
  z_center: number;
  aspect_ratio: number;
  mean_similarity: number;
  is_freeboard: boolean;
  image_path: string;
}

export type NumericColumn =
  | "time_index"
  | "bubble_id"
  | "volume"
  | "x_center"
  | "y_center"
  | "z_center"
  | "aspect_ratio"
  | "mean_similarity";

export const NUMERIC_COLUMNS: NumericColumn[] = [
  "time_index",
  "bubble_id",
  "volume",
  "x_center",
  "y_center",
  "z_center",
  "aspect_ratio",
  "mean_similarity",
];

export interface QueryState {
  ranges: Partial<Record<NumericColumn, [number, number]>>;
  t0: number | null;
  t1: number | null;
  includeFreeboard: boolean;
}

export interface TrackStep {
  t: number;
  bubble_id: number;
  dice: number | null;
  volume: number;
  centroid: [number, number, number];
  rise_velocity: number | null;
}

export interface TrackEvent {
  kind: "merge" | "split" | "birth" | "death" | "volume_jump";
  t: number;
  participants: number[];
  detail: number | null;
}

export interface TrackRecord {
  track_id: string;
  seed: [number, number];
  steps: TrackStep[];
  events: TrackEvent[];
  diagnostics: string[];
}

export interface FieldProjection {
  t: number;
  name: "density" | "pvf" | "bsf";
  shape: [number, number];
  values: number[][]; // [ix][iz]
}

export interface LayerToggles {
  tracked_bubble: boolean;
  context_bubbles: boolean;
  pvf: boolean;
}
