/** Thin typed client for the catalog service. */

import { queryToParams } from "./filter.js";
import {
  CatalogRow,
  FieldProjection,
  Meta,
  QueryState,
  TrackRecord,
} from "./types.js";

export class Api {
  constructor(readonly baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.baseUrl + path);
    if (!resp.ok) {
      const body = await resp.text();
      throw new Error(`${path}: HTTP ${resp.status} ${body.slice(0, 200)}`);
    }
    return resp.json() as Promise<T>;
  }

  meta(): Promise<Meta> {
    return this.getJson("/api/meta");
  }

  bubbles(query: QueryState): Promise<CatalogRow[]> {
    const params = queryToParams(query);
    return this.getJson(`/api/bubbles${params ? "?" + params : ""}`);
  }

  allRows(): Promise<CatalogRow[]> {
    return this.getJson("/api/bubbles?freeboard=true");
  }

  async track(t: number, id: number): Promise<TrackRecord> {
    const resp = await fetch(this.baseUrl + "/api/tracks", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ t, id }),
    });
    if (!resp.ok) throw new Error(`POST /api/tracks: HTTP ${resp.status}`);
    return resp.json();
  }

  trackById(trackId: string): Promise<TrackRecord> {
    return this.getJson(`/api/tracks/${trackId}`);
  }

  tracksAll(t: number): Promise<{ t: number; track_ids: string[] }> {
    return this.getJson(`/api/tracks_all/${t}`);
  }

  fieldProjection(t: number, name: string): Promise<FieldProjection> {
    return this.getJson(`/api/fields/${t}/${name}/projection`);
  }

  imageUrl(imagePath: string): string {
    return `${this.baseUrl}/${imagePath}`;
  }
}
