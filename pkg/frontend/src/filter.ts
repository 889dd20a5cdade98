/** Client-side row filtering.
 *
 * The semantics must match the catalog service's /api/bubbles exactly:
 * closed ranges, conjunction of predicates, freeboard rows excluded
 * unless asked for, results ordered by (time_index, bubble_id). PCP
 * brushes are additional closed intervals intersected with the query.
 */

import { CatalogRow, NumericColumn, QueryState } from "./types.js";

export type Brushes = Partial<Record<NumericColumn, [number, number] | null>>;

export function emptyQuery(): QueryState {
  return { ranges: {}, t0: null, t1: null, includeFreeboard: false };
}

export function applyQuery(rows: CatalogRow[], query: QueryState): CatalogRow[] {
  const out = rows.filter((row) => {
    if (row.is_freeboard && !query.includeFreeboard) return false;
    if (query.t0 !== null && row.time_index < query.t0) return false;
    if (query.t1 !== null && row.time_index > query.t1) return false;
    for (const [col, range] of Object.entries(query.ranges)) {
      if (!range) continue;
      const v = row[col as NumericColumn];
      if (v < range[0] || v > range[1]) return false;
    }
    return true;
  });
  return sortRows(out);
}

export function applyBrushes(rows: CatalogRow[], brushes: Brushes): CatalogRow[] {
  const active = Object.entries(brushes).filter(([, r]) => r != null) as [
    NumericColumn,
    [number, number],
  ][];
  if (active.length === 0) return rows.slice();
  return rows.filter((row) =>
    active.every(([col, [lo, hi]]) => row[col] >= lo && row[col] <= hi),
  );
}

/** The spread/PCP row set: query sliders intersected with PCP brushes. */
export function visibleRows(
  rows: CatalogRow[],
  query: QueryState,
  brushes: Brushes,
): CatalogRow[] {
  return applyBrushes(applyQuery(rows, query), brushes);
}

export function sortRows(rows: CatalogRow[]): CatalogRow[] {
  return rows
    .slice()
    .sort((a, b) => a.time_index - b.time_index || a.bubble_id - b.bubble_id);
}

/** URL query string for /api/bubbles equivalent to a QueryState. */
export function queryToParams(query: QueryState): string {
  const parts: string[] = [];
  if (query.t0 !== null) parts.push(`t0=${query.t0}`);
  if (query.t1 !== null) parts.push(`t1=${query.t1}`);
  for (const [col, range] of Object.entries(query.ranges)) {
    if (!range) continue;
    parts.push(`${col}_min=${range[0]}`);
    parts.push(`${col}_max=${range[1]}`);
  }
  if (query.includeFreeboard) parts.push("freeboard=true");
  return parts.join("&");
}
