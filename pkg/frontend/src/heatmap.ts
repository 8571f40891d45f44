// Heatmap view model: shading is monotone in the value (darker = higher
// probability), cells without a value (landmarks, the obstacle start) render
// as blocked.

import type { HeatmapPayload } from "./protocol.js";

// Darkness in [0, 1]; strictly increasing in the value.
export function shade(value: number): number {
  const clamped = Math.min(1, Math.max(0, value));
  return 0.15 + 0.85 * clamped;
}

export function cellColor(value: number | null): string {
  if (value === null) return "transparent";
  const lightness = Math.round(92 - 62 * shade(value));
  return `hsl(210 65% ${lightness}%)`;
}

export function cellTooltip(value: number | null): string {
  return value === null ? "n/a" : value.toFixed(4);
}

export interface HeatmapCellView {
  x: number;
  y: number;
  value: number | null;
  color: string;
  tooltip: string;
}

// Rows ordered top-first (y = height-1 first) for direct DOM rendering.
export function heatmapView(payload: HeatmapPayload): HeatmapCellView[][] {
  const rows: HeatmapCellView[][] = [];
  for (let y = payload.height - 1; y >= 0; y -= 1) {
    const row: HeatmapCellView[] = [];
    for (let x = 0; x < payload.width; x += 1) {
      const value = payload.grid[y]?.[x] ?? null;
      row.push({ x, y, value, color: cellColor(value), tooltip: cellTooltip(value) });
    }
    rows.push(row);
  }
  return rows;
}
