// Surface heatmap rendered as a DOM grid (works headless, no canvas).

import type { SurfacesResponse } from "./api.js";

function colorFor(t: number): string {
  // cold blue -> warm red through white
  const clamped = Math.max(0, Math.min(1, t));
  const r = Math.round(40 + 215 * clamped);
  const b = Math.round(255 - 215 * clamped);
  const g = Math.round(80 + 120 * (1 - Math.abs(clamped - 0.5) * 2));
  return `rgb(${r},${g},${b})`;
}

export function renderHeatmap(
  container: HTMLElement,
  surfaces: SurfacesResponse,
  statistic: "mean" | "ci_halfwidth",
): void {
  const n = surfaces.n;
  const values = surfaces.rows.map((row) =>
    statistic === "mean" ? row[2] : 2 * Math.sqrt(row[3]),
  );
  let low = Infinity;
  let high = -Infinity;
  for (const value of values) {
    if (value < low) low = value;
    if (value > high) high = value;
  }
  const span = high - low || 1;

  container.innerHTML = "";
  container.style.display = "grid";
  container.style.gridTemplateColumns = `repeat(${n}, 6px)`;
  // rows: speeds (slowest axis in the wire order); columns: feeds
  for (let i = 0; i < n; i += 1) {
    for (let j = 0; j < n; j += 1) {
      const row = surfaces.rows[i * n + j];
      const value = statistic === "mean" ? row[2] : 2 * Math.sqrt(row[3]);
      const cell = document.createElement("div");
      cell.className = "heatmap-cell";
      cell.style.width = "6px";
      cell.style.height = "6px";
      cell.style.backgroundColor = colorFor((value - low) / span);
      cell.title = `${row[0].toFixed(2)} m/s, ${row[1].toFixed(2)} mm/min: ${value.toFixed(4)}`;
      container.appendChild(cell);
    }
  }
  container.dataset.low = String(low);
  container.dataset.high = String(high);
  container.dataset.statistic = statistic;
  container.dataset.quantity = surfaces.quantity;
}
