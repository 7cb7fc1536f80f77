// DOM cell-grid heatmap: plain positioned divs, no canvas, so the rendering
// is inspectable in tests and needs no 2D context.

export interface HeatmapData {
  rows: number;
  cols: number;
  values: number[][];
  nodata?: number;
}

export interface Legend {
  min: number;
  max: number;
}

/** Linear blue->green->yellow ramp; constant fields map to the midpoint. */
export function colorFor(value: number, min: number, max: number): string {
  const t = max > min ? (value - min) / (max - min) : 0.5;
  const r = Math.round(253 * Math.min(1, 2 * t));
  const g = Math.round(80 + 150 * t);
  const b = Math.round(200 * Math.max(0, 1 - 2 * t));
  return `rgb(${r}, ${g}, ${b})`;
}

export function legendOf(data: HeatmapData): Legend {
  let min = Infinity;
  let max = -Infinity;
  for (const row of data.values) {
    for (const v of row) {
      if (data.nodata !== undefined && v === data.nodata) continue;
      if (v < min) min = v;
      if (v > max) max = v;
    }
  }
  if (min === Infinity) {
    min = 0;
    max = 0;
  }
  return { min, max };
}

const fmt = (v: number) => (Math.abs(v) >= 100 ? v.toFixed(1) : v.toPrecision(4));

/** Render the grid into `container`; every displayed number is taken verbatim
 * from `data` (cells carry their value in data-value and title attributes). */
export function renderHeatmap(container: HTMLElement, data: HeatmapData): Legend {
  const legend = legendOf(data);
  container.textContent = "";
  const grid = document.createElement("div");
  grid.className = "heatmap-grid";
  grid.style.gridTemplateColumns = `repeat(${data.cols}, 1fr)`;
  for (let r = 0; r < data.rows; r++) {
    for (let c = 0; c < data.cols; c++) {
      const value = data.values[r][c];
      const cell = document.createElement("div");
      cell.className = "heatmap-cell";
      cell.dataset.row = String(r);
      cell.dataset.col = String(c);
      cell.dataset.value = String(value);
      if (data.nodata !== undefined && value === data.nodata) {
        cell.classList.add("nodata");
        cell.title = `(${r}, ${c}) nodata`;
      } else {
        cell.style.backgroundColor = colorFor(value, legend.min, legend.max);
        cell.title = `(${r}, ${c}) ${fmt(value)}`;
      }
      grid.appendChild(cell);
    }
  }
  const scale = document.createElement("div");
  scale.className = "heatmap-legend";
  scale.textContent = `min ${fmt(legend.min)} · max ${fmt(legend.max)}`;
  container.appendChild(grid);
  container.appendChild(scale);
  return legend;
}
