import type { Region } from "./types.js";

/** Normalize two cell coordinates into a Region (row0<=row1, col0<=col1),
 * clamped to the grid. Any drag direction yields the same rectangle. */
export function normalizeRegion(
  a: { row: number; col: number },
  b: { row: number; col: number },
  rows: number,
  cols: number,
): Region {
  const clampRow = (r: number) => Math.min(Math.max(r, 0), rows - 1);
  const clampCol = (c: number) => Math.min(Math.max(c, 0), cols - 1);
  return {
    row0: clampRow(Math.min(a.row, b.row)),
    col0: clampCol(Math.min(a.col, b.col)),
    row1: clampRow(Math.max(a.row, b.row)),
    col1: clampCol(Math.max(a.col, b.col)),
  };
}

export function regionEquals(a: Region, b: Region): boolean {
  return a.row0 === b.row0 && a.col0 === b.col0
    && a.row1 === b.row1 && a.col1 === b.col1;
}

export function regionWithin(region: Region, rows: number, cols: number): boolean {
  return region.row0 >= 0 && region.col0 >= 0
    && region.row0 <= region.row1 && region.col0 <= region.col1
    && region.row1 < rows && region.col1 < cols;
}

export function regionPixelCount(region: Region): number {
  return (region.row1 - region.row0 + 1) * (region.col1 - region.col0 + 1);
}

function cellAt(target: EventTarget | null): { row: number; col: number } | null {
  if (!(target instanceof HTMLElement)) return null;
  const cell = target.closest("[data-row]");
  if (!(cell instanceof HTMLElement)) return null;
  return {
    row: Number(cell.dataset.row),
    col: Number(cell.dataset.col),
  };
}

/** Attach drag-to-select behaviour to a rendered heatmap grid. The rectangle
 * snaps to whole cells; a plain click selects a 1x1 region. */
export class RegionSelector {
  private anchor: { row: number; col: number } | null = null;
  region: Region | null = null;

  constructor(
    private grid: HTMLElement,
    private rows: number,
    private cols: number,
    private onChange: (region: Region) => void,
  ) {
    grid.addEventListener("mousedown", this.onDown);
    grid.addEventListener("mouseover", this.onMove);
    grid.addEventListener("mouseup", this.onUp);
  }

  private onDown = (event: Event) => {
    const cell = cellAt(event.target);
    if (!cell) return;
    this.anchor = cell;
    this.preview(cell);
  };

  private onMove = (event: Event) => {
    if (!this.anchor) return;
    const cell = cellAt(event.target);
    if (cell) this.preview(cell);
  };

  private onUp = (event: Event) => {
    if (!this.anchor) return;
    const cell = cellAt(event.target) ?? this.anchor;
    this.preview(cell);
    this.anchor = null;
    if (this.region) this.onChange(this.region);
  };

  private preview(cell: { row: number; col: number }) {
    if (!this.anchor) return;
    this.region = normalizeRegion(this.anchor, cell, this.rows, this.cols);
    this.highlight();
  }

  private highlight() {
    const region = this.region;
    for (const el of this.grid.querySelectorAll<HTMLElement>("[data-row]")) {
      const row = Number(el.dataset.row);
      const col = Number(el.dataset.col);
      const inside = !!region && row >= region.row0 && row <= region.row1
        && col >= region.col0 && col <= region.col1;
      el.classList.toggle("selected", inside);
    }
  }

  clear() {
    this.region = null;
    this.anchor = null;
    this.highlight();
  }
}
