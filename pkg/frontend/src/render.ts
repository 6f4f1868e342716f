/** Canvas rendering of the circular map, plus the pure projection math. */

import type { Point } from "./geometry.js";
import type { MapViewModel } from "./viewmodel.js";

export interface Projection {
  scale: number;
  cx: number;
  cy: number;
}

/** Fit all cell coordinates into width x height with a uniform margin. */
export function computeProjection(
  vm: MapViewModel,
  width: number,
  height: number,
  margin = 24,
): Projection {
  let extent = 1e-9;
  for (const cell of vm.cells) {
    extent = Math.max(extent, Math.abs(cell.x), Math.abs(cell.y));
  }
  const scale = (Math.min(width, height) / 2 - margin) / extent;
  return { scale, cx: width / 2, cy: height / 2 };
}

export function project(proj: Projection, p: Point): Point {
  return { x: proj.cx + p.x * proj.scale, y: proj.cy - p.y * proj.scale };
}

export function unproject(proj: Projection, p: Point): Point {
  return { x: (p.x - proj.cx) / proj.scale, y: (proj.cy - p.y) / proj.scale };
}

export interface DrawOptions {
  pointRadius?: number;
  vacantRadius?: number;
  lassoPath?: readonly Point[]; // data coordinates
}

/**
 * Draw the map. A null 2d context (non-browser DOM) makes this a no-op,
 * so view logic stays testable without a canvas implementation.
 */
export function drawMap(
  canvas: HTMLCanvasElement,
  vm: MapViewModel,
  proj: Projection,
  opts: DrawOptions = {},
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const pointRadius = opts.pointRadius ?? 5;
  const vacantRadius = opts.vacantRadius ?? 1.5;

  ctx.clearRect(0, 0, canvas.width, canvas.height);

  for (const cell of vm.cells) {
    const { x, y } = project(proj, cell);
    ctx.beginPath();
    if (cell.occupant === null) {
      ctx.fillStyle = "#d0d0d0";
      ctx.arc(x, y, vacantRadius, 0, 2 * Math.PI);
      ctx.fill();
      continue;
    }
    ctx.fillStyle = cell.color;
    ctx.arc(x, y, pointRadius, 0, 2 * Math.PI);
    ctx.fill();
    if (vm.selection.has(cell.occupant)) {
      ctx.lineWidth = 2;
      ctx.strokeStyle = "#222222";
      ctx.stroke();
    }
  }

  const path = opts.lassoPath;
  if (path && path.length > 1) {
    ctx.beginPath();
    const first = project(proj, path[0]);
    ctx.moveTo(first.x, first.y);
    for (const p of path.slice(1)) {
      const q = project(proj, p);
      ctx.lineTo(q.x, q.y);
    }
    ctx.lineWidth = 1.5;
    ctx.strokeStyle = "#555555";
    ctx.setLineDash([4, 3]);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}
