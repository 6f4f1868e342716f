/** Plane geometry for the lasso tool and hover hit-testing. */

export interface Point {
  x: number;
  y: number;
}

export interface Positioned {
  x: number;
  y: number;
  occupant: string | null;
}

/**
 * Even-odd ray cast: count edge crossings of a horizontal ray from the point.
 * Points exactly on a vertex or edge may land on either side; the lasso is
 * freehand so boundary cases carry no meaning.
 */
export function pointInPolygon(p: Point, polygon: readonly Point[]): boolean {
  if (polygon.length < 3) return false;
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const a = polygon[i];
    const b = polygon[j];
    const crosses = a.y > p.y !== b.y > p.y;
    if (crosses) {
      const xAtY = a.x + ((p.y - a.y) / (b.y - a.y)) * (b.x - a.x);
      if (p.x < xAtY) inside = !inside;
    }
  }
  return inside;
}

/** Doc ids of occupied cells whose centers fall inside the polygon, in cell order. */
export function enclosedDocIds(
  cells: readonly Positioned[],
  polygon: readonly Point[],
): string[] {
  const ids: string[] = [];
  for (const cell of cells) {
    if (cell.occupant !== null && pointInPolygon(cell, polygon)) {
      ids.push(cell.occupant);
    }
  }
  return ids;
}

/**
 * Nearest occupied cell within maxDist of the query point, or null.
 * Ties resolve to the earliest cell in the list.
 */
export function nearestOccupied<T extends Positioned>(
  cells: readonly T[],
  p: Point,
  maxDist: number,
): T | null {
  let best: T | null = null;
  let bestD2 = maxDist * maxDist;
  for (const cell of cells) {
    if (cell.occupant === null) continue;
    const dx = cell.x - p.x;
    const dy = cell.y - p.y;
    const d2 = dx * dx + dy * dy;
    if (d2 < bestD2) {
      best = cell;
      bestD2 = d2;
    }
  }
  return best;
}
