/** Fixed 10-color categorical palette; cluster ids map to colors by index. */

export const PALETTE: readonly string[] = [
  "#4e79a7",
  "#f28e2b",
  "#e15759",
  "#76b7b2",
  "#59a14f",
  "#edc949",
  "#b07aa1",
  "#ff9da7",
  "#9c755f",
  "#bab0ac",
];

export const VACANT_COLOR = "#e8e8e8";

export function colorFor(clusterId: number): string {
  const n = PALETTE.length;
  return PALETTE[((clusterId % n) + n) % n];
}

/** Heat ramp for token attention, 0 (pale) to 1 (saturated). */
export function heatColor(weight: number): string {
  const w = Math.min(1, Math.max(0, weight));
  const lightness = 96 - 46 * w; // 96% down to 50%
  return `hsl(14, 85%, ${lightness.toFixed(1)}%)`;
}
