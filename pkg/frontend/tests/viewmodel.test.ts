import { describe, expect, it } from "vitest";

import { colorFor, heatColor, PALETTE, VACANT_COLOR } from "../src/palette.js";
import { computeProjection, project, unproject } from "../src/render.js";
import {
  legendEntries,
  toMapViewModel,
  toTopicViewModel,
} from "../src/viewmodel.js";
import { mapPayloadFixture, topicsFixture } from "./fixtures.js";

describe("palette", () => {
  it("is a fixed 10-color categorical palette", () => {
    expect(PALETTE).toHaveLength(10);
    expect(new Set(PALETTE).size).toBe(10);
  });

  it("maps cluster ids to colors by index, wrapping past ten", () => {
    expect(colorFor(0)).toBe(PALETTE[0]);
    expect(colorFor(9)).toBe(PALETTE[9]);
    expect(colorFor(10)).toBe(PALETTE[0]);
  });

  it("six clusters get six distinct colors", () => {
    const colors = [0, 1, 2, 3, 4, 5].map(colorFor);
    expect(new Set(colors).size).toBe(6);
  });

  it("heat ramp darkens with weight and clamps", () => {
    expect(heatColor(0)).not.toBe(heatColor(1));
    expect(heatColor(-5)).toBe(heatColor(0));
    expect(heatColor(7)).toBe(heatColor(1));
  });
});

describe("toMapViewModel", () => {
  it("keeps every cell and tags occupied ones with cluster colors", () => {
    const vm = toMapViewModel(mapPayloadFixture());
    expect(vm.version).toBe(1);
    expect(vm.nDocs).toBe(4);
    expect(vm.cells).toHaveLength(7);
    const byOccupant = new Map(vm.cells.map((c) => [c.occupant, c]));
    expect(byOccupant.get("D00")?.color).toBe(colorFor(0));
    expect(byOccupant.get("D02")?.color).toBe(colorFor(1));
  });

  it("renders vacant cells in the neutral color even when the server colors them", () => {
    const vm = toMapViewModel(mapPayloadFixture());
    for (const cell of vm.cells.filter((c) => c.occupant === null)) {
      expect(cell.color).toBe(VACANT_COLOR);
    }
  });

  it("carries the selection set through", () => {
    const selection = new Set(["D01"]);
    const vm = toMapViewModel(mapPayloadFixture(), selection);
    expect(vm.selection).toBe(selection);
  });
});

describe("legendEntries", () => {
  it("lists one color per distinct cluster among occupied cells", () => {
    const entries = legendEntries(toMapViewModel(mapPayloadFixture()));
    expect(entries).toEqual([
      { clusterId: 0, color: colorFor(0) },
      { clusterId: 1, color: colorFor(1) },
    ]);
  });

  it("six occupied clusters produce six distinct legend colors", () => {
    const payload = mapPayloadFixture();
    payload.layout.cells = Array.from({ length: 6 }, (_, i) => ({
      index: i,
      layer: 1,
      x: Math.cos(i),
      y: Math.sin(i),
      gamma: 0.5,
      occupant: `D${i}`,
    }));
    payload.colors = Object.fromEntries(
      Array.from({ length: 6 }, (_, i) => [String(i), i]),
    );
    const entries = legendEntries(toMapViewModel(payload));
    expect(entries).toHaveLength(6);
    expect(new Set(entries.map((e) => e.color)).size).toBe(6);
  });
});

describe("toTopicViewModel", () => {
  it("sorts bars descending and applies the 0.1 default threshold", () => {
    const vm = toTopicViewModel(topicsFixture());
    expect(vm.threshold).toBe(0.1);
    expect(vm.topics[0].bars).toEqual([
      { token: "top", weight: 0.9 },
      { token: "mid", weight: 0.4 },
    ]);
    expect(vm.topics[1].bars).toEqual([{ token: "only", weight: 0.3 }]);
  });

  it("threshold is adjustable", () => {
    const all = toTopicViewModel(topicsFixture(), 0);
    expect(all.topics[0].bars.map((b) => b.token)).toEqual(["top", "mid", "low"]);
    const strict = toTopicViewModel(topicsFixture(), 0.5);
    expect(strict.topics[0].bars.map((b) => b.token)).toEqual(["top"]);
    expect(strict.topics[1].bars).toEqual([]);
  });
});

describe("projection", () => {
  it("round-trips data and pixel coordinates", () => {
    const vm = toMapViewModel(mapPayloadFixture());
    const proj = computeProjection(vm, 640, 480);
    for (const p of [
      { x: 0, y: 0 },
      { x: 1, y: 0 },
      { x: -0.5, y: 0.8 },
    ]) {
      const back = unproject(proj, project(proj, p));
      expect(back.x).toBeCloseTo(p.x, 9);
      expect(back.y).toBeCloseTo(p.y, 9);
    }
  });

  it("keeps every cell inside the viewport margin", () => {
    const vm = toMapViewModel(mapPayloadFixture());
    const proj = computeProjection(vm, 640, 480, 24);
    for (const cell of vm.cells) {
      const { x, y } = project(proj, cell);
      expect(x).toBeGreaterThanOrEqual(24 - 1e-9);
      expect(x).toBeLessThanOrEqual(640 - 24 + 1e-9);
      expect(y).toBeGreaterThanOrEqual(24 - 1e-9);
      expect(y).toBeLessThanOrEqual(480 - 24 + 1e-9);
    }
  });
});
