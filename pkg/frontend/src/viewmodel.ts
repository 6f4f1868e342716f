/** View models: plain data derived from service payloads, ready to render. */

import { colorFor, VACANT_COLOR } from "./palette.js";
import type { LayerGamma, MapPayload, PromptPayload, TopicsPayload } from "./types.js";

export interface MapCellVM {
  index: number;
  layer: number;
  x: number;
  y: number;
  gamma: number;
  occupant: string | null;
  clusterId: number | null;
  color: string;
}

export interface MapViewModel {
  version: number;
  nDocs: number;
  prompts: PromptPayload[];
  cells: MapCellVM[];
  layerGamma: LayerGamma[];
  relevances: Record<string, number>;
  selection: Set<string>;
}

export function toMapViewModel(
  payload: MapPayload,
  selection: Set<string> = new Set(),
): MapViewModel {
  const cells = payload.layout.cells.map((cell) => {
    const clusterId = payload.colors[String(cell.index)];
    const occupied = cell.occupant !== null;
    return {
      index: cell.index,
      layer: cell.layer,
      x: cell.x,
      y: cell.y,
      gamma: cell.gamma,
      occupant: cell.occupant,
      clusterId: clusterId === undefined ? null : clusterId,
      color: occupied && clusterId !== undefined ? colorFor(clusterId) : VACANT_COLOR,
    };
  });
  return {
    version: payload.version,
    nDocs: payload.n_docs,
    prompts: payload.prompts.map((p) => ({ ...p })),
    cells,
    layerGamma: payload.per_layer_gamma.map((g) => ({ ...g })),
    relevances: { ...payload.relevances },
    selection,
  };
}

/** One legend entry per distinct cluster among occupied cells, ascending id. */
export interface LegendEntry {
  clusterId: number;
  color: string;
}

export function legendEntries(vm: MapViewModel): LegendEntry[] {
  const ids = new Set<number>();
  for (const cell of vm.cells) {
    if (cell.occupant !== null && cell.clusterId !== null) ids.add(cell.clusterId);
  }
  return [...ids].sort((a, b) => a - b).map((id) => ({ clusterId: id, color: colorFor(id) }));
}

export interface TopicBar {
  token: string;
  weight: number;
}

export interface TopicVM {
  id: number;
  bars: TopicBar[];
}

export interface TopicViewModel {
  version: number;
  k: number;
  threshold: number;
  topics: TopicVM[];
}

/** Bars at or above the display threshold, sorted descending by weight. */
export function toTopicViewModel(payload: TopicsPayload, threshold = 0.1): TopicViewModel {
  const topics = payload.topics.map((topic) => ({
    id: topic.id,
    bars: topic.tokens
      .filter((tok) => tok.w >= threshold)
      .map((tok) => ({ token: tok.t, weight: tok.w }))
      .sort((a, b) => b.weight - a.weight),
  }));
  return { version: payload.version, k: payload.k, threshold, topics };
}
