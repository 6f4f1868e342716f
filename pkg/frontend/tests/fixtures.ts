/** Canned service payloads and a scripted fake service for app tests. */

import type { FetchLike } from "../src/api.js";
import type {
  DocPayload,
  MapPayload,
  PromptPayload,
  TopicsPayload,
} from "../src/types.js";

export function mapPayloadFixture(): MapPayload {
  // center cell vacant, six ring cells, four occupied in two clusters
  const angles = [0, 1, 2, 3, 4, 5].map((i) => (i * 2 * Math.PI) / 6);
  const occupants = ["D00", "D01", "D02", "D03", null, null];
  return {
    session_id: "parent",
    version: 1,
    n_docs: 4,
    prompts: [{ text: "alpha", weight: 1.0 }],
    layout: {
      cells: [
        { index: 0, layer: 0, x: 0, y: 0, gamma: 0.5, occupant: null },
        ...angles.map((ang, i) => ({
          index: i + 1,
          layer: 1,
          x: Math.cos(ang),
          y: Math.sin(ang),
          gamma: 0.5,
          occupant: occupants[i],
        })),
      ],
      assignments: { D00: 1, D01: 2, D02: 3, D03: 4 },
      loss_history: [2.0, 1.0],
    },
    colors: { 0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 0, 6: 1 },
    per_layer_gamma: [
      { layer: 0, gamma: 0.5 },
      { layer: 1, gamma: 0.5 },
    ],
    relevances: { D00: 1.0, D01: 0.7, D02: 0.3, D03: 0.0 },
  };
}

export function topicsFixture(version = 1): TopicsPayload {
  return {
    session_id: "parent",
    version,
    k: 2,
    topics: [
      // deliberately unsorted to prove the view model sorts
      { id: 0, tokens: [{ t: "low", w: 0.05 }, { t: "mid", w: 0.4 }, { t: "top", w: 0.9 }] },
      { id: 1, tokens: [{ t: "only", w: 0.3 }, { t: "tiny", w: 0.09 }] },
    ],
    doc_topic_weights: { D00: [0.9, 0.1], D01: [0.8, 0.2], D02: [0.1, 0.9], D03: [0.2, 0.8] },
  };
}

export function docFixture(docId: string, version = 1): DocPayload {
  return {
    session_id: "parent",
    version,
    doc_id: docId,
    title: `Doc ${docId}`,
    text: "alpha beta noise",
    tokens: [
      { t: "alpha", weight: 1.0 },
      { t: "beta", weight: 0.5 },
      { t: "noise", weight: 0.0 },
    ],
    raw_relevance: 1.234,
    relevance: 0.875,
  };
}

interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

/**
 * Minimal in-memory stand-in for the session service, faithful to the
 * prompt-weighting rules and version counter so app flows exercise the
 * same sequences a live server would produce.
 */
export class FakeService {
  calls: RecordedCall[] = [];
  version = 0;
  prompts: PromptPayload[] = [];
  childIds: string[] | null = null;

  callsTo(pathPart: string): RecordedCall[] {
    return this.calls.filter((c) => c.url.includes(pathPart));
  }

  private mapPayload(sessionId: string): MapPayload {
    const base = mapPayloadFixture();
    base.session_id = sessionId;
    base.version = this.version;
    base.prompts = this.prompts.map((p) => ({ ...p }));
    if (sessionId === "child" && this.childIds) {
      const keep = new Set(this.childIds);
      for (const cell of base.layout.cells) {
        if (cell.occupant !== null && !keep.has(cell.occupant)) cell.occupant = null;
      }
      base.n_docs = this.childIds.length;
      base.relevances = Object.fromEntries(
        Object.entries(base.relevances).filter(([id]) => keep.has(id)),
      );
    }
    return base;
  }

  fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const body: unknown = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ url, method, body });
    const path = url.replace(/^https?:\/\/[^/]+/, "");

    const respond = (status: number, payload: unknown) =>
      new Response(JSON.stringify(payload), { status });

    if (method === "POST" && path === "/sessions") {
      return respond(201, { session_id: "parent", version: 0, n_docs: 4, dim: 8 });
    }
    if (method === "POST" && /\/sessions\/[^/]+\/prompts$/.test(path)) {
      const req = body as { text: string; weight?: number };
      const w = this.prompts.length === 0 ? 1.0 : req.weight ?? 0.5;
      for (const p of this.prompts) p.weight *= 1 - w;
      this.prompts.push({ text: req.text, weight: w });
      this.version += 1;
      return respond(200, this.mapPayload("parent"));
    }
    if (method === "PATCH" && /\/weights$/.test(path)) {
      const req = body as { weights: number[] };
      this.prompts = this.prompts.map((p, i) => ({ ...p, weight: req.weights[i] }));
      this.version += 1;
      return respond(200, this.mapPayload("parent"));
    }
    if (method === "GET" && /\/sessions\/([^/]+)\/map/.test(path)) {
      const session = /\/sessions\/([^/]+)\/map/.exec(path)![1];
      return respond(200, this.mapPayload(session));
    }
    if (method === "GET" && /\/topics/.test(path)) {
      return respond(200, topicsFixture(this.version));
    }
    if (method === "GET" && /\/docs\//.test(path)) {
      const docId = decodeURIComponent(path.split("/docs/")[1].split("?")[0]);
      return respond(200, docFixture(docId, this.version));
    }
    if (method === "POST" && /\/lasso$/.test(path)) {
      const req = body as { doc_ids: string[] };
      this.childIds = req.doc_ids;
      this.version = this.prompts.length > 0 ? 1 : 0;
      return respond(201, {
        session_id: "child",
        version: this.version,
        n_docs: req.doc_ids.length,
      });
    }
    return respond(404, { detail: `unhandled ${method} ${path}` });
  };
}
