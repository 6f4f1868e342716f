/** In-context attention heatmap for one hovered document. */

import { heatColor } from "./palette.js";
import type { DocPayload } from "./types.js";

/** Replace container children with the document's token heat strip. */
export function renderHeatmap(container: HTMLElement, doc: DocPayload): void {
  const d = container.ownerDocument;
  container.replaceChildren();

  const title = d.createElement("div");
  title.className = "heatmap-title";
  title.textContent = doc.title || doc.doc_id;
  container.appendChild(title);

  const meta = d.createElement("div");
  meta.className = "heatmap-meta";
  meta.textContent = `relevance ${doc.relevance.toFixed(3)} (raw ${doc.raw_relevance.toFixed(3)})`;
  container.appendChild(meta);

  const strip = d.createElement("div");
  strip.className = "heatmap-tokens";
  for (const token of doc.tokens) {
    const span = d.createElement("span");
    span.className = "heat-token";
    span.textContent = token.t;
    span.style.backgroundColor = heatColor(token.weight);
    span.dataset.weight = String(token.weight);
    span.title = `${token.t}: ${token.weight.toFixed(3)}`;
    strip.appendChild(span);
  }
  container.appendChild(strip);
}
