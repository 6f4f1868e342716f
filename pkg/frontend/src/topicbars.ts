/** SVG horizontal bar charts, one group per topic. */

import { colorFor } from "./palette.js";
import type { TopicViewModel } from "./viewmodel.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface TopicBarsOptions {
  width?: number;
  rowHeight?: number;
  labelWidth?: number;
  headerHeight?: number;
}

/** Replace container children with one SVG chart per topic. */
export function renderTopicBars(
  container: HTMLElement,
  vm: TopicViewModel,
  opts: TopicBarsOptions = {},
): void {
  const width = opts.width ?? 260;
  const rowHeight = opts.rowHeight ?? 16;
  const labelWidth = opts.labelWidth ?? 90;
  const headerHeight = opts.headerHeight ?? 18;
  const doc = container.ownerDocument;
  container.replaceChildren();

  for (const topic of vm.topics) {
    const svg = doc.createElementNS(SVG_NS, "svg");
    svg.setAttribute("width", String(width));
    svg.setAttribute("height", String(headerHeight + topic.bars.length * rowHeight + 4));
    svg.setAttribute("class", "topic-chart");
    svg.setAttribute("data-topic-id", String(topic.id));

    const header = doc.createElementNS(SVG_NS, "text");
    header.setAttribute("x", "0");
    header.setAttribute("y", String(headerHeight - 6));
    header.setAttribute("class", "topic-title");
    header.textContent = `topic ${topic.id}`;
    svg.appendChild(header);

    const maxWeight = topic.bars.length ? topic.bars[0].weight : 1;
    topic.bars.forEach((bar, row) => {
      const y = headerHeight + row * rowHeight;
      const label = doc.createElementNS(SVG_NS, "text");
      label.setAttribute("x", "0");
      label.setAttribute("y", String(y + rowHeight - 5));
      label.setAttribute("class", "bar-label");
      label.textContent = bar.token;
      svg.appendChild(label);

      const rect = doc.createElementNS(SVG_NS, "rect");
      const barWidth = ((width - labelWidth) * bar.weight) / Math.max(maxWeight, 1e-12);
      rect.setAttribute("x", String(labelWidth));
      rect.setAttribute("y", String(y + 3));
      rect.setAttribute("width", barWidth.toFixed(2));
      rect.setAttribute("height", String(rowHeight - 6));
      rect.setAttribute("fill", colorFor(topic.id));
      rect.setAttribute("data-token", bar.token);
      rect.setAttribute("data-weight", String(bar.weight));
      svg.appendChild(rect);
    });

    container.appendChild(svg);
  }
}
