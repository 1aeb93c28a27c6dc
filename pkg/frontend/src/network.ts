// Engagement-network pane. Nodes are drawn at the positions and in the
// colors the service computed; clicking a node drills down into the lookup
// pane via the supplied callback.

import { NetworkResponse } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderNetwork(
  container: HTMLElement,
  doc: NetworkResponse,
  onSelect: (username: string) => void,
): void {
  container.replaceChildren();

  if (doc.truncated) {
    const banner = document.createElement("div");
    banner.className = "banner truncation";
    banner.textContent =
      `showing the ${doc.nodes.length} most central accounts; the full neighborhood is larger`;
    container.appendChild(banner);
  }

  if (doc.nodes.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "no engagement found for these seeds";
    container.appendChild(empty);
    return;
  }

  const xs = doc.nodes.map((n) => n.x);
  const ys = doc.nodes.map((n) => n.y);
  const minX = Math.min(...xs);
  const minY = Math.min(...ys);
  const spanX = Math.max(Math.max(...xs) - minX, 1e-9);
  const spanY = Math.max(Math.max(...ys) - minY, 1e-9);
  const scale = 560 / Math.max(spanX, spanY);
  const px = (x: number) => 20 + (x - minX) * scale;
  const py = (y: number) => 20 + (y - minY) * scale;

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${40 + spanX * scale} ${40 + spanY * scale}`);
  svg.setAttribute("class", "network-canvas");

  for (const edge of doc.edges) {
    const from = doc.nodes.find((n) => n.id === edge.source);
    const to = doc.nodes.find((n) => n.id === edge.target);
    if (!from || !to) {
      continue;
    }
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(px(from.x)));
    line.setAttribute("y1", String(py(from.y)));
    line.setAttribute("x2", String(px(to.x)));
    line.setAttribute("y2", String(py(to.y)));
    line.setAttribute("stroke", edge.color);
    line.setAttribute("stroke-opacity", "0.35");
    line.setAttribute("class", "network-edge");
    svg.appendChild(line);
  }

  for (const node of doc.nodes) {
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", String(px(node.x)));
    dot.setAttribute("cy", String(py(node.y)));
    dot.setAttribute("r", "7");
    dot.setAttribute("fill", node.color);
    dot.setAttribute("class", "network-node");
    dot.setAttribute("data-username", node.id);
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `${node.id} (centrality ${node.centrality})`;
    dot.appendChild(title);
    dot.addEventListener("click", () => onSelect(node.id));
    svg.appendChild(dot);
  }

  container.appendChild(svg);
}
