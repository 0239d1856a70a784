// Read-only view of the finished knowledge graph. Positions come from the
// seeded layout so reloading the page draws the same picture.

import { forceLayout } from "./layout.js";
import { KgDoc, KgNodeDoc } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

const PALETTE = [
  "#4e79a7",
  "#f28e2b",
  "#59a14f",
  "#e15759",
  "#b07aa1",
  "#76b7b2",
  "#edc948",
  "#9c755f",
];

export function conceptColors(nodes: KgNodeDoc[]): Map<string, string> {
  const colors = new Map<string, string>();
  for (const node of nodes) {
    if (!colors.has(node.concept)) {
      colors.set(node.concept, PALETTE[colors.size % PALETTE.length]);
    }
  }
  return colors;
}

export function renderGraphView(container: HTMLElement, kgJson: string): void {
  container.innerHTML = "";
  container.classList.add("graph-view");

  let doc: KgDoc;
  try {
    doc = JSON.parse(kgJson) as KgDoc;
  } catch {
    const err = document.createElement("p");
    err.className = "graph-empty";
    err.textContent = "Graph artifact could not be parsed.";
    container.appendChild(err);
    return;
  }

  if (!doc.nodes || doc.nodes.length === 0) {
    const empty = document.createElement("p");
    empty.className = "graph-empty";
    empty.textContent = "The knowledge graph is empty.";
    container.appendChild(empty);
    return;
  }

  const width = 720;
  const height = 480;
  const positions = forceLayout(
    doc.nodes.map((n) => n.id),
    doc.edges,
    { width, height, seed: 7 },
  );
  const colors = conceptColors(doc.nodes);

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "graph-svg");
  svg.setAttribute("role", "img");

  const edgeLayer = document.createElementNS(SVG_NS, "g");
  for (const edge of doc.edges) {
    const a = positions.get(edge.sourceId);
    const b = positions.get(edge.targetId);
    if (!a || !b) continue;
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", a.x.toFixed(1));
    line.setAttribute("y1", a.y.toFixed(1));
    line.setAttribute("x2", b.x.toFixed(1));
    line.setAttribute("y2", b.y.toFixed(1));
    line.setAttribute("class", "graph-edge");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = edge.relationship;
    line.appendChild(title);
    edgeLayer.appendChild(line);
  }
  svg.appendChild(edgeLayer);

  const detail = document.createElement("div");
  detail.className = "graph-detail";
  detail.textContent = "Click a node to inspect its properties.";

  const nodeLayer = document.createElementNS(SVG_NS, "g");
  for (const node of doc.nodes) {
    const pos = positions.get(node.id);
    if (!pos) continue;
    const group = document.createElementNS(SVG_NS, "g");
    group.setAttribute("class", "graph-node");
    group.setAttribute("data-node-id", node.id);

    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("cx", pos.x.toFixed(1));
    circle.setAttribute("cy", pos.y.toFixed(1));
    circle.setAttribute("r", "14");
    circle.setAttribute("fill", colors.get(node.concept) ?? "#888");

    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", pos.x.toFixed(1));
    label.setAttribute("y", (pos.y + 26).toFixed(1));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("class", "graph-label");
    label.textContent = node.properties.name ?? node.id;

    group.appendChild(circle);
    group.appendChild(label);
    group.addEventListener("click", () => showNodeDetail(detail, node));
    nodeLayer.appendChild(group);
  }
  svg.appendChild(nodeLayer);

  const legend = document.createElement("div");
  legend.className = "graph-legend";
  for (const [concept, color] of colors) {
    const item = document.createElement("span");
    item.className = "legend-item";
    const swatch = document.createElement("span");
    swatch.className = "legend-swatch";
    swatch.style.backgroundColor = color;
    item.appendChild(swatch);
    item.appendChild(document.createTextNode(concept));
    legend.appendChild(item);
  }

  container.appendChild(legend);
  container.appendChild(svg);
  container.appendChild(detail);
}

function showNodeDetail(panel: HTMLElement, node: KgNodeDoc): void {
  panel.innerHTML = "";
  const heading = document.createElement("h3");
  heading.textContent = `${node.concept}: ${node.properties.name ?? node.id}`;
  panel.appendChild(heading);

  const list = document.createElement("dl");
  list.className = "node-properties";
  appendProperty(list, "id", node.id);
  for (const [key, value] of Object.entries(node.properties)) {
    appendProperty(list, key, value);
  }
  panel.appendChild(list);
}

function appendProperty(list: HTMLElement, key: string, value: string): void {
  const dt = document.createElement("dt");
  dt.textContent = key;
  const dd = document.createElement("dd");
  dd.textContent = value;
  list.appendChild(dt);
  list.appendChild(dd);
}
