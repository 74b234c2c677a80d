// Renders a GraphDocument (the same contract the file exporter uses) into
// an SVG element. Chain layouts go left to right; force layouts fall back
// to a circle.

import type { GraphDocument } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 960;
const HEIGHT = 540;
const NODE_W = 120;
const NODE_H = 36;

interface Point {
  x: number;
  y: number;
}

function layout(doc: GraphDocument): Map<string, Point> {
  const positions = new Map<string, Point>();
  const n = doc.nodes.length;
  doc.nodes.forEach((node, i) => {
    if (doc.layout === "chain") {
      positions.set(node.id, {
        x: 90 + ((WIDTH - 180) * i) / Math.max(n - 1, 1),
        y: HEIGHT / 2,
      });
    } else {
      const angle = (2 * Math.PI * i) / Math.max(n, 1);
      positions.set(node.id, {
        x: WIDTH / 2 + 0.38 * WIDTH * Math.cos(angle),
        y: HEIGHT / 2 + 0.38 * HEIGHT * Math.sin(angle),
      });
    }
  });
  return positions;
}

export function renderGraphDocument(doc: GraphDocument): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "scenario-graph");
  const positions = layout(doc);

  for (const edge of doc.edges) {
    const a = positions.get(edge.a);
    const b = positions.get(edge.b);
    if (!a || !b) continue;
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(a.x));
    line.setAttribute("y1", String(a.y));
    line.setAttribute("x2", String(b.x));
    line.setAttribute("y2", String(b.y));
    line.setAttribute("stroke", "#555");
    line.setAttribute("stroke-width", String(edge.thickness));
    line.setAttribute("stroke-opacity", String(edge.opacity));
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = edge.tooltip;
    line.append(title);
    svg.append(line);
  }

  for (const node of doc.nodes) {
    const p = positions.get(node.id);
    if (!p) continue;
    const group = document.createElementNS(SVG_NS, "g");
    group.setAttribute("data-node-id", node.id);
    const rect = document.createElementNS(SVG_NS, "rect");
    const w = node.super_node ? NODE_W + 30 : NODE_W;
    rect.setAttribute("x", String(p.x - w / 2));
    rect.setAttribute("y", String(p.y - NODE_H / 2));
    rect.setAttribute("width", String(w));
    rect.setAttribute("height", String(NODE_H));
    rect.setAttribute("rx", "4");
    rect.setAttribute("fill", node.phase_color);
    rect.setAttribute("stroke", "#222");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = node.tooltip;
    rect.append(title);
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(p.x));
    label.setAttribute("y", String(p.y + 4));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("font-size", "11");
    label.setAttribute("fill", "#fff");
    label.textContent =
      node.label.length > 20 ? `${node.label.slice(0, 19)}…` : node.label;
    group.append(rect, label);
    svg.append(group);
  }
  return svg;
}
