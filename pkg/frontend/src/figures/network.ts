import { numeric, parseCsv, requireRows } from "../csv.js";
import { CATEGORY_COLORS, seriesColor } from "../labels.js";
import { forceLayout, paddedHull, type Point, type WeightedEdge } from "../layout.js";
import { SchemaMismatch } from "../schema.js";
import { el, svgDoc, text } from "../svg.js";
import type { FigureStyle } from "../spec.js";

const NODE_COLUMNS = ["agent_id", "display_name", "category", "values", "community"] as const;
const EDGE_COLUMNS = ["source", "target", "weight"] as const;

interface NetworkNode {
  id: string;
  name: string;
  category: string;
  values: string;
  community: number;
}

/**
 * Conversation network: one glyph per agent colored by value category,
 * edge width by conversation count, translucent hull around each community.
 */
export function renderNetwork(
  nodesFile: string,
  nodesText: string,
  edgesFile: string,
  edgesText: string,
  style: FigureStyle,
): string {
  const nodeRows = parseCsv(nodesFile, nodesText, NODE_COLUMNS);
  requireRows(nodesFile, nodeRows, "agent_id");
  const nodes: NetworkNode[] = nodeRows.map((row) => ({
    id: row.agent_id ?? "",
    name: row.display_name ?? "",
    category: row.category ?? "",
    values: row.values ?? "",
    community: numeric(nodesFile, row, "community"),
  }));
  const known = new Set(nodes.map((n) => n.id));

  const edgeRows = parseCsv(edgesFile, edgesText, EDGE_COLUMNS);
  const edges: WeightedEdge[] = edgeRows.map((row) => {
    const source = row.source ?? "";
    const target = row.target ?? "";
    if (!known.has(source)) {
      throw new SchemaMismatch(edgesFile, "source", `references unknown agent ${JSON.stringify(source)}`);
    }
    if (!known.has(target)) {
      throw new SchemaMismatch(edgesFile, "target", `references unknown agent ${JSON.stringify(target)}`);
    }
    return { source, target, weight: numeric(edgesFile, row, "weight") };
  });

  const width = style.width ?? 640;
  const height = style.height ?? 520;
  const margin = 70;
  const layout = forceLayout(
    nodes.map((n) => n.id),
    edges,
    style.seed ?? 7,
  );
  const place = (id: string): Point => {
    const p = layout.get(id)!;
    return {
      x: margin + p.x * (width - 2 * margin),
      y: margin + p.y * (height - 2 * margin),
    };
  };

  const body: string[] = [];

  const communities = new Map<number, NetworkNode[]>();
  for (const n of nodes) {
    const bucket = communities.get(n.community) ?? [];
    bucket.push(n);
    communities.set(n.community, bucket);
  }
  for (const id of [...communities.keys()].sort((a, b) => a - b)) {
    const members = communities.get(id)!;
    const hull = paddedHull(
      members.map((n) => place(n.id)),
      26,
    );
    const path = hull.map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(2)},${p.y.toFixed(2)}`).join("") + "Z";
    body.push(
      el("path", {
        class: "community-hull",
        d: path,
        fill: seriesColor(id),
        "fill-opacity": "0.10",
        stroke: seriesColor(id),
        "stroke-opacity": "0.45",
        "stroke-dasharray": "5 4",
      }),
    );
  }

  const maxWeight = edges.reduce((m, e) => Math.max(m, e.weight), 1);
  for (const e of edges) {
    const a = place(e.source);
    const b = place(e.target);
    body.push(
      el("line", {
        class: "edge",
        x1: a.x,
        y1: a.y,
        x2: b.x,
        y2: b.y,
        stroke: "#777777",
        "stroke-opacity": "0.55",
        "stroke-width": 0.8 + 3.2 * (e.weight / maxWeight),
      }),
    );
  }

  for (const n of nodes) {
    const p = place(n.id);
    const fill = CATEGORY_COLORS[n.category];
    if (fill === undefined) {
      throw new SchemaMismatch(nodesFile, "category", `holds unknown category ${JSON.stringify(n.category)}`);
    }
    body.push(
      el("g", { class: "node" }, [
        el("circle", { cx: p.x, cy: p.y, r: 11, fill, stroke: "#ffffff", "stroke-width": 2 }, [
          el("title", {}, `${n.id}: ${n.values === "" ? "no values" : n.values}`),
        ]),
        text(p.x, p.y + 24, n.name, { "text-anchor": "middle", "font-size": 11, fill: "#333333" }),
      ]),
    );
  }

  const present = [...new Set(nodes.map((n) => n.category))];
  const legendOrder = Object.keys(CATEGORY_COLORS).filter((c) => present.includes(c));
  legendOrder.forEach((category, i) => {
    const y = 40 + i * 18;
    body.push(
      el("circle", { cx: 16, cy: y - 4, r: 6, fill: CATEGORY_COLORS[category] as string }),
      text(27, y, category, { "font-size": 11, fill: "#333333" }),
    );
  });

  return svgDoc(width, height, body, style.title);
}
