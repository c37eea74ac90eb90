import { mulberry32 } from "./rng.js";

export interface Point {
  x: number;
  y: number;
}

export interface WeightedEdge {
  source: string;
  target: string;
  weight: number;
}

/**
 * Seeded Fruchterman-Reingold layout on the unit square.
 *
 * Node order and the seed fully determine the result; there is no
 * wall-clock or iteration-count adaptivity anywhere.
 */
export function forceLayout(
  nodeIds: readonly string[],
  edges: readonly WeightedEdge[],
  seed: number,
  iterations = 250,
): Map<string, Point> {
  const n = nodeIds.length;
  const rand = mulberry32(seed);
  const pos = nodeIds.map(() => ({ x: rand(), y: rand() }));
  if (n <= 1) {
    const single = new Map<string, Point>();
    nodeIds.forEach((id) => single.set(id, { x: 0.5, y: 0.5 }));
    return single;
  }

  const index = new Map(nodeIds.map((id, i) => [id, i]));
  const maxWeight = edges.reduce((m, e) => Math.max(m, e.weight), 1);
  const k = Math.sqrt(1 / n);

  for (let iter = 0; iter < iterations; iter++) {
    const disp = nodeIds.map(() => ({ x: 0, y: 0 }));

    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        const a = pos[i]!;
        const b = pos[j]!;
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let d = Math.sqrt(dx * dx + dy * dy);
        if (d < 1e-9) {
          // deterministic nudge for coincident points
          dx = 1e-4 * (i - j);
          dy = 1e-4;
          d = Math.sqrt(dx * dx + dy * dy);
        }
        const force = (k * k) / d;
        disp[i]!.x += (dx / d) * force;
        disp[i]!.y += (dy / d) * force;
        disp[j]!.x -= (dx / d) * force;
        disp[j]!.y -= (dy / d) * force;
      }
    }

    for (const e of edges) {
      const i = index.get(e.source);
      const j = index.get(e.target);
      if (i === undefined || j === undefined || i === j) continue;
      const a = pos[i]!;
      const b = pos[j]!;
      const dx = a.x - b.x;
      const dy = a.y - b.y;
      const d = Math.max(Math.sqrt(dx * dx + dy * dy), 1e-9);
      const force = ((d * d) / k) * (e.weight / maxWeight);
      disp[i]!.x -= (dx / d) * force;
      disp[i]!.y -= (dy / d) * force;
      disp[j]!.x += (dx / d) * force;
      disp[j]!.y += (dy / d) * force;
    }

    const temp = 0.1 * (1 - iter / iterations);
    for (let i = 0; i < n; i++) {
      const d = Math.max(Math.sqrt(disp[i]!.x ** 2 + disp[i]!.y ** 2), 1e-9);
      const step = Math.min(d, temp);
      pos[i]!.x += (disp[i]!.x / d) * step;
      pos[i]!.y += (disp[i]!.y / d) * step;
    }
  }

  // normalize into [0, 1]^2
  const xs = pos.map((p) => p.x);
  const ys = pos.map((p) => p.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const spanX = Math.max(maxX - minX, 1e-9);
  const spanY = Math.max(maxY - minY, 1e-9);

  const result = new Map<string, Point>();
  nodeIds.forEach((id, i) => {
    result.set(id, {
      x: (pos[i]!.x - minX) / spanX,
      y: (pos[i]!.y - minY) / spanY,
    });
  });
  return result;
}

/** Andrew monotone chain; returns hull vertices in counterclockwise order. */
export function convexHull(points: readonly Point[]): Point[] {
  const pts = [...points].sort((a, b) => a.x - b.x || a.y - b.y);
  if (pts.length <= 2) return pts;
  const cross = (o: Point, a: Point, b: Point) =>
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  const lower: Point[] = [];
  for (const p of pts) {
    while (lower.length >= 2 && cross(lower[lower.length - 2]!, lower[lower.length - 1]!, p) <= 0) {
      lower.pop();
    }
    lower.push(p);
  }
  const upper: Point[] = [];
  for (let i = pts.length - 1; i >= 0; i--) {
    const p = pts[i]!;
    while (upper.length >= 2 && cross(upper[upper.length - 2]!, upper[upper.length - 1]!, p) <= 0) {
      upper.pop();
    }
    upper.push(p);
  }
  lower.pop();
  upper.pop();
  return lower.concat(upper);
}

/**
 * Padded hull around a node group: each point is replaced by a small ring of
 * offsets, and the hull of the union gives a rounded-looking outline that
 * clears the node glyphs.
 */
export function paddedHull(points: readonly Point[], pad: number): Point[] {
  const ring = 12;
  const expanded: Point[] = [];
  for (const p of points) {
    for (let i = 0; i < ring; i++) {
      const angle = (2 * Math.PI * i) / ring;
      expanded.push({ x: p.x + pad * Math.cos(angle), y: p.y + pad * Math.sin(angle) });
    }
  }
  return convexHull(expanded);
}
