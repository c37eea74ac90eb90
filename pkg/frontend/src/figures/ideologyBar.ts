import { IDEOLOGY_COLORS, IDEOLOGY_ORDER } from "../labels.js";
import { SchemaMismatch } from "../schema.js";
import { el, fmt, svgDoc, text } from "../svg.js";
import type { FigureStyle } from "../spec.js";

/**
 * Ideology distribution bar chart from a report's `ideology_percentages`
 * field: one bar per label present, fixed 0..100 axis.
 */
export function renderIdeologyBar(reportFile: string, reportText: string, style: FigureStyle): string {
  let report: unknown;
  try {
    report = JSON.parse(reportText);
  } catch {
    throw new SchemaMismatch(reportFile, "ideology_percentages", "is missing (file is not valid JSON)");
  }
  const percentages = (report as Record<string, unknown>)["ideology_percentages"];
  if (percentages === undefined || typeof percentages !== "object" || percentages === null) {
    throw new SchemaMismatch(reportFile, "ideology_percentages", "is missing");
  }
  const table = percentages as Record<string, unknown>;
  for (const label of Object.keys(table)) {
    if (!(IDEOLOGY_ORDER as readonly string[]).includes(label)) {
      throw new SchemaMismatch(reportFile, "ideology_percentages", `holds unknown label ${JSON.stringify(label)}`);
    }
    if (typeof table[label] !== "number" || !Number.isFinite(table[label])) {
      throw new SchemaMismatch(reportFile, "ideology_percentages", `holds non-numeric value for ${JSON.stringify(label)}`);
    }
  }
  const labels = IDEOLOGY_ORDER.filter((label) => label in table);
  if (labels.length === 0) {
    throw new SchemaMismatch(reportFile, "ideology_percentages", "has no labels");
  }

  const width = style.width ?? 480;
  const height = style.height ?? 360;
  const margin = { top: 48, right: 24, bottom: 56, left: 56 };
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;
  const body: string[] = [];

  for (const tick of [0, 25, 50, 75, 100]) {
    const y = margin.top + plotH * (1 - tick / 100);
    body.push(
      el("line", { x1: margin.left, y1: y, x2: margin.left + plotW, y2: y, stroke: "#dddddd" }),
      text(margin.left - 8, y + 4, String(tick), { "text-anchor": "end", "font-size": 11, fill: "#555555" }),
    );
  }

  const slot = plotW / labels.length;
  const barW = slot * 0.6;
  labels.forEach((label, i) => {
    const pct = table[label] as number;
    const barH = plotH * (pct / 100);
    const x = margin.left + slot * i + (slot - barW) / 2;
    const y = margin.top + plotH - barH;
    body.push(
      el("rect", {
        class: "bar",
        x,
        y,
        width: barW,
        height: barH,
        fill: IDEOLOGY_COLORS[label] as string,
      }),
      text(x + barW / 2, y - 6, `${fmt(pct)}%`, { "text-anchor": "middle", "font-size": 12, fill: "#222222" }),
      text(x + barW / 2, margin.top + plotH + 18, label, { "text-anchor": "middle", "font-size": 12, fill: "#333333" }),
    );
  });

  body.push(
    el("line", {
      x1: margin.left,
      y1: margin.top + plotH,
      x2: margin.left + plotW,
      y2: margin.top + plotH,
      stroke: "#333333",
    }),
    text(16, margin.top + plotH / 2, "% of rules", {
      "font-size": 12,
      fill: "#555555",
      transform: `rotate(-90 16 ${fmt(margin.top + plotH / 2)})`,
      "text-anchor": "middle",
    }),
  );

  return svgDoc(width, height, body, style.title);
}
