import { SchemaMismatch } from "../schema.js";
import { el, svgDoc, text } from "../svg.js";
import type { FigureStyle } from "../spec.js";

interface Matrix {
  rows: string[];
  columns: string[];
  counts: number[][];
}

function readMatrix(reportFile: string, reportText: string): Matrix {
  let report: unknown;
  try {
    report = JSON.parse(reportText);
  } catch {
    throw new SchemaMismatch(reportFile, "value_ideology_matrix", "is missing (file is not valid JSON)");
  }
  const raw = (report as Record<string, unknown>)["value_ideology_matrix"];
  if (raw === undefined || typeof raw !== "object" || raw === null) {
    throw new SchemaMismatch(reportFile, "value_ideology_matrix", "is missing");
  }
  const m = raw as Record<string, unknown>;
  for (const field of ["rows", "columns", "counts"]) {
    if (!Array.isArray(m[field])) {
      throw new SchemaMismatch(reportFile, `value_ideology_matrix.${field}`, "is missing");
    }
  }
  const rows = m.rows as string[];
  const columns = m.columns as string[];
  const counts = m.counts as unknown[];
  if (counts.length !== rows.length) {
    throw new SchemaMismatch(
      reportFile,
      "value_ideology_matrix.counts",
      `has ${counts.length} rows, expected ${rows.length}`,
    );
  }
  const parsed: number[][] = counts.map((row, i) => {
    if (!Array.isArray(row) || row.length !== columns.length) {
      throw new SchemaMismatch(
        reportFile,
        "value_ideology_matrix.counts",
        `row ${i} does not have ${columns.length} entries`,
      );
    }
    return row.map((cell) => {
      if (typeof cell !== "number" || !Number.isFinite(cell)) {
        throw new SchemaMismatch(reportFile, "value_ideology_matrix.counts", `row ${i} holds a non-numeric cell`);
      }
      return cell;
    });
  });
  if (rows.length === 0) {
    throw new SchemaMismatch(reportFile, "value_ideology_matrix.rows", "has no entries");
  }
  return { rows, columns, counts: parsed };
}

/** Linear white-to-blue ramp; counts are small integers so banding is fine. */
function cellColor(count: number, max: number): string {
  const t = max === 0 ? 0 : count / max;
  const channel = (from: number, to: number) => Math.round(from + (to - from) * t);
  const r = channel(255, 8);
  const g = channel(255, 81);
  const b = channel(255, 156);
  const hex = (v: number) => v.toString(16).padStart(2, "0");
  return `#${hex(r)}${hex(g)}${hex(b)}`;
}

/** Value-by-ideology heatmap of rule counts from the report's matrix export. */
export function renderHeatmap(reportFile: string, reportText: string, style: FigureStyle): string {
  const matrix = readMatrix(reportFile, reportText);
  const cellW = 92;
  const cellH = 30;
  const margin = { top: 72, left: 120, right: 24, bottom: 24 };
  const width = style.width ?? margin.left + cellW * matrix.columns.length + margin.right;
  const height = style.height ?? margin.top + cellH * matrix.rows.length + margin.bottom;
  const maxCount = Math.max(...matrix.counts.flat(), 0);
  const body: string[] = [];

  matrix.columns.forEach((column, j) => {
    body.push(
      text(margin.left + cellW * j + cellW / 2, margin.top - 10, column, {
        "text-anchor": "middle",
        "font-size": 12,
        fill: "#333333",
      }),
    );
  });
  matrix.rows.forEach((row, i) => {
    body.push(
      text(margin.left - 8, margin.top + cellH * i + cellH / 2 + 4, row, {
        "text-anchor": "end",
        "font-size": 11,
        fill: "#333333",
      }),
    );
    matrix.counts[i]!.forEach((count, j) => {
      const x = margin.left + cellW * j;
      const y = margin.top + cellH * i;
      const dark = maxCount > 0 && count / maxCount > 0.55;
      body.push(
        el("rect", {
          class: "cell",
          x,
          y,
          width: cellW,
          height: cellH,
          fill: cellColor(count, maxCount),
          stroke: "#cccccc",
        }),
        text(x + cellW / 2, y + cellH / 2 + 4, String(count), {
          "text-anchor": "middle",
          "font-size": 11,
          fill: dark ? "#ffffff" : "#333333",
        }),
      );
    });
  });

  return svgDoc(width, height, body, style.title);
}
