import { numeric, parseCsv, requireRows, type Row } from "../csv.js";
import { seriesColor, seriesDash, VALUE_NAMES } from "../labels.js";
import { SchemaMismatch } from "../schema.js";
import { el, fmt, svgDoc, text } from "../svg.js";
import type { FigureStyle } from "../spec.js";

const SURVEY_COLUMNS = ["agent_id", "round", ...VALUE_NAMES] as const;

interface DriftSeries {
  agent: string;
  points: { round: number; drift: number }[];
}

function driftSeries(surveysFile: string, rows: Row[]): DriftSeries[] {
  const byAgent = new Map<string, Row[]>();
  for (const row of rows) {
    const agent = row.agent_id ?? "";
    const bucket = byAgent.get(agent) ?? [];
    bucket.push(row);
    byAgent.set(agent, bucket);
  }

  const series: DriftSeries[] = [];
  for (const [agent, surveys] of byAgent) {
    if (surveys.length < 2) {
      throw new SchemaMismatch(
        surveysFile,
        "round",
        `agent ${JSON.stringify(agent)} has ${surveys.length} survey row(s); drift needs at least 2`,
      );
    }
    const ordered = [...surveys].sort(
      (a, b) => numeric(surveysFile, a, "round") - numeric(surveysFile, b, "round"),
    );
    const vectors = ordered.map((row) => VALUE_NAMES.map((v) => numeric(surveysFile, row, v)));
    const points = vectors.slice(1).map((vec, i) => {
      const prev = vectors[i]!;
      const drift = vec.reduce((acc, x, k) => acc + Math.abs(x - prev[k]!), 0) / VALUE_NAMES.length;
      return { round: numeric(surveysFile, ordered[i + 1]!, "round"), drift };
    });
    series.push({ agent, points });
  }
  return series;
}

/**
 * Per-agent value drift: mean absolute change between consecutive survey
 * vectors, one line per agent over survey rounds.
 */
export function renderDriftLines(surveysFile: string, surveysText: string, style: FigureStyle): string {
  const rows = parseCsv(surveysFile, surveysText, SURVEY_COLUMNS);
  requireRows(surveysFile, rows, "agent_id");
  const series = driftSeries(surveysFile, rows);

  const width = style.width ?? 560;
  const height = style.height ?? 400;
  const margin = { top: 48, right: 120, bottom: 48, left: 60 };
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;

  const rounds = [...new Set(series.flatMap((s) => s.points.map((p) => p.round)))].sort((a, b) => a - b);
  const minRound = rounds[0]!;
  const maxRound = rounds[rounds.length - 1]!;
  const spanRound = Math.max(maxRound - minRound, 1);
  const maxDrift = Math.max(...series.flatMap((s) => s.points.map((p) => p.drift)));
  const yMax = Math.max(0.2, Math.ceil(maxDrift * 10) / 10);

  const sx = (round: number) => margin.left + ((round - minRound) / spanRound) * plotW;
  const sy = (drift: number) => margin.top + plotH * (1 - drift / yMax);
  const body: string[] = [];

  const ticks = 4;
  for (let i = 0; i <= ticks; i++) {
    const value = (yMax * i) / ticks;
    const y = sy(value);
    body.push(
      el("line", { x1: margin.left, y1: y, x2: margin.left + plotW, y2: y, stroke: "#dddddd" }),
      text(margin.left - 8, y + 4, fmt(value), { "text-anchor": "end", "font-size": 11, fill: "#555555" }),
    );
  }
  for (const round of rounds) {
    body.push(
      text(sx(round), margin.top + plotH + 18, String(round), {
        "text-anchor": "middle",
        "font-size": 11,
        fill: "#555555",
      }),
    );
  }
  body.push(
    el("line", {
      x1: margin.left,
      y1: margin.top + plotH,
      x2: margin.left + plotW,
      y2: margin.top + plotH,
      stroke: "#333333",
    }),
    text(margin.left + plotW / 2, height - 12, "survey round", {
      "text-anchor": "middle",
      "font-size": 12,
      fill: "#555555",
    }),
    text(18, margin.top + plotH / 2, "mean |Δ score|", {
      "font-size": 12,
      fill: "#555555",
      transform: `rotate(-90 18 ${fmt(margin.top + plotH / 2)})`,
      "text-anchor": "middle",
    }),
  );

  series.forEach((s, i) => {
    const attrs: Record<string, string | number> = {
      class: "drift",
      points: s.points.map((p) => `${fmt(sx(p.round))},${fmt(sy(p.drift))}`).join(" "),
      fill: "none",
      stroke: seriesColor(i),
      "stroke-width": 1.8,
    };
    const dash = seriesDash(i);
    if (dash !== undefined) attrs["stroke-dasharray"] = dash;
    body.push(el("polyline", attrs));

    const legendY = margin.top + 14 * i;
    const legendAttrs: Record<string, string | number> = {
      x1: width - margin.right + 10,
      y1: legendY,
      x2: width - margin.right + 28,
      y2: legendY,
      stroke: seriesColor(i),
      "stroke-width": 2,
    };
    if (dash !== undefined) legendAttrs["stroke-dasharray"] = dash;
    body.push(
      el("line", legendAttrs),
      text(width - margin.right + 33, legendY + 4, s.agent, { "font-size": 10, fill: "#333333" }),
    );
  });

  return svgDoc(width, height, body, style.title);
}
