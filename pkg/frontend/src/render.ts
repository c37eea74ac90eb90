import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";
import { renderDriftLines } from "./figures/driftLines.js";
import { renderHeatmap } from "./figures/heatmap.js";
import { renderIdeologyBar } from "./figures/ideologyBar.js";
import { renderNetwork } from "./figures/network.js";
import type { FigureSpec } from "./spec.js";

/** Build the SVG for a spec without touching the filesystem for output. */
export function renderToString(spec: FigureSpec): string {
  const style = spec.style ?? {};
  const read = (path: string) => readFileSync(path, "utf-8");
  switch (spec.kind) {
    case "Network":
      return renderNetwork(spec.inputs.nodes!, read(spec.inputs.nodes!), spec.inputs.edges!, read(spec.inputs.edges!), style);
    case "IdeologyBar":
      return renderIdeologyBar(spec.inputs.report!, read(spec.inputs.report!), style);
    case "ValueIdeologyHeatmap":
      return renderHeatmap(spec.inputs.report!, read(spec.inputs.report!), style);
    case "DriftLines":
      return renderDriftLines(spec.inputs.surveys!, read(spec.inputs.surveys!), style);
  }
}

/** Render a spec to its output path; returns the path written. */
export function render(spec: FigureSpec): string {
  const svg = renderToString(spec);
  mkdirSync(dirname(spec.output), { recursive: true });
  writeFileSync(spec.output, svg, "utf-8");
  return spec.output;
}
