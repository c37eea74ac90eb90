export { SchemaMismatch, InvalidSpec } from "./schema.js";
export { FIGURE_KINDS, loadSpec, parseSpec, type FigureKind, type FigureSpec, type FigureStyle } from "./spec.js";
export { render, renderToString } from "./render.js";
export { renderNetwork } from "./figures/network.js";
export { renderIdeologyBar } from "./figures/ideologyBar.js";
export { renderHeatmap } from "./figures/heatmap.js";
export { renderDriftLines } from "./figures/driftLines.js";
