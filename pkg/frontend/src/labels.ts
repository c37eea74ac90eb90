/** Canonical orders and colors shared by the figure renderers. */

export const IDEOLOGY_ORDER = ["Rousseauian", "Lockean", "Hobbesian", "Unclassified"] as const;

export const VALUE_NAMES = [
  "SelfDirection",
  "Stimulation",
  "Hedonism",
  "Achievement",
  "Power",
  "Security",
  "Conformity",
  "Tradition",
  "Benevolence",
  "Universalism",
] as const;

// Okabe-Ito palette: colorblind-safe, print-safe
export const CATEGORY_COLORS: Record<string, string> = {
  OpennessToChange: "#e69f00",
  SelfEnhancement: "#d55e00",
  Conservation: "#0072b2",
  SelfTranscendence: "#009e73",
  NoValue: "#999999",
};

export const IDEOLOGY_COLORS: Record<string, string> = {
  Rousseauian: "#009e73",
  Lockean: "#0072b2",
  Hobbesian: "#d55e00",
  Unclassified: "#999999",
};

export const SERIES_COLORS = [
  "#0072b2",
  "#d55e00",
  "#009e73",
  "#cc79a7",
  "#e69f00",
  "#56b4e9",
  "#f0e442",
  "#000000",
] as const;

export function seriesColor(index: number): string {
  return SERIES_COLORS[index % SERIES_COLORS.length] as string;
}

/** Dash pattern for series beyond the palette size, so 30 lines stay tellable apart. */
export function seriesDash(index: number): string | undefined {
  const cycle = Math.floor(index / SERIES_COLORS.length);
  if (cycle === 0) return undefined;
  return cycle === 1 ? "6 3" : "2 3";
}
