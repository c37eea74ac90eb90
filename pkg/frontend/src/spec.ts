import { readFileSync, existsSync } from "node:fs";
import { z } from "zod";
import { InvalidSpec } from "./schema.js";

export const FIGURE_KINDS = ["Network", "IdeologyBar", "ValueIdeologyHeatmap", "DriftLines"] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

const styleSchema = z
  .object({
    width: z.number().int().positive().optional(),
    height: z.number().int().positive().optional(),
    seed: z.number().int().nonnegative().optional(),
    title: z.string().optional(),
  })
  .strict();

const specSchema = z
  .object({
    kind: z.enum(FIGURE_KINDS),
    inputs: z
      .object({
        nodes: z.string().optional(),
        edges: z.string().optional(),
        report: z.string().optional(),
        surveys: z.string().optional(),
      })
      .strict(),
    output: z.string().min(1),
    style: styleSchema.optional(),
  })
  .strict();

export type FigureSpec = z.infer<typeof specSchema>;
export type FigureStyle = NonNullable<FigureSpec["style"]>;

const REQUIRED_INPUTS: Record<FigureKind, (keyof FigureSpec["inputs"])[]> = {
  Network: ["nodes", "edges"],
  IdeologyBar: ["report"],
  ValueIdeologyHeatmap: ["report"],
  DriftLines: ["surveys"],
};

export function parseSpec(raw: unknown, origin: string): FigureSpec {
  const result = specSchema.safeParse(raw);
  if (!result.success) {
    const issue = result.error.issues[0];
    const where = issue && issue.path.length > 0 ? ` at ${issue.path.join(".")}` : "";
    throw new InvalidSpec(`${origin}: ${issue?.message ?? "invalid spec"}${where}`);
  }
  const spec = result.data;
  for (const key of REQUIRED_INPUTS[spec.kind]) {
    const path = spec.inputs[key];
    if (!path) {
      throw new InvalidSpec(`${origin}: ${spec.kind} needs inputs.${key}`);
    }
    if (!existsSync(path)) {
      throw new InvalidSpec(`${origin}: inputs.${key} not found: ${path}`);
    }
  }
  return spec;
}

export function loadSpec(path: string): FigureSpec {
  let parsed: unknown;
  try {
    parsed = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new InvalidSpec(`${path}: ${err instanceof Error ? err.message : String(err)}`);
  }
  return parseSpec(parsed, path);
}
