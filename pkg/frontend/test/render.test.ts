import { createHash } from "node:crypto";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { beforeAll, describe, expect, it } from "vitest";
import { render, renderToString } from "../src/render.js";
import { InvalidSpec, SchemaMismatch } from "../src/schema.js";
import { parseSpec, type FigureSpec } from "../src/spec.js";

const FIXTURES = fileURLToPath(new URL("../fixtures", import.meta.url));
const METRICS = join(FIXTURES, "metrics");
const NODES = join(METRICS, "nodes.csv");
const EDGES = join(METRICS, "edges.csv");
const REPORT = join(METRICS, "report.json");
const SURVEYS = join(METRICS, "surveys.csv");
const THREE_LABEL = join(FIXTURES, "three_label_report.json");

let outDir: string;
beforeAll(() => {
  outDir = mkdtempSync(join(tmpdir(), "figures-"));
});

const count = (haystack: string, needle: string) => haystack.split(needle).length - 1;
const sha = (path: string) => createHash("sha256").update(readFileSync(path)).digest("hex");

function spec(partial: Omit<FigureSpec, "output"> & { output?: string }): FigureSpec {
  return parseSpec(
    { output: join(outDir, `${partial.kind}.svg`), ...partial },
    "test",
  );
}

describe("rendering the four figure kinds from the bundled fixtures", () => {
  it("network: one glyph per agent, hulls for both communities", () => {
    const out = render(spec({ kind: "Network", inputs: { nodes: NODES, edges: EDGES } }));
    const svg = readFileSync(out, "utf-8");
    const agents = readFileSync(NODES, "utf-8").trim().split("\n").length - 1;
    expect(count(svg, '<g class="node"')).toBe(agents);
    expect(count(svg, 'class="community-hull"')).toBe(2);
    expect(count(svg, 'class="edge"')).toBeGreaterThan(0);
  });

  it("ideology bar: the three-label split renders exactly three bars with its percentages", () => {
    const out = render(spec({ kind: "IdeologyBar", inputs: { report: THREE_LABEL } }));
    const svg = readFileSync(out, "utf-8");
    expect(count(svg, '<rect class="bar"')).toBe(3);
    expect(svg).toContain("80.30%");
    expect(svg).toContain("15.70%");
    expect(svg).toContain("4.00%");
  });

  it("ideology bar: a full report renders one bar per label", () => {
    const out = render(
      spec({ kind: "IdeologyBar", inputs: { report: REPORT }, output: join(outDir, "bar-full.svg") }),
    );
    expect(count(readFileSync(out, "utf-8"), '<rect class="bar"')).toBe(4);
  });

  it("heatmap: rows x columns cells, every count shown", () => {
    const out = render(spec({ kind: "ValueIdeologyHeatmap", inputs: { report: REPORT } }));
    const svg = readFileSync(out, "utf-8");
    const matrix = JSON.parse(readFileSync(REPORT, "utf-8")).value_ideology_matrix;
    expect(count(svg, '<rect class="cell"')).toBe(matrix.rows.length * matrix.columns.length);
    for (const row of matrix.rows) expect(svg).toContain(row);
  });

  it("drift lines: one polyline per agent", () => {
    const out = render(spec({ kind: "DriftLines", inputs: { surveys: SURVEYS } }));
    const svg = readFileSync(out, "utf-8");
    const agents = new Set(
      readFileSync(SURVEYS, "utf-8")
        .trim()
        .split("\n")
        .slice(1)
        .map((line) => line.split(",")[0]),
    );
    expect(count(svg, '<polyline class="drift"')).toBe(agents.size);
  });
});

describe("determinism", () => {
  it("re-rendering identical inputs yields byte-identical files", () => {
    const specs: Omit<FigureSpec, "output">[] = [
      { kind: "Network", inputs: { nodes: NODES, edges: EDGES } },
      { kind: "IdeologyBar", inputs: { report: THREE_LABEL } },
      { kind: "ValueIdeologyHeatmap", inputs: { report: REPORT } },
      { kind: "DriftLines", inputs: { surveys: SURVEYS } },
    ];
    for (const s of specs) {
      const first = render(spec({ ...s, output: join(outDir, "first", `${s.kind}.svg`) }));
      const again = render(spec({ ...s, output: join(outDir, "second", `${s.kind}.svg`) }));
      expect(readFileSync(again).equals(readFileSync(first))).toBe(true);
    }
  });

  it("a different layout seed moves the network nodes", () => {
    const base = renderToString(spec({ kind: "Network", inputs: { nodes: NODES, edges: EDGES } }));
    const reseeded = renderToString(
      spec({ kind: "Network", inputs: { nodes: NODES, edges: EDGES }, style: { seed: 8 } }),
    );
    expect(reseeded).not.toBe(base);
  });

  it("rendering never mutates its inputs", () => {
    const before = [NODES, EDGES, REPORT, SURVEYS, THREE_LABEL].map(sha);
    render(spec({ kind: "Network", inputs: { nodes: NODES, edges: EDGES }, output: join(outDir, "m1.svg") }));
    render(spec({ kind: "IdeologyBar", inputs: { report: THREE_LABEL }, output: join(outDir, "m2.svg") }));
    render(spec({ kind: "ValueIdeologyHeatmap", inputs: { report: REPORT }, output: join(outDir, "m3.svg") }));
    render(spec({ kind: "DriftLines", inputs: { surveys: SURVEYS }, output: join(outDir, "m4.svg") }));
    expect([NODES, EDGES, REPORT, SURVEYS, THREE_LABEL].map(sha)).toEqual(before);
  });
});

describe("schema mismatches name the offending column", () => {
  function tmpFile(name: string, content: string): string {
    const path = join(outDir, name);
    writeFileSync(path, content, "utf-8");
    return path;
  }

  it("an empty drift CSV is rejected", () => {
    const empty = tmpFile("empty.csv", "");
    expect(() =>
      render(spec({ kind: "DriftLines", inputs: { surveys: empty }, output: join(outDir, "x.svg") })),
    ).toThrow(SchemaMismatch);
  });

  it("a header-only drift CSV is rejected, naming the column", () => {
    const headerOnly = tmpFile(
      "header-only.csv",
      "agent_id,round,SelfDirection,Stimulation,Hedonism,Achievement,Power,Security,Conformity,Tradition,Benevolence,Universalism\n",
    );
    let caught: unknown;
    try {
      renderToString(spec({ kind: "DriftLines", inputs: { surveys: headerOnly } }));
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(SchemaMismatch);
    expect((caught as SchemaMismatch).column).toBe("agent_id");
    expect((caught as SchemaMismatch).message).toContain('"agent_id"');
  });

  it("surveys missing a value column name that column", () => {
    const noPower = tmpFile(
      "no-power.csv",
      "agent_id,round,SelfDirection,Stimulation,Hedonism,Achievement,Security,Conformity,Tradition,Benevolence,Universalism\nagent_00,5,0,0,0,0,0,0,0,0,0\n",
    );
    expect(() => renderToString(spec({ kind: "DriftLines", inputs: { surveys: noPower } }))).toThrow(
      'column "Power" is missing',
    );
  });

  it("a single survey round cannot produce drift", () => {
    const one = tmpFile(
      "one-round.csv",
      "agent_id,round,SelfDirection,Stimulation,Hedonism,Achievement,Power,Security,Conformity,Tradition,Benevolence,Universalism\nagent_00,5,0,0,0,0,0,0,0,0,0,0\n",
    );
    expect(() => renderToString(spec({ kind: "DriftLines", inputs: { surveys: one } }))).toThrow(
      "drift needs at least 2",
    );
  });

  it("edges referencing unknown agents are rejected", () => {
    const stray = tmpFile("stray-edges.csv", "source,target,weight\nagent_00,agent_99,3\n");
    expect(() =>
      renderToString(spec({ kind: "Network", inputs: { nodes: NODES, edges: stray } })),
    ).toThrow('column "target" references unknown agent "agent_99"');
  });

  it("non-numeric weights are rejected", () => {
    const bad = tmpFile("bad-weight.csv", "source,target,weight\nagent_00,agent_01,heavy\n");
    expect(() =>
      renderToString(spec({ kind: "Network", inputs: { nodes: NODES, edges: bad } })),
    ).toThrow('column "weight" holds non-numeric value "heavy"');
  });

  it("a report without the percentages table is rejected", () => {
    const hollow = tmpFile("hollow.json", "{}");
    expect(() => renderToString(spec({ kind: "IdeologyBar", inputs: { report: hollow } }))).toThrow(
      'column "ideology_percentages" is missing',
    );
  });

  it("a ragged heatmap matrix is rejected", () => {
    const ragged = tmpFile(
      "ragged.json",
      JSON.stringify({
        value_ideology_matrix: { rows: ["Power", "Security"], columns: ["Lockean"], counts: [[1]] },
      }),
    );
    expect(() =>
      renderToString(spec({ kind: "ValueIdeologyHeatmap", inputs: { report: ragged } })),
    ).toThrow("has 1 rows, expected 2");
  });
});

describe("spec validation", () => {
  it("rejects unknown kinds", () => {
    expect(() => parseSpec({ kind: "PieChart", inputs: {}, output: "x.svg" }, "test")).toThrow(InvalidSpec);
  });

  it("rejects a kind missing its required input", () => {
    expect(() => parseSpec({ kind: "Network", inputs: { nodes: NODES }, output: "x.svg" }, "test")).toThrow(
      "Network needs inputs.edges",
    );
  });

  it("rejects inputs pointing at missing files", () => {
    expect(() =>
      parseSpec({ kind: "IdeologyBar", inputs: { report: "/nope/report.json" }, output: "x.svg" }, "test"),
    ).toThrow("not found");
  });
});
