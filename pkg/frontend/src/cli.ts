#!/usr/bin/env node
import { realpathSync } from "node:fs";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";
import { render } from "./render.js";
import { InvalidSpec, SchemaMismatch } from "./schema.js";
import { loadSpec } from "./spec.js";

const USAGE = "usage: valuesim-figures --spec <spec.json> [--spec <more.json> ...]";

/** Exit codes mirror the simulator CLI: 0 ok, 1 spec/usage error, 2 render error. */
export function run(argv: string[]): number {
  let specPaths: string[];
  try {
    const { values } = parseArgs({
      args: argv,
      options: { spec: { type: "string", multiple: true } },
      allowPositionals: false,
    });
    specPaths = values.spec ?? [];
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    console.error(USAGE);
    return 1;
  }
  if (specPaths.length === 0) {
    console.error(USAGE);
    return 1;
  }
  for (const path of specPaths) {
    try {
      const out = render(loadSpec(path));
      console.log(`wrote ${out}`);
    } catch (err) {
      if (err instanceof InvalidSpec) {
        console.error(`spec error: ${err.message}`);
        return 1;
      }
      if (err instanceof SchemaMismatch) {
        console.error(`render failed: ${err.message}`);
        return 2;
      }
      console.error(`render failed: ${err instanceof Error ? err.message : String(err)}`);
      return 2;
    }
  }
  return 0;
}

const entry = process.argv[1];
if (entry !== undefined && import.meta.url === pathToFileURL(realpathSync(entry)).href) {
  process.exit(run(process.argv.slice(2)));
}
