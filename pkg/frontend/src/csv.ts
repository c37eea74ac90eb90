import Papa from "papaparse";
import { SchemaMismatch } from "./schema.js";

export type Row = Record<string, string>;

/**
 * Parse a CSV export and check that every required column is present.
 * The file path is only used for error messages.
 */
export function parseCsv(file: string, text: string, required: readonly string[]): Row[] {
  const parsed = Papa.parse<Row>(text, { header: true, skipEmptyLines: true });
  const fields = parsed.meta.fields ?? [];
  for (const col of required) {
    if (!fields.includes(col)) {
      throw new SchemaMismatch(file, col, "is missing");
    }
  }
  return parsed.data;
}

/** Reject empty exports; the caller names the column it was about to read. */
export function requireRows(file: string, rows: Row[], column: string): void {
  if (rows.length === 0) {
    throw new SchemaMismatch(file, column, "has no data rows");
  }
}

export function numeric(file: string, row: Row, column: string): number {
  const raw = row[column];
  const value = raw === undefined || raw.trim() === "" ? NaN : Number(raw);
  if (!Number.isFinite(value)) {
    throw new SchemaMismatch(file, column, `holds non-numeric value ${JSON.stringify(raw ?? "")}`);
  }
  return value;
}
