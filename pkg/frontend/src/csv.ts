/**
 * Minimal CSV reading for the ctlab report files.
 *
 * All inputs are machine-written (header row, comma-separated, no quoting),
 * so parsing is a straight split. Schema checks throw SchemaError naming the
 * first missing column; the CLI maps that to exit code 2.
 */

import { readFileSync } from "fs";

export interface Table {
  /** Path or label the table was read from, for error messages. */
  source: string;
  header: string[];
  rows: string[][];
}

export class SchemaError extends Error {}

export function parseCsv(text: string, source = "<csv>"): Table {
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${source}: empty file (expected a header row)`);
  }
  const header = lines[0]!.split(",");
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i]!.split(",");
    if (cells.length !== header.length) {
      throw new SchemaError(
        `${source}: row ${i + 1} has ${cells.length} fields, header has ${header.length}`
      );
    }
    rows.push(cells);
  }
  return { source, header, rows };
}

export function readTable(path: string): Table {
  return parseCsv(readFileSync(path, "utf-8"), path);
}

/** Assert the table contains every column; report the first one missing. */
export function requireColumns(table: Table, columns: string[]): void {
  for (const col of columns) {
    if (!table.header.includes(col)) {
      throw new SchemaError(
        `${table.source}: missing column "${col}" (header: ${table.header.join(",")})`
      );
    }
  }
}

/** Numeric column by name. requireColumns should have run first. */
export function numColumn(table: Table, name: string): number[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`${table.source}: missing column "${name}"`);
  }
  return table.rows.map((row, i) => {
    const v = Number(row[idx]);
    if (Number.isNaN(v) && row[idx] !== "nan") {
      throw new SchemaError(
        `${table.source}: row ${i + 2}, column "${name}": not a number: "${row[idx]}"`
      );
    }
    return v;
  });
}

/** String column by name. */
export function strColumn(table: Table, name: string): string[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new SchemaError(`${table.source}: missing column "${name}"`);
  }
  return table.rows.map((row) => row[idx]!);
}
