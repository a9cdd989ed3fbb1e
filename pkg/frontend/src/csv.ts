import { readFileSync } from "node:fs";

/** Raised when an input file does not match the expected table layout. */
export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export interface Table {
  path: string;
  header: string[];
  rows: string[][];
}

/**
 * Split machine-written CSV text into trimmed cell rows.
 *
 * The simulator never quotes or escapes fields, so a plain comma split is
 * exact for its outputs. Blank lines are skipped.
 */
export function parseCsv(text: string): string[][] {
  const rows: string[][] = [];
  for (const line of text.split("\n")) {
    const stripped = line.endsWith("\r") ? line.slice(0, -1) : line;
    if (stripped === "") continue;
    rows.push(stripped.split(","));
  }
  return rows;
}

/** Read a headered CSV file into a Table. */
export function readTable(path: string): Table {
  const rows = parseCsv(readFileSync(path, "utf8"));
  const header = rows.shift();
  if (header === undefined) {
    throw new SchemaError(`${path}: file is empty`);
  }
  return { path, header, rows };
}

/**
 * Map required column names to their indices, failing loudly on the first
 * column that is absent from the header.
 */
export function columnIndex(table: Table, required: string[]): Map<string, number> {
  const index = new Map<string, number>();
  for (const name of required) {
    const at = table.header.indexOf(name);
    if (at < 0) {
      throw new SchemaError(`${table.path}: missing column "${name}"`);
    }
    index.set(name, at);
  }
  return index;
}

/** Fetch one cell, treating a short row as a schema violation. */
export function cell(table: Table, row: string[], rowNumber: number, at: number): string {
  const value = row[at];
  if (value === undefined) {
    throw new SchemaError(
      `${table.path}: row ${rowNumber} has ${row.length} fields, expected at least ${at + 1}`,
    );
  }
  return value;
}

/** Parse a required numeric cell. */
export function numericCell(
  table: Table,
  row: string[],
  rowNumber: number,
  at: number,
  name: string,
): number {
  const raw = cell(table, row, rowNumber, at);
  const value = Number(raw);
  if (raw === "" || !Number.isFinite(value)) {
    throw new SchemaError(
      `${table.path}: row ${rowNumber} column "${name}" is not a number: "${raw}"`,
    );
  }
  return value;
}
