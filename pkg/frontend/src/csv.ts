import Papa from 'papaparse';

/** Header names plus string-valued rows of one CSV file. */
export interface Table {
  columns: string[];
  rows: Record<string, string>[];
}

/** The input broke the CSV contract: missing column, bad cell, empty file. */
export class SchemaError extends Error {}

export function parseTable(text: string, label: string): Table {
  const parsed = Papa.parse<Record<string, string>>(text, {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    const where = first.row === undefined ? '' : ` (row ${first.row})`;
    throw new SchemaError(`${label}: ${first.message}${where}`);
  }
  const columns = parsed.meta.fields ?? [];
  if (columns.length === 0 || parsed.data.length === 0) {
    throw new SchemaError(`${label}: empty table`);
  }
  return { columns, rows: parsed.data };
}

export function requireColumns(table: Table, needed: string[], label: string): void {
  for (const name of needed) {
    if (!table.columns.includes(name)) {
      throw new SchemaError(`${label}: missing column "${name}"`);
    }
  }
}

export function num(row: Record<string, string>, column: string, label: string): number {
  const value = Number(row[column]);
  if (!Number.isFinite(value)) {
    throw new SchemaError(
      `${label}: non-numeric value "${row[column]}" in column "${column}"`,
    );
  }
  return value;
}

/** True when the cell is the writer's spelling of a dropped aggregate. */
export function isNanCell(row: Record<string, string>, column: string): boolean {
  return (row[column] ?? '').trim().toLowerCase() === 'nan';
}
