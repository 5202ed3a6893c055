/** Minimal CSV reading for the pipeline's fixed-schema tables. */

export class SchemaError extends Error {}

export type Row = Record<string, number | string>;

export interface Table {
  header: string[];
  rows: Row[];
}

function parseCell(raw: string): number | string {
  if (raw === "nan") return NaN;
  const num = Number(raw);
  return raw !== "" && Number.isFinite(num) ? num : raw;
}

/** Parse CSV text and verify every required column is present. */
export function parseCsv(text: string, required: string[]): Table {
  const lines = text.split(/\r?\n/).filter((ln) => ln.trim().length > 0);
  if (lines.length === 0) {
    throw new SchemaError("empty table");
  }
  const header = lines[0].split(",");
  for (const col of required) {
    if (!header.includes(col)) {
      throw new SchemaError(`missing column '${col}'`);
    }
  }
  const rows: Row[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.split(",");
    if (parts.length !== header.length) {
      throw new SchemaError(
        `row width ${parts.length} does not match header width ${header.length}`
      );
    }
    const row: Row = {};
    header.forEach((name, i) => {
      row[name] = parseCell(parts[i]);
    });
    rows.push(row);
  }
  if (rows.length === 0) {
    throw new SchemaError("table has a header but no rows");
  }
  return { header, rows };
}

export function num(row: Row, col: string): number {
  const v = row[col];
  if (typeof v !== "number") {
    throw new SchemaError(`column '${col}' holds a non-numeric value '${v}'`);
  }
  return v;
}

export interface SeriesStats {
  x: number[];
  mean: number[];
  std: number[];
}

/** Group by a key column, then mean and sample std of a value column. */
export function aggregate(table: Table, keyCol: string, valCol: string): SeriesStats {
  const groups = new Map<number, number[]>();
  for (const row of table.rows) {
    const v = num(row, valCol);
    if (!Number.isFinite(v)) continue;
    const k = num(row, keyCol);
    const bucket = groups.get(k) ?? [];
    bucket.push(v);
    groups.set(k, bucket);
  }
  const xs = [...groups.keys()].sort((a, b) => a - b);
  const mean: number[] = [];
  const std: number[] = [];
  for (const x of xs) {
    const vals = groups.get(x)!;
    const m = vals.reduce((s, v) => s + v, 0) / vals.length;
    mean.push(m);
    if (vals.length > 1) {
      const ss = vals.reduce((s, v) => s + (v - m) * (v - m), 0) / (vals.length - 1);
      std.push(Math.sqrt(ss));
    } else {
      std.push(0);
    }
  }
  return { x: xs, mean, std };
}
