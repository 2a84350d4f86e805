/** Parsers for the CSV files the reconstruction CLI exports. */

import { readFileSync } from "node:fs";

export interface GridExport {
  /** sorted coordinates along the two varying axes */
  xs: number[];
  ys: number[];
  /** values[i][j] at (xs[i], ys[j]) */
  values: number[][];
  /** header names of the two varying columns */
  axes: [string, string];
}

function splitCsv(text: string): string[][] {
  return text
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0)
    .map((line) => line.split(","));
}

/**
 * Parse a tensor-grid CSV (coordinate columns then a value column) into a
 * dense matrix. The row count must equal the product of the per-axis
 * resolutions and every grid node must be present exactly once.
 */
export function parseGridCsv(path: string): GridExport {
  const rows = splitCsv(readFileSync(path, "utf-8"));
  if (rows.length < 2) throw new Error(`${path}: empty grid file`);
  const header = rows[0];
  if (header[header.length - 1] !== "value") {
    throw new Error(`${path}: last column must be 'value'`);
  }
  const coordCount = header.length - 1;
  const data = rows.slice(1).map((row, k) => {
    if (row.length !== header.length) {
      throw new Error(`${path}: row ${k + 2} has ${row.length} fields, expected ${header.length}`);
    }
    const nums = row.map(Number);
    if (nums.some((v) => Number.isNaN(v))) {
      throw new Error(`${path}: row ${k + 2} is not numeric`);
    }
    return nums;
  });

  // the varying axes are those with more than one distinct coordinate
  const varying: number[] = [];
  for (let c = 0; c < coordCount; c++) {
    const distinct = new Set(data.map((row) => row[c]));
    if (distinct.size > 1) varying.push(c);
  }
  if (varying.length !== 2) {
    throw new Error(`${path}: expected exactly 2 varying coordinates, found ${varying.length}`);
  }
  const [cx, cy] = varying;
  const xs = [...new Set(data.map((row) => row[cx]))].sort((a, b) => a - b);
  const ys = [...new Set(data.map((row) => row[cy]))].sort((a, b) => a - b);
  if (xs.length * ys.length !== data.length) {
    throw new Error(
      `${path}: ${data.length} rows do not form a ${xs.length} x ${ys.length} tensor grid`,
    );
  }
  const xIndex = new Map(xs.map((v, i) => [v, i]));
  const yIndex = new Map(ys.map((v, j) => [v, j]));
  const values: number[][] = xs.map(() => new Array(ys.length).fill(NaN));
  const seen = new Set<number>();
  for (const row of data) {
    const i = xIndex.get(row[cx])!;
    const j = yIndex.get(row[cy])!;
    const flat = i * ys.length + j;
    if (seen.has(flat)) throw new Error(`${path}: duplicate grid node`);
    seen.add(flat);
    values[i][j] = row[coordCount];
  }
  return { xs, ys, values, axes: [header[cx], header[cy]] };
}

export interface TraceTable {
  columns: string[];
  /** column name -> series */
  series: Map<string, number[]>;
  rows: number;
}

/** Parse trace.csv (epoch, lr, loss components, relative error). */
export function parseTraceCsv(path: string): TraceTable {
  const rows = splitCsv(readFileSync(path, "utf-8"));
  if (rows.length < 2) throw new Error(`${path}: trace needs a header and at least one row`);
  const columns = rows[0];
  const series = new Map<string, number[]>(columns.map((c) => [c, []]));
  for (let k = 1; k < rows.length; k++) {
    if (rows[k].length !== columns.length) {
      throw new Error(`${path}: row ${k + 1} has ${rows[k].length} fields, expected ${columns.length}`);
    }
    rows[k].forEach((field, c) => {
      const v = Number(field);
      if (Number.isNaN(v)) throw new Error(`${path}: row ${k + 1} is not numeric`);
      series.get(columns[c])!.push(v);
    });
  }
  return { columns, series, rows: rows.length - 1 };
}

/** Pointwise |a - b| of two grids sharing a shape. */
export function absoluteDifference(a: GridExport, b: GridExport): number[][] {
  if (a.xs.length !== b.xs.length || a.ys.length !== b.ys.length) {
    throw new Error(
      `grid shapes differ: ${a.xs.length}x${a.ys.length} vs ${b.xs.length}x${b.ys.length}`,
    );
  }
  return a.values.map((row, i) => row.map((v, j) => Math.abs(v - b.values[i][j])));
}
