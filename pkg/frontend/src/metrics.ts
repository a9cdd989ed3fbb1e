import { readFileSync } from "node:fs";
import { SchemaError, columnIndex, numericCell, parseCsv, readTable } from "./csv.js";

/** One row of a training-metrics CSV. */
export interface MetricsRow {
  round: number;
  phase: "pre" | "post";
  cluster: string;
  meanAccuracy: number;
  stdAccuracy: number;
  nClusters: number | null;
  purity: number | null;
  attackerCluster: boolean | null;
}

const METRICS_COLUMNS = [
  "round",
  "phase",
  "cluster",
  "mean_accuracy",
  "std_accuracy",
  "n_clusters",
  "purity",
  "attacker_cluster",
];

/** Load and validate a metrics CSV written by the simulator. */
export function loadMetrics(path: string): MetricsRow[] {
  const table = readTable(path);
  const col = columnIndex(table, METRICS_COLUMNS);
  const at = (name: string) => col.get(name) as number;
  const rows: MetricsRow[] = [];
  table.rows.forEach((raw, i) => {
    const rowNumber = i + 2;
    const phase = raw[at("phase")];
    if (phase !== "pre" && phase !== "post") {
      throw new SchemaError(`${path}: row ${rowNumber} has unknown phase "${phase}"`);
    }
    const optional = (name: string): number | null => {
      const value = raw[at(name)];
      if (value === undefined || value === "") return null;
      return numericCell(table, raw, rowNumber, at(name), name);
    };
    const flag = raw[at("attacker_cluster")];
    rows.push({
      round: numericCell(table, raw, rowNumber, at("round"), "round"),
      phase,
      cluster: raw[at("cluster")] ?? "",
      meanAccuracy: numericCell(table, raw, rowNumber, at("mean_accuracy"), "mean_accuracy"),
      stdAccuracy: numericCell(table, raw, rowNumber, at("std_accuracy"), "std_accuracy"),
      nClusters: optional("n_clusters"),
      purity: optional("purity"),
      attackerCluster: flag === undefined || flag === "" ? null : flag !== "0",
    });
  });
  if (rows.length === 0) {
    throw new SchemaError(`${path}: no data rows`);
  }
  return rows;
}

/** Load a headerless square similarity matrix CSV. */
export function loadSimilarity(path: string): number[][] {
  const raw = parseCsv(readFileSync(path, "utf8"));
  if (raw.length === 0) {
    throw new SchemaError(`${path}: file is empty`);
  }
  const matrix = raw.map((row, i) =>
    row.map((field, j) => {
      const value = Number(field);
      if (field === "" || !Number.isFinite(value)) {
        throw new SchemaError(`${path}: row ${i + 1} column ${j + 1} is not a number: "${field}"`);
      }
      return value;
    }),
  );
  for (const [i, row] of matrix.entries()) {
    if (row.length !== matrix.length) {
      throw new SchemaError(
        `${path}: row ${i + 1} has ${row.length} entries, expected ${matrix.length} (square matrix)`,
      );
    }
  }
  return matrix;
}

/** A single curve sampled on an integer round grid. */
export interface Series {
  rounds: number[];
  values: number[];
}

/** Mean curve over several same-grid series, with a 0.95 confidence band. */
export interface BandedSeries {
  rounds: number[];
  mean: number[];
  lower: number[];
  upper: number[];
  n: number;
}

export function mean(values: number[]): number {
  let total = 0;
  for (const v of values) total += v;
  return total / values.length;
}

/** Sample standard deviation; zero when fewer than two observations. */
export function sampleStd(values: number[]): number {
  if (values.length < 2) return 0;
  const m = mean(values);
  let total = 0;
  for (const v of values) total += (v - m) * (v - m);
  return Math.sqrt(total / (values.length - 1));
}

/**
 * Average per-round values across input files and attach the 0.95
 * confidence band (mean plus or minus 1.96 * std / sqrt(n)).
 *
 * Every input must be sampled on the same round grid; figures that mix
 * runs of different lengths would silently misalign otherwise.
 */
export function aggregate(series: Series[], labels: string[]): BandedSeries {
  const first = series[0];
  if (first === undefined) {
    throw new SchemaError("no input series to aggregate");
  }
  series.forEach((s, i) => {
    if (s.rounds.length !== first.rounds.length || s.rounds.some((r, k) => r !== first.rounds[k])) {
      throw new SchemaError(
        `${labels[i]}: round grid differs from ${labels[0]}; inputs must come from identical run shapes`,
      );
    }
  });
  const n = series.length;
  const rounds = [...first.rounds];
  const meanValues: number[] = [];
  const lower: number[] = [];
  const upper: number[] = [];
  for (let k = 0; k < rounds.length; k++) {
    const column = series.map((s) => s.values[k] as number);
    const m = mean(column);
    const halfWidth = (1.96 * sampleStd(column)) / Math.sqrt(n);
    meanValues.push(m);
    lower.push(m - halfWidth);
    upper.push(m + halfWidth);
  }
  return { rounds, mean: meanValues, lower, upper, n };
}

/** Accuracy over rounds: shared-model phase, then the per-round mean over clusters. */
export interface AccuracyTimeline extends Series {
  /** Last shared-model round, or null when the run never split into clusters. */
  splitRound: number | null;
}

export function accuracyTimeline(rows: MetricsRow[]): AccuracyTimeline {
  const rounds: number[] = [];
  const values: number[] = [];
  let splitRound: number | null = null;
  const postByRound = new Map<number, number[]>();
  for (const row of rows) {
    if (row.phase === "pre") {
      rounds.push(row.round);
      values.push(row.meanAccuracy);
      splitRound = row.round;
    } else {
      const bucket = postByRound.get(row.round) ?? [];
      bucket.push(row.meanAccuracy);
      postByRound.set(row.round, bucket);
    }
  }
  if (postByRound.size === 0) splitRound = null;
  for (const round of [...postByRound.keys()].sort((a, b) => a - b)) {
    rounds.push(round);
    values.push(mean(postByRound.get(round) as number[]));
  }
  return { rounds, values, splitRound };
}

/** Per-round partition quality, available when the run logged per-round clustering. */
export interface PurityTimeline {
  rounds: number[];
  purity: number[];
  clusters: number[];
}

export function purityTimeline(rows: MetricsRow[], path: string): PurityTimeline {
  const rounds: number[] = [];
  const purity: number[] = [];
  const clusters: number[] = [];
  for (const row of rows) {
    if (row.phase !== "pre" || row.purity === null || row.nClusters === null) continue;
    rounds.push(row.round);
    purity.push(row.purity);
    clusters.push(row.nClusters);
  }
  if (rounds.length === 0) {
    throw new SchemaError(
      `${path}: no shared-phase rows carry purity values; ` +
        "this figure needs a run with per-round clustering diagnostics enabled",
    );
  }
  return { rounds, purity, clusters };
}

/** Attack-run curves: shared phase, then loyal and attacker clusters separately. */
export interface AttackTimeline {
  pre: Series;
  loyal: Series;
  attacker: Series;
  splitRound: number | null;
}

export function attackTimeline(rows: MetricsRow[], path: string): AttackTimeline {
  const pre: Series = { rounds: [], values: [] };
  let splitRound: number | null = null;
  const loyalByRound = new Map<number, number[]>();
  const attackerByRound = new Map<number, number[]>();
  for (const row of rows) {
    if (row.phase === "pre") {
      pre.rounds.push(row.round);
      pre.values.push(row.meanAccuracy);
      splitRound = row.round;
      continue;
    }
    if (row.attackerCluster === null) {
      throw new SchemaError(
        `${path}: row for cluster "${row.cluster}" at round ${row.round} ` +
          'has no attacker_cluster flag; the attack figure needs flagged cluster rows',
      );
    }
    const byRound = row.attackerCluster ? attackerByRound : loyalByRound;
    const bucket = byRound.get(row.round) ?? [];
    bucket.push(row.meanAccuracy);
    byRound.set(row.round, bucket);
  }
  if (loyalByRound.size === 0 && attackerByRound.size === 0) splitRound = null;
  const collapse = (byRound: Map<number, number[]>): Series => {
    const series: Series = { rounds: [], values: [] };
    for (const round of [...byRound.keys()].sort((a, b) => a - b)) {
      series.rounds.push(round);
      series.values.push(mean(byRound.get(round) as number[]));
    }
    return series;
  };
  return { pre, loyal: collapse(loyalByRound), attacker: collapse(attackerByRound), splitRound };
}
