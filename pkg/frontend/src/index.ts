export { SchemaError, parseCsv, readTable, columnIndex } from "./csv.js";
export {
  type MetricsRow,
  type Series,
  type BandedSeries,
  type AccuracyTimeline,
  type PurityTimeline,
  type AttackTimeline,
  loadMetrics,
  loadSimilarity,
  mean,
  sampleStd,
  aggregate,
  accuracyTimeline,
  purityTimeline,
  attackTimeline,
} from "./metrics.js";
export { type PlotJob, type PlotKind, PLOT_KINDS, render } from "./charts.js";
export { main } from "./cli.js";
