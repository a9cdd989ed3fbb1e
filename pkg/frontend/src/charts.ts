import { mkdirSync, writeFileSync } from "node:fs";
import { basename, dirname } from "node:path";
import { SchemaError } from "./csv.js";
import {
  type BandedSeries,
  type Series,
  accuracyTimeline,
  aggregate,
  attackTimeline,
  loadMetrics,
  loadSimilarity,
  purityTimeline,
} from "./metrics.js";
import {
  type LinearScale,
  PALETTE,
  bandPath,
  coord,
  label,
  linearScale,
  niceTicks,
  polylinePath,
  rampColor,
  tag,
  text,
} from "./svg.js";
import { document as svgDocument } from "./svg.js";

export type PlotKind = "accuracy" | "purity" | "attack" | "heatmap";

export const PLOT_KINDS: PlotKind[] = ["accuracy", "purity", "attack", "heatmap"];

export interface PlotJob {
  kind: PlotKind;
  inputs: string[];
  output: string;
  /** Draw the 0.95 confidence band; defaults to on for multi-file inputs. */
  band?: boolean;
}

interface Box {
  left: number;
  top: number;
  width: number;
  height: number;
}

interface Frame {
  box: Box;
  x: LinearScale;
  y: LinearScale;
}

function makeFrame(box: Box, xDomain: [number, number], yDomain: [number, number]): Frame {
  return {
    box,
    x: linearScale(xDomain, [box.left, box.left + box.width]),
    y: linearScale(yDomain, [box.top + box.height, box.top]),
  };
}

function axes(frame: Frame, xLabel: string, yLabel: string): string {
  const { box, x, y } = frame;
  const parts: string[] = [];
  for (const tick of niceTicks(y.domain[0], y.domain[1])) {
    const py = y(tick);
    parts.push(
      tag("line", {
        x1: box.left,
        y1: py,
        x2: box.left + box.width,
        y2: py,
        stroke: "#e4e4e4",
        "stroke-width": 1,
      }),
      text(box.left - 7, py + 3.5, label(tick), { "text-anchor": "end", fill: "#444444" }),
    );
  }
  for (const tick of niceTicks(x.domain[0], x.domain[1], 6)) {
    const px = x(tick);
    parts.push(
      tag("line", {
        x1: px,
        y1: box.top + box.height,
        x2: px,
        y2: box.top + box.height + 4,
        stroke: "#444444",
        "stroke-width": 1,
      }),
      text(px, box.top + box.height + 16, label(tick), { "text-anchor": "middle", fill: "#444444" }),
    );
  }
  parts.push(
    tag("rect", {
      x: box.left,
      y: box.top,
      width: box.width,
      height: box.height,
      fill: "none",
      stroke: "#444444",
      "stroke-width": 1,
    }),
    text(box.left + box.width / 2, box.top + box.height + 32, xLabel, {
      "text-anchor": "middle",
      fill: "#222222",
    }),
    tag(
      "g",
      { transform: `translate(13,${coord(box.top + box.height / 2)}) rotate(-90)` },
      text(0, 0, yLabel, { "text-anchor": "middle", fill: "#222222" }),
    ),
  );
  return parts.join("");
}

function seriesGroup(frame: Frame, series: BandedSeries, color: string, withBand: boolean): string {
  const xs = series.rounds.map((r) => frame.x(r));
  const parts: string[] = [];
  if (withBand && series.n > 1) {
    parts.push(
      tag("path", {
        d: bandPath(
          xs,
          series.upper.map((v) => frame.y(v)),
          series.lower.map((v) => frame.y(v)),
        ),
        fill: color,
        "fill-opacity": "0.18",
        stroke: "none",
      }),
    );
  }
  parts.push(
    tag("path", {
      d: polylinePath(
        xs,
        series.mean.map((v) => frame.y(v)),
      ),
      fill: "none",
      stroke: color,
      "stroke-width": 1.6,
    }),
  );
  return parts.join("");
}

function legend(frame: Frame, entries: { name: string; color: string }[]): string {
  const x0 = frame.box.left + frame.box.width - 150;
  const parts: string[] = [];
  entries.forEach((entry, i) => {
    const y = frame.box.top + 14 + i * 15;
    parts.push(
      tag("line", {
        x1: x0,
        y1: y - 3.5,
        x2: x0 + 16,
        y2: y - 3.5,
        stroke: entry.color,
        "stroke-width": 2,
      }),
      text(x0 + 21, y, entry.name, { fill: "#222222" }),
    );
  });
  return parts.join("");
}

function splitMarker(frame: Frame, round: number): string {
  const px = frame.x(round + 0.5);
  return (
    tag("line", {
      x1: px,
      y1: frame.box.top,
      x2: px,
      y2: frame.box.top + frame.box.height,
      stroke: "#666666",
      "stroke-width": 1,
      "stroke-dasharray": "4,3",
    }) + text(px + 4, frame.box.top + 11, "clustering", { fill: "#666666", "font-size": 10 })
  );
}

function title(content: string): string {
  return text(12, 18, content, { "font-size": 13, "font-weight": "bold", fill: "#111111" });
}

function accuracyDomain(groups: BandedSeries[]): [number, number] {
  let lo = 0;
  let hi = 1;
  for (const g of groups) {
    for (const v of g.lower) lo = Math.min(lo, v);
    for (const v of g.upper) hi = Math.max(hi, v);
  }
  return [lo, hi];
}

function roundsDomain(groups: BandedSeries[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const g of groups) {
    for (const r of g.rounds) {
      lo = Math.min(lo, r);
      hi = Math.max(hi, r);
    }
  }
  return [lo, hi];
}

function renderAccuracy(inputs: string[], withBand: boolean): string {
  const timelines = inputs.map((path) => accuracyTimeline(loadMetrics(path)));
  const combined = aggregate(timelines, inputs);
  const splitRound = timelines[0]?.splitRound ?? null;
  const frame = makeFrame(
    { left: 56, top: 32, width: 560, height: 300 },
    roundsDomain([combined]),
    accuracyDomain([combined]),
  );
  const color = PALETTE[0] as string;
  const parts = [
    title("Client accuracy over training"),
    axes(frame, "round", "mean client accuracy"),
    seriesGroup(frame, combined, color, withBand),
  ];
  if (splitRound !== null) parts.push(splitMarker(frame, splitRound));
  const name = combined.n > 1 ? `mean of ${combined.n} runs` : basename(inputs[0] as string);
  parts.push(legend(frame, [{ name, color }]));
  return svgDocument(640, 392, parts);
}

function renderPurity(inputs: string[], withBand: boolean): string {
  const timelines = inputs.map((path) => purityTimeline(loadMetrics(path), path));
  const purity = aggregate(
    timelines.map((t): Series => ({ rounds: t.rounds, values: t.purity })),
    inputs,
  );
  const clusters = aggregate(
    timelines.map((t): Series => ({ rounds: t.rounds, values: t.clusters })),
    inputs,
  );
  const xDomain = roundsDomain([purity]);
  const purityFrame = makeFrame({ left: 56, top: 32, width: 560, height: 190 }, xDomain, [
    0,
    Math.max(1, ...purity.upper),
  ]);
  const clusterFrame = makeFrame({ left: 56, top: 286, width: 560, height: 190 }, xDomain, [
    0,
    Math.max(...clusters.upper) + 1,
  ]);
  const parts = [
    title("Partition quality during training"),
    axes(purityFrame, "", "partition purity"),
    seriesGroup(purityFrame, purity, PALETTE[0] as string, withBand),
    axes(clusterFrame, "round", "cluster count"),
    seriesGroup(clusterFrame, clusters, PALETTE[1] as string, withBand),
  ];
  if (purity.n > 1) {
    parts.push(legend(purityFrame, [{ name: `mean of ${purity.n} runs`, color: PALETTE[0] as string }]));
  }
  return svgDocument(640, 536, parts);
}

function renderAttack(inputs: string[], withBand: boolean): string {
  const timelines = inputs.map((path) => attackTimeline(loadMetrics(path), path));
  const pre = aggregate(
    timelines.map((t) => t.pre),
    inputs,
  );
  const loyal = aggregate(
    timelines.map((t) => t.loyal),
    inputs,
  );
  const attacker = aggregate(
    timelines.map((t) => t.attacker),
    inputs,
  );
  const splitRound = timelines[0]?.splitRound ?? null;
  const groups = [pre, loyal, attacker];
  const frame = makeFrame(
    { left: 56, top: 32, width: 560, height: 300 },
    roundsDomain(groups),
    accuracyDomain(groups),
  );
  const colors = { pre: PALETTE[0] as string, loyal: PALETTE[1] as string, attacker: PALETTE[2] as string };
  const parts = [
    title("Accuracy under attack, by cluster kind"),
    axes(frame, "round", "mean client accuracy"),
    seriesGroup(frame, pre, colors.pre, withBand),
    seriesGroup(frame, loyal, colors.loyal, withBand),
    seriesGroup(frame, attacker, colors.attacker, withBand),
  ];
  if (splitRound !== null) parts.push(splitMarker(frame, splitRound));
  parts.push(
    legend(frame, [
      { name: "shared model", color: colors.pre },
      { name: "loyal clusters", color: colors.loyal },
      { name: "attacker clusters", color: colors.attacker },
    ]),
  );
  return svgDocument(640, 392, parts);
}

function heatmapTitle(path: string): string {
  const match = basename(path).match(/round[_-]?(\d+)/i);
  return match ? `round ${match[1]}` : basename(path).replace(/\.[^.]*$/, "");
}

function renderHeatmap(inputs: string[]): string {
  const matrices = inputs.map((path) => loadSimilarity(path));
  let lo = Infinity;
  let hi = -Infinity;
  for (const matrix of matrices) {
    for (const row of matrix) {
      for (const value of row) {
        lo = Math.min(lo, value);
        hi = Math.max(hi, value);
      }
    }
  }
  const span = hi - lo;
  const shade = (value: number) => rampColor(span === 0 ? 0 : (value - lo) / span);
  const panel = 220;
  const gap = 34;
  const top = 44;
  const parts: string[] = [title("Pairwise update similarity")];
  matrices.forEach((matrix, m) => {
    const k = matrix.length;
    const cellSize = panel / k;
    const left = 16 + m * (panel + gap);
    parts.push(
      text(left + panel / 2, top - 8, heatmapTitle(inputs[m] as string), {
        "text-anchor": "middle",
        fill: "#222222",
      }),
    );
    matrix.forEach((row, i) => {
      row.forEach((value, j) => {
        parts.push(
          tag("rect", {
            x: left + j * cellSize,
            y: top + i * cellSize,
            width: cellSize,
            height: cellSize,
            fill: shade(value),
          }),
        );
      });
    });
    parts.push(
      tag("rect", {
        x: left,
        y: top,
        width: panel,
        height: panel,
        fill: "none",
        stroke: "#444444",
        "stroke-width": 1,
      }),
      text(left + panel / 2, top + panel + 16, `${k} x ${k} clients`, {
        "text-anchor": "middle",
        fill: "#444444",
        "font-size": 10,
      }),
    );
  });
  const barLeft = 16 + matrices.length * (panel + gap);
  const steps = 40;
  for (let s = 0; s < steps; s++) {
    parts.push(
      tag("rect", {
        x: barLeft,
        y: top + panel - ((s + 1) * panel) / steps,
        width: 14,
        height: panel / steps + 0.5,
        fill: rampColor((s + 0.5) / steps),
      }),
    );
  }
  parts.push(
    tag("rect", {
      x: barLeft,
      y: top,
      width: 14,
      height: panel,
      fill: "none",
      stroke: "#444444",
      "stroke-width": 1,
    }),
    text(barLeft + 19, top + 9, label(hi), { fill: "#444444", "font-size": 10 }),
    text(barLeft + 19, top + panel, label(lo), { fill: "#444444", "font-size": 10 }),
  );
  const width = barLeft + 14 + 46;
  return svgDocument(width, top + panel + 30, parts);
}

/** Render one figure and write it to the job's output path. Returns the SVG text. */
export function render(job: PlotJob): string {
  if (job.inputs.length === 0) {
    throw new SchemaError("no input files given");
  }
  const withBand = job.band ?? job.inputs.length > 1;
  let svg: string;
  switch (job.kind) {
    case "accuracy":
      svg = renderAccuracy(job.inputs, withBand);
      break;
    case "purity":
      svg = renderPurity(job.inputs, withBand);
      break;
    case "attack":
      svg = renderAttack(job.inputs, withBand);
      break;
    case "heatmap":
      svg = renderHeatmap(job.inputs);
      break;
  }
  mkdirSync(dirname(job.output), { recursive: true });
  writeFileSync(job.output, svg);
  return svg;
}
