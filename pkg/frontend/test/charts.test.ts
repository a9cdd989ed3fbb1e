import { mkdtempSync, readFileSync, statSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { render } from "../src/index.js";
import { rampColor } from "../src/svg.js";

const fixture = (name: string) => fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url));

const out = mkdtempSync(join(tmpdir(), "plots-out-"));

const SEEDS = ["metrics_seed0.csv", "metrics_seed1.csv", "metrics_seed2.csv"].map(fixture);
const SNAPSHOTS = ["similarity_round_0.csv", "similarity_round_30.csv", "similarity_round_60.csv"].map(
  fixture,
);

describe("figure rendering", () => {
  it("writes a well-formed svg file", () => {
    const path = join(out, "accuracy.svg");
    const svg = render({ kind: "accuracy", inputs: [SEEDS[0] as string], output: path });
    expect(svg.startsWith("<svg ")).toBe(true);
    expect(svg.endsWith("</svg>")).toBe(true);
    expect(readFileSync(path, "utf8")).toBe(svg);
  });

  it("renders identical bytes on a second run and leaves inputs untouched", () => {
    const input = SEEDS[0] as string;
    const before = readFileSync(input, "utf8");
    const first = render({ kind: "accuracy", inputs: SEEDS, output: join(out, "det1.svg") });
    const second = render({ kind: "accuracy", inputs: SEEDS, output: join(out, "det2.svg") });
    expect(second).toBe(first);
    expect(readFileSync(input, "utf8")).toBe(before);
  });

  it("draws a confidence band for multi-seed inputs and none for one seed", () => {
    const banded = render({ kind: "accuracy", inputs: SEEDS, output: join(out, "band.svg") });
    const single = render({
      kind: "accuracy",
      inputs: [SEEDS[0] as string],
      output: join(out, "single.svg"),
    });
    expect(banded).toContain('fill-opacity="0.18"');
    expect(banded).toContain("mean of 3 runs");
    expect(single).not.toContain('fill-opacity="0.18"');
  });

  it("honors the band override flag", () => {
    const quiet = render({
      kind: "accuracy",
      inputs: SEEDS,
      output: join(out, "noband.svg"),
      band: false,
    });
    expect(quiet).not.toContain('fill-opacity="0.18"');
  });

  it("marks the clustering round on the accuracy figure", () => {
    const svg = render({ kind: "accuracy", inputs: [SEEDS[0] as string], output: join(out, "split.svg") });
    expect(svg).toContain("clustering");
    expect(svg).toContain('stroke-dasharray="4,3"');
  });

  it("stacks purity and cluster-count panels", () => {
    const svg = render({ kind: "purity", inputs: SEEDS, output: join(out, "purity.svg") });
    expect(svg).toContain("partition purity");
    expect(svg).toContain("cluster count");
  });

  it("separates loyal and attacker cluster curves", () => {
    const svg = render({
      kind: "attack",
      inputs: [fixture("attack_metrics.csv")],
      output: join(out, "attack.svg"),
    });
    expect(svg).toContain("loyal clusters");
    expect(svg).toContain("attacker clusters");
    expect(svg).toContain("shared model");
  });

  it("lays similarity snapshots side by side on one shared color scale", () => {
    const svg = render({ kind: "heatmap", inputs: SNAPSHOTS, output: join(out, "heat.svg") });
    expect(svg).toContain("round 0");
    expect(svg).toContain("round 30");
    expect(svg).toContain("round 60");
    expect(svg).toContain("20 x 20 clients");
    const cells = svg.match(/<rect /g) ?? [];
    expect(cells.length).toBeGreaterThan(3 * 400);
    const zeroShade = (svg.match(/fill="#f7fbff"/g) ?? []).length;
    const maxShade = (svg.match(/fill="#08306b"/g) ?? []).length;
    expect(zeroShade).toBeGreaterThanOrEqual(400);
    expect(maxShade).toBeGreaterThanOrEqual(20);
  });

  it("scales heatmap colors across files, not per file", () => {
    const half = join(out, "half.csv");
    const full = join(out, "full.csv");
    writeFileSync(half, "0,1\n1,0\n");
    writeFileSync(full, "0,2\n2,0\n");
    const svg = render({ kind: "heatmap", inputs: [half, full], output: join(out, "heat_pair.svg") });
    const firstPanel = svg.slice(svg.indexOf(">half<"), svg.indexOf(">full<"));
    expect(firstPanel).toContain(rampColor(0.5));
    expect(firstPanel).not.toContain(rampColor(1));
    expect(svg.slice(svg.indexOf(">full<"))).toContain(rampColor(1));
  });

  it("creates missing output directories", () => {
    const nested = join(out, "deep/run/fig.svg");
    render({ kind: "accuracy", inputs: [SEEDS[0] as string], output: nested });
    expect(statSync(nested).size).toBeGreaterThan(0);
  });
});
