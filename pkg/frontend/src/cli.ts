import { realpathSync } from "node:fs";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";
import { PLOT_KINDS, type PlotKind, render } from "./charts.js";
import { SchemaError } from "./csv.js";

const USAGE = `usage: plot <kind> --in <csv...> --out <img>

Render one SVG figure from simulator CSV output.

kinds:
  accuracy   mean client accuracy over rounds (metrics CSVs)
  purity     per-round partition purity and cluster count (metrics CSVs
             from runs with per-round clustering diagnostics)
  attack     shared, loyal-cluster, and attacker-cluster accuracy (metrics
             CSVs from attack runs)
  heatmap    one panel per pairwise-similarity CSV, shared color scale

options:
  --in <path>   input CSV; repeat for multiple seeds or snapshots
                (extra positional arguments are also taken as inputs)
  --out <path>  output SVG path (required)
  --band        force the 0.95 confidence band on
  --no-band     suppress the band (default: on for multiple inputs)
`;

function parse(argv: string[]) {
  return parseArgs({
    args: argv,
    options: {
      in: { type: "string", multiple: true },
      out: { type: "string" },
      band: { type: "boolean" },
      "no-band": { type: "boolean" },
      help: { type: "boolean", short: "h" },
    },
    allowPositionals: true,
  } as const);
}

/** Run the CLI; returns the process exit code (0 ok, 2 usage or input error). */
export function main(argv: string[]): number {
  let parsed: ReturnType<typeof parse>;
  try {
    parsed = parse(argv);
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    console.error(USAGE);
    return 2;
  }
  if (parsed.values.help) {
    console.log(USAGE);
    return 0;
  }
  const [kind, ...extraInputs] = parsed.positionals;
  if (kind === undefined || !(PLOT_KINDS as string[]).includes(kind)) {
    console.error(
      `error: expected a figure kind (${PLOT_KINDS.join(", ")}), got "${kind ?? ""}"`,
    );
    console.error(USAGE);
    return 2;
  }
  const inputs = [...(parsed.values.in ?? []), ...extraInputs];
  const output = parsed.values.out;
  if (inputs.length === 0 || output === undefined) {
    console.error("error: need at least one --in file and an --out path");
    console.error(USAGE);
    return 2;
  }
  let band: boolean | undefined;
  if (parsed.values.band) band = true;
  if (parsed.values["no-band"]) band = false;
  try {
    render({ kind: kind as PlotKind, inputs, output, band });
  } catch (error) {
    if (error instanceof SchemaError || (error as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(error as Error).message}`);
      return 2;
    }
    throw error;
  }
  console.log(`wrote ${output} (${kind}, ${inputs.length} input file${inputs.length === 1 ? "" : "s"})`);
  return 0;
}

const invokedPath = process.argv[1];
if (invokedPath !== undefined && pathToFileURL(realpathSync(invokedPath)).href === import.meta.url) {
  process.exit(main(process.argv.slice(2)));
}
