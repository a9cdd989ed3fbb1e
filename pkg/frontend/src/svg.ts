/** Deterministic SVG assembly: no dates, no randomness, fixed number formats. */

/** Coordinate formatter: two fixed decimals keeps files small and stable. */
export function coord(value: number): string {
  return value.toFixed(2);
}

/** Tick-label formatter: shortest clean decimal form. */
export function label(value: number): string {
  if (value === 0) return "0";
  return String(parseFloat(value.toPrecision(6)));
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export type Attrs = Record<string, string | number>;

/** Build one element; children joined without separators. */
export function tag(name: string, attrs: Attrs, ...children: string[]): string {
  const parts = Object.entries(attrs).map(
    ([key, value]) => ` ${key}="${typeof value === "number" ? coord(value) : value}"`,
  );
  const open = `<${name}${parts.join("")}`;
  if (children.length === 0) return `${open}/>`;
  return `${open}>${children.join("")}</${name}>`;
}

export function text(x: number, y: number, content: string, attrs: Attrs = {}): string {
  return tag(
    "text",
    { x, y, "font-family": "Helvetica, Arial, sans-serif", "font-size": 11, ...attrs },
    escapeXml(content),
  );
}

export interface LinearScale {
  (value: number): number;
  domain: [number, number];
}

/** Affine map from data domain to pixel range. */
export function linearScale(domain: [number, number], range: [number, number]): LinearScale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0;
  const scale = ((value: number) =>
    span === 0 ? (r0 + r1) / 2 : r0 + ((value - d0) / span) * (r1 - r0)) as LinearScale;
  scale.domain = domain;
  return scale;
}

/** Round tick positions at a 1/2/5 step covering [lo, hi]. */
export function niceTicks(lo: number, hi: number, target = 5): number[] {
  if (!(hi > lo)) return [lo];
  const raw = (hi - lo) / target;
  const magnitude = 10 ** Math.floor(Math.log10(raw));
  const normalized = raw / magnitude;
  const step = (normalized <= 1 ? 1 : normalized <= 2 ? 2 : normalized <= 5 ? 5 : 10) * magnitude;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    ticks.push(Math.round(v / step) * step);
  }
  return ticks;
}

/** Two-color ramp used by the heatmaps, light for low values. */
export function rampColor(t: number): string {
  const clamp = Math.max(0, Math.min(1, t));
  const from = [247, 251, 255];
  const to = [8, 48, 107];
  const channel = (i: number) =>
    Math.round((from[i] as number) + clamp * ((to[i] as number) - (from[i] as number)));
  const hex = (v: number) => v.toString(16).padStart(2, "0");
  return `#${hex(channel(0))}${hex(channel(1))}${hex(channel(2))}`;
}

/** Fixed series palette. */
export const PALETTE = ["#1f6fb2", "#2c8a4b", "#c23b3b", "#8a5cb2", "#b2742c", "#4b8a8a"];

export function polylinePath(xs: number[], ys: number[]): string {
  return xs.map((x, i) => `${i === 0 ? "M" : "L"}${coord(x)},${coord(ys[i] as number)}`).join("");
}

/** Closed band between an upper and lower envelope. */
export function bandPath(xs: number[], upper: number[], lower: number[]): string {
  const forward = xs.map(
    (x, i) => `${i === 0 ? "M" : "L"}${coord(x)},${coord(upper[i] as number)}`,
  );
  const backward = [...xs.keys()]
    .reverse()
    .map((i) => `L${coord(xs[i] as number)},${coord(lower[i] as number)}`);
  return `${forward.join("")}${backward.join("")}Z`;
}

export function document(width: number, height: number, children: string[]): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">` +
    tag("rect", { x: 0, y: 0, width, height, fill: "#ffffff" }) +
    children.join("") +
    "</svg>"
  );
}
