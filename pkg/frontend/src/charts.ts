/** Dependency-free SVG scatterplots and loss charts. */

import type { ProjectionPoint } from "./types.js";
import type { KernelCard } from "./cards.js";
import { sharedExtent } from "./cards.js";

const SVG_NS = "http://www.w3.org/2000/svg";

/** Colorblind-safe palette (Tol muted), up to 10 classes. */
export const CLASS_COLORS = [
  "#332288", "#88CCEE", "#44AA99", "#117733", "#999933",
  "#DDCC77", "#CC6677", "#882255", "#AA4499", "#444444",
];

export function classColor(classIndex: number): string {
  return CLASS_COLORS[classIndex % CLASS_COLORS.length]!;
}

export interface Frame {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

export interface ScatterOptions {
  width?: number;
  height?: number;
  radius?: number;
  /** shared layer frame; omit to auto-zoom onto the card's own points */
  frame?: Frame | null;
}

export function renderScatter(
  doc: Document,
  points: ProjectionPoint[],
  opts: ScatterOptions = {},
): SVGSVGElement {
  const width = opts.width ?? 120;
  const height = opts.height ?? 120;
  const radius = opts.radius ?? 4;
  const frame = opts.frame ?? sharedExtent(points);
  const svg = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "scatter");
  const pad = radius + 2;
  const sx = (x: number) =>
    pad + ((x - frame.minX) / (frame.maxX - frame.minX)) * (width - 2 * pad);
  const sy = (y: number) =>
    height - pad - ((y - frame.minY) / (frame.maxY - frame.minY)) * (height - 2 * pad);
  for (const p of points) {
    const c = doc.createElementNS(SVG_NS, "circle");
    c.setAttribute("cx", sx(p.x).toFixed(2));
    c.setAttribute("cy", sy(p.y).toFixed(2));
    c.setAttribute("r", String(radius));
    c.setAttribute("fill", classColor(p.class));
    c.setAttribute("data-class", String(p.class));
    c.setAttribute("data-kernel", String(p.kernel));
    svg.appendChild(c);
  }
  return svg;
}

export interface LossChartOptions {
  width?: number;
  height?: number;
  /** value drawn as a dashed reference line (e.g. the pre-retraining distance) */
  reference?: number | null;
  label?: string;
}

export function renderLossChart(
  doc: Document,
  values: number[],
  opts: LossChartOptions = {},
): SVGSVGElement {
  const width = opts.width ?? 420;
  const height = opts.height ?? 140;
  const pad = 6;
  const svg = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "loss-chart");
  svg.setAttribute("data-points", String(values.length));
  if (values.length === 0) return svg;
  const all = opts.reference != null ? [...values, opts.reference] : values;
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const top = hi === lo ? hi + 1 : hi;
  const bottom = hi === lo ? lo - 1 : lo;
  const sx = (i: number) =>
    pad + (values.length === 1 ? 0 : (i / (values.length - 1)) * (width - 2 * pad));
  const sy = (v: number) => height - pad - ((v - bottom) / (top - bottom)) * (height - 2 * pad);
  if (opts.reference != null) {
    const ref = doc.createElementNS(SVG_NS, "line");
    ref.setAttribute("x1", String(pad));
    ref.setAttribute("x2", String(width - pad));
    ref.setAttribute("y1", sy(opts.reference).toFixed(2));
    ref.setAttribute("y2", sy(opts.reference).toFixed(2));
    ref.setAttribute("class", "reference");
    ref.setAttribute("stroke-dasharray", "4 3");
    ref.setAttribute("stroke", "#999");
    svg.appendChild(ref);
  }
  const line = doc.createElementNS(SVG_NS, "polyline");
  line.setAttribute(
    "points",
    values.map((v, i) => `${sx(i).toFixed(2)},${sy(v).toFixed(2)}`).join(" "),
  );
  line.setAttribute("fill", "none");
  line.setAttribute("stroke", "#1f6f8b");
  line.setAttribute("stroke-width", "1.5");
  svg.appendChild(line);
  return svg;
}
