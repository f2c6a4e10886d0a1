import type { RoundRecord } from "./types.js";

// Hand-rolled SVG line chart for the per-round history: accuracy against the
// left axis (fixed to [0,1]) and batch entropy against the right axis. Every
// plotted value comes straight from a RoundRecord; there is no smoothing,
// resampling, or interpolation — one record renders as one dot.

export interface ChartSpec {
  width: number;
  height: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
}

export const DEFAULT_SPEC: ChartSpec = {
  width: 640,
  height: 280,
  padLeft: 42,
  padRight: 46,
  padTop: 14,
  padBottom: 28,
};

export interface Point {
  x: number;
  y: number;
  round: number;
  value: number;
}

export interface ChartGeometry {
  spec: ChartSpec;
  accuracy: Point[];
  entropy: Point[];
  xTicks: { x: number; label: string }[];
  leftTicks: { y: number; label: string }[];
  rightTicks: { y: number; label: string }[];
}

export function scaleLinear(
  d0: number,
  d1: number,
  r0: number,
  r1: number,
): (v: number) => number {
  const span = d1 - d0;
  if (span === 0) return () => (r0 + r1) / 2;
  return (v) => r0 + ((v - d0) / span) * (r1 - r0);
}

const clamp01 = (v: number) => Math.min(1, Math.max(0, v));

export function chartGeometry(
  records: RoundRecord[],
  spec: ChartSpec = DEFAULT_SPEC,
): ChartGeometry {
  const x0 = spec.padLeft;
  const x1 = spec.width - spec.padRight;
  const y0 = spec.height - spec.padBottom; // svg y grows downward
  const y1 = spec.padTop;

  const rounds = records.map((r) => r.round);
  let rLo = Math.min(...rounds);
  let rHi = Math.max(...rounds);
  if (records.length === 0) {
    rLo = 0;
    rHi = 1;
  } else if (rLo === rHi) {
    // a single round still needs a nondegenerate domain to land mid-plot
    rLo -= 0.5;
    rHi += 0.5;
  }
  const sx = scaleLinear(rLo, rHi, x0, x1);
  const syAcc = scaleLinear(0, 1, y0, y1); // axis pinned to [0,1]

  const accuracy = records.map((r) => ({
    x: sx(r.round),
    y: syAcc(clamp01(r.accuracy)),
    round: r.round,
    value: r.accuracy,
  }));

  const withEntropy = records.filter((r) => r.batch_entropy !== null);
  const entVals = withEntropy.map((r) => r.batch_entropy as number);
  let entropy: Point[] = [];
  const rightTicks: { y: number; label: string }[] = [];
  if (withEntropy.length > 0) {
    let eLo = Math.min(...entVals);
    let eHi = Math.max(...entVals);
    if (eLo === eHi) {
      eLo -= 0.5;
      eHi += 0.5;
    }
    const syEnt = scaleLinear(eLo, eHi, y0, y1);
    entropy = withEntropy.map((r) => ({
      x: sx(r.round),
      y: syEnt(r.batch_entropy as number),
      round: r.round,
      value: r.batch_entropy as number,
    }));
    for (const frac of [0, 0.5, 1]) {
      const v = eLo + frac * (eHi - eLo);
      rightTicks.push({ y: syEnt(v), label: v.toFixed(1) });
    }
  }

  const xTicks = [];
  for (let r = Math.ceil(rLo); r <= Math.floor(rHi); r++) {
    xTicks.push({ x: sx(r), label: String(r) });
  }
  const leftTicks = [0, 0.25, 0.5, 0.75, 1].map((v) => ({
    y: syAcc(v),
    label: v.toFixed(2),
  }));

  return { spec, accuracy, entropy, xTicks, leftTicks, rightTicks };
}

const SVG_NS = "http://www.w3.org/2000/svg";

function el(name: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function text(x: number, y: number, content: string, anchor: string): SVGElement {
  const t = el("text", {
    x: String(x),
    y: String(y),
    "text-anchor": anchor,
    "font-size": "10",
    fill: "#6b7280",
  });
  t.textContent = content;
  return t;
}

function series(points: Point[], color: string, cls: string): SVGElement[] {
  const nodes: SVGElement[] = [];
  if (points.length >= 2) {
    nodes.push(
      el("polyline", {
        points: points.map((p) => `${p.x},${p.y}`).join(" "),
        fill: "none",
        stroke: color,
        "stroke-width": "1.6",
        class: `${cls}-line`,
      }),
    );
  }
  for (const p of points) {
    nodes.push(
      el("circle", {
        cx: String(p.x),
        cy: String(p.y),
        r: "3",
        fill: color,
        class: `${cls}-pt`,
        "data-round": String(p.round),
        "data-value": String(p.value),
      }),
    );
  }
  return nodes;
}

export const ACCURACY_COLOR = "#2458c5";
export const ENTROPY_COLOR = "#c57824";

/** Build the chart as a detached <svg> element from server records. */
export function metricsChart(
  records: RoundRecord[],
  spec: ChartSpec = DEFAULT_SPEC,
): SVGSVGElement {
  const g = chartGeometry(records, spec);
  const svg = el("svg", {
    viewBox: `0 0 ${spec.width} ${spec.height}`,
    class: "chart",
    role: "img",
  }) as SVGSVGElement;

  const x0 = spec.padLeft;
  const x1 = spec.width - spec.padRight;
  const yBase = spec.height - spec.padBottom;
  svg.appendChild(
    el("line", { x1: String(x0), y1: String(yBase), x2: String(x1), y2: String(yBase), stroke: "#ccc" }),
  );
  svg.appendChild(
    el("line", { x1: String(x0), y1: String(spec.padTop), x2: String(x0), y2: String(yBase), stroke: "#ccc" }),
  );
  for (const tick of g.leftTicks) {
    svg.appendChild(
      el("line", { x1: String(x0), y1: String(tick.y), x2: String(x1), y2: String(tick.y), stroke: "#efefef" }),
    );
    svg.appendChild(text(x0 - 5, tick.y + 3, tick.label, "end"));
  }
  for (const tick of g.rightTicks) {
    svg.appendChild(text(x1 + 5, tick.y + 3, tick.label, "start"));
  }
  for (const tick of g.xTicks) {
    svg.appendChild(text(tick.x, yBase + 14, tick.label, "middle"));
  }

  for (const node of series(g.entropy, ENTROPY_COLOR, "entropy")) svg.appendChild(node);
  for (const node of series(g.accuracy, ACCURACY_COLOR, "accuracy")) svg.appendChild(node);
  return svg;
}
