import type { BatchItem } from "./types.js";

// Feature-vector payloads have no natural picture, so they render as
// horizontal bar glyphs: one row per dimension, signed bars around a center
// line, all rows sharing one symmetric scale so the three cards of a triplet
// are visually comparable.

const SVG_NS = "http://www.w3.org/2000/svg";

export interface BarGeometry {
  /** per-dimension bar: x offset and width in pixels, sign of the value */
  bars: { x: number; width: number; negative: boolean }[];
  center: number;
  rowHeight: number;
  width: number;
  height: number;
}

export function barGeometry(
  vec: number[],
  scaleMax: number,
  width = 120,
  rowHeight = 8,
): BarGeometry {
  const center = width / 2;
  const half = center - 2;
  const denom = scaleMax > 0 ? scaleMax : 1;
  const bars = vec.map((v) => {
    const w = Math.min(Math.abs(v) / denom, 1) * half;
    return { x: v < 0 ? center - w : center, width: w, negative: v < 0 };
  });
  return { bars, center, rowHeight, width, height: vec.length * rowHeight };
}

export function featureBars(vec: number[], scaleMax?: number): SVGSVGElement {
  const maxAbs = scaleMax ?? Math.max(...vec.map(Math.abs), 0);
  const geo = barGeometry(vec, maxAbs);
  const svg = document.createElementNS(SVG_NS, "svg") as SVGSVGElement;
  svg.setAttribute("viewBox", `0 0 ${geo.width} ${geo.height}`);
  svg.setAttribute("width", String(geo.width));
  svg.setAttribute("height", String(geo.height));
  svg.setAttribute("class", "feature-bars");
  const axis = document.createElementNS(SVG_NS, "line");
  axis.setAttribute("x1", String(geo.center));
  axis.setAttribute("x2", String(geo.center));
  axis.setAttribute("y1", "0");
  axis.setAttribute("y2", String(geo.height));
  axis.setAttribute("stroke", "#d5d5d5");
  svg.appendChild(axis);
  geo.bars.forEach((bar, row) => {
    const rect = document.createElementNS(SVG_NS, "rect");
    rect.setAttribute("x", String(bar.x));
    rect.setAttribute("y", String(row * geo.rowHeight + 1));
    rect.setAttribute("width", String(bar.width));
    rect.setAttribute("height", String(geo.rowHeight - 2));
    rect.setAttribute("fill", bar.negative ? "#b0653a" : "#3a72b0");
    svg.appendChild(rect);
  });
  return svg;
}

export type Role = "i" | "j" | "k";

/**
 * Render one card body for a triplet role. Dispatch is purely on which
 * payload kinds the item carries (image URL beats bars); the values
 * themselves are never inspected.
 */
export function renderPayload(item: BatchItem, role: Role): HTMLElement {
  const box = document.createElement("div");
  box.className = "payload";
  if (item.images) {
    const img = document.createElement("img");
    img.src = item.images[role];
    img.alt = item.labels ? item.labels[role] : `object ${item[role]}`;
    box.appendChild(img);
  } else {
    // shared scale across the triplet keeps the three glyphs comparable
    const all = [...item.payloads.i, ...item.payloads.j, ...item.payloads.k];
    const scaleMax = Math.max(...all.map(Math.abs), 0);
    box.appendChild(featureBars(item.payloads[role], scaleMax));
  }
  const label = document.createElement("div");
  label.className = "obj-label";
  label.textContent = item.labels ? item.labels[role] : `#${item[role]}`;
  box.appendChild(label);
  return box;
}
