/** Dependency-free SVG string rendering for charts and the scene schematic. */

import { Schematic } from "./types.js";

export interface LineSpec {
  xs: number[];
  ys: number[];
  color: string;
  kind: "line" | "scatter";
  label?: string;
}

export interface ChartOptions {
  width?: number;
  height?: number;
  markerX?: number; // vertical rule, e.g. the warm-up boundary
  yMin?: number;
  yMax?: number;
}

const PAD = 28;

function extent(values: number[], fallback: [number, number]): [number, number] {
  if (values.length === 0) return fallback;
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  return lo === hi ? [lo - 0.5, hi + 0.5] : [lo, hi];
}

export function renderChart(series: LineSpec[], opts: ChartOptions = {}): string {
  const width = opts.width ?? 460;
  const height = opts.height ?? 180;
  const xs = series.flatMap((s) => s.xs);
  const ys = series.flatMap((s) => s.ys);
  const [x0, x1] = extent(xs, [0, 1]);
  const [autoY0, autoY1] = extent(ys, [0, 1]);
  const y0 = opts.yMin ?? autoY0;
  const y1 = opts.yMax ?? autoY1;
  const sx = (x: number) => PAD + ((x - x0) / (x1 - x0)) * (width - 2 * PAD);
  const sy = (y: number) => height - PAD - ((y - y0) / (y1 - y0)) * (height - 2 * PAD);

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" class="chart">`,
    `<rect x="${PAD}" y="${PAD}" width="${width - 2 * PAD}" height="${height - 2 * PAD}"` +
      ` fill="none" stroke="#ccc"/>`,
    `<text x="${PAD - 4}" y="${sy(y0)}" class="tick" text-anchor="end">${fmt(y0)}</text>`,
    `<text x="${PAD - 4}" y="${sy(y1) + 8}" class="tick" text-anchor="end">${fmt(y1)}</text>`,
    `<text x="${sx(x0)}" y="${height - PAD + 14}" class="tick">${fmt(x0)}</text>`,
    `<text x="${sx(x1)}" y="${height - PAD + 14}" class="tick" text-anchor="end">${fmt(x1)}</text>`,
  ];
  if (opts.markerX !== undefined && opts.markerX >= x0 && opts.markerX <= x1) {
    const mx = sx(opts.markerX).toFixed(2);
    parts.push(
      `<line x1="${mx}" y1="${PAD}" x2="${mx}" y2="${height - PAD}"` +
        ` stroke="#999" stroke-dasharray="4 3" data-role="warmup-boundary"/>`,
    );
  }
  for (const s of series) {
    if (s.kind === "scatter") {
      for (let i = 0; i < s.xs.length; i++) {
        parts.push(
          `<circle cx="${sx(s.xs[i]!).toFixed(2)}" cy="${sy(s.ys[i]!).toFixed(2)}"` +
            ` r="2.5" fill="${s.color}"/>`,
        );
      }
    } else if (s.xs.length > 0) {
      const d = s.xs
        .map((x, i) => `${i === 0 ? "M" : "L"}${sx(x).toFixed(2)},${sy(s.ys[i]!).toFixed(2)}`)
        .join(" ");
      parts.push(`<path d="${d}" fill="none" stroke="${s.color}" stroke-width="1.5"/>`);
    }
  }
  parts.push("</svg>");
  return parts.join("");
}

function fmt(v: number): string {
  return Math.abs(v) >= 100 ? v.toFixed(0) : v.toPrecision(3);
}

const FINGERS = ["thumb", "index", "middle", "ring"];

export function renderSchematic(s: Schematic, size = 320): string {
  const [bx0, by0] = [s.box_lo[0]!, s.box_lo[1]!];
  const [bx1, by1] = [s.box_hi[0]!, s.box_hi[1]!];
  const scale = (size - 2 * PAD) / Math.max(bx1 - bx0, by1 - by0);
  const px = (x: number) => PAD + (x - bx0) * scale;
  // Flip y so +y points up on screen.
  const py = (y: number) => size - PAD - (y - by0) * scale;

  const [ox, oy] = [s.object_center[0]!, s.object_center[1]!];
  const [cx, cy] = [s.contact[0]!, s.contact[1]!];
  const [dx, dy] = [s.wrist_dir[0]!, s.wrist_dir[1]!];
  const arrow = 0.06; // meters
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${size} ${size}" class="schematic">`,
    `<rect x="${px(bx0)}" y="${py(by1)}" width="${(bx1 - bx0) * scale}"` +
      ` height="${(by1 - by0) * scale}" fill="#fafafa" stroke="#888" data-role="workspace"/>`,
    `<circle cx="${px(ox)}" cy="${py(oy)}" r="${s.object_radius * scale}"` +
      ` fill="#cfe3ff" stroke="#4a7dd0" data-role="object"/>`,
    `<line x1="${px(cx)}" y1="${py(cy)}" x2="${px(cx + dx * arrow)}"` +
      ` y2="${py(cy + dy * arrow)}" stroke="#d2691e" stroke-width="2" data-role="wrist-arrow"/>`,
    `<circle cx="${px(cx)}" cy="${py(cy)}" r="4" fill="#c0392b" data-role="contact"/>`,
  ];
  s.closures.forEach((fraction, i) => {
    const barX = PAD + i * 46;
    const barH = 40;
    parts.push(
      `<rect x="${barX}" y="${size - 20 - barH}" width="16" height="${barH}"` +
        ` fill="#eee" stroke="#999"/>`,
      `<rect x="${barX}" y="${size - 20 - barH * fraction}" width="16"` +
        ` height="${barH * fraction}" fill="#4a7dd0" data-role="closure-${FINGERS[i]}"/>`,
      `<text x="${barX}" y="${size - 6}" class="tick">${FINGERS[i]}</text>`,
    );
  });
  parts.push("</svg>");
  return parts.join("");
}
