/** Live chart model: three SVG polyline paths plus the immersion
 * marker, built from whatever frames have arrived so far. Pure string
 * output so the renderer is a one-line innerHTML update and the whole
 * thing is testable without a DOM.
 */

import type { Phase } from "./types.js";

export interface ChartFrame {
  seq: number;
  mv: [number, number, number];
  phase: Phase;
}

export interface ChartModel {
  /** one "M x,y L x,y ..." path per channel */
  paths: [string, string, string];
  /** x position of the first sampling frame, null while still in baseline */
  immersionX: number | null;
  yMin: number;
  yMax: number;
  pointCount: number;
}

export interface ChartOptions {
  width: number;
  height: number;
  /** frames the finished record will hold; keeps the x scale stable live */
  expectedFrames?: number;
}

export function chartModel(frames: ChartFrame[], options: ChartOptions): ChartModel {
  const { width, height } = options;
  if (frames.length === 0) {
    return { paths: ["", "", ""], immersionX: null, yMin: 0, yMax: 1, pointCount: 0 };
  }

  const total = Math.max(options.expectedFrames ?? frames.length, frames.length);
  const xOf = (seq: number) => (total > 1 ? (seq / (total - 1)) * width : 0);

  let lo = Infinity;
  let hi = -Infinity;
  for (const f of frames) {
    for (const v of f.mv) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (hi - lo < 1e-9) {
    lo -= 1;
    hi += 1;
  }
  const span = hi - lo;
  lo -= 0.05 * span;
  hi += 0.05 * span;
  const yOf = (v: number) => height - ((v - lo) / (hi - lo)) * height;

  const parts: string[][] = [[], [], []];
  let immersionX: number | null = null;
  for (const f of frames) {
    if (immersionX === null && f.phase === "sampling") immersionX = xOf(f.seq);
    for (let c = 0; c < 3; c++) {
      const cmd = parts[c]!.length === 0 ? "M" : "L";
      parts[c]!.push(`${cmd}${round2(xOf(f.seq))},${round2(yOf(f.mv[c] as number))}`);
    }
  }

  return {
    paths: [parts[0]!.join(" "), parts[1]!.join(" "), parts[2]!.join(" ")],
    immersionX,
    yMin: lo,
    yMax: hi,
    pointCount: frames.length,
  };
}

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}
