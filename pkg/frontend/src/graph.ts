/** Similarity graph: the classified measurement plus every training
 * record, with an edge per proximity score. Proximities come from
 * shared-leaf counts, so most pairs sit near zero; edges under the
 * display threshold are pruned entirely rather than drawn hairline.
 *
 * The layout is a plain force simulation: springs on edges with rest
 * length shrinking as proximity grows, inverse-square repulsion
 * between all nodes, a light centering pull, and a linearly cooled
 * step over a fixed iteration count. Seeded initial placement and the
 * fixed cap make the result a pure function of (graph, options).
 */

import type { SimilarityEntry } from "./types.js";

export const EDGE_THRESHOLD = 0.05;

export interface GraphNode {
  id: string;
  label: string;
  isTest: boolean;
}

export interface GraphEdge {
  /** indices into nodes */
  from: number;
  to: number;
  weight: number;
}

export interface SimilarityGraph {
  nodes: GraphNode[];
  edges: GraphEdge[];
}

/** null means "omit the graph" (nothing to show, render a notice). */
export function buildGraph(
  testRecordId: string,
  similarities: SimilarityEntry[],
  threshold: number = EDGE_THRESHOLD,
): SimilarityGraph | null {
  if (similarities.length === 0) return null;
  const nodes: GraphNode[] = [
    { id: testRecordId, label: "this measurement", isTest: true },
    ...similarities.map((s) => ({ id: s.record_id, label: s.label, isTest: false })),
  ];
  const edges: GraphEdge[] = [];
  similarities.forEach((s, i) => {
    if (s.proximity >= threshold) {
      edges.push({ from: 0, to: i + 1, weight: s.proximity });
    }
  });
  return { nodes, edges };
}

export function isIsolated(graph: SimilarityGraph, nodeIndex: number): boolean {
  return graph.edges.every((e) => e.from !== nodeIndex && e.to !== nodeIndex);
}

/** Deterministic uint32-state generator for layout seeding. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface LayoutOptions {
  width: number;
  height: number;
  seed: number;
  iterations?: number;
}

export interface LayoutPoint {
  x: number;
  y: number;
}

const REST_BASE = 110;
const REPULSION = 1800;
const SPRING = 0.08;
const CENTERING = 0.006;

export function forceLayout(graph: SimilarityGraph, options: LayoutOptions): LayoutPoint[] {
  const { width, height, seed } = options;
  const iterations = options.iterations ?? 300;
  const n = graph.nodes.length;
  const rng = mulberry32(seed);

  const x = new Float64Array(n);
  const y = new Float64Array(n);
  const ringRadius = 0.35 * Math.min(width, height);
  for (let i = 0; i < n; i++) {
    const angle = (2 * Math.PI * i) / n + 0.5 * rng();
    const radius = ringRadius * (0.8 + 0.4 * rng());
    x[i] = radius * Math.cos(angle);
    y[i] = radius * Math.sin(angle);
  }

  const fx = new Float64Array(n);
  const fy = new Float64Array(n);
  for (let it = 0; it < iterations; it++) {
    fx.fill(0);
    fy.fill(0);

    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        let dx = x[i]! - x[j]!;
        let dy = y[i]! - y[j]!;
        let d = Math.hypot(dx, dy);
        if (d < 1e-3) {
          // coincident nodes get a deterministic nudge apart
          dx = 1e-3 * (1 + i);
          dy = 1e-3 * (1 + j);
          d = Math.hypot(dx, dy);
        }
        const push = REPULSION / (d * d);
        fx[i]! += (push * dx) / d;
        fy[i]! += (push * dy) / d;
        fx[j]! -= (push * dx) / d;
        fy[j]! -= (push * dy) / d;
      }
    }

    for (const edge of graph.edges) {
      const i = edge.from;
      const j = edge.to;
      const dx = x[j]! - x[i]!;
      const dy = y[j]! - y[i]!;
      const d = Math.max(Math.hypot(dx, dy), 1e-3);
      const rest = REST_BASE * (1.05 - edge.weight);
      const pull = SPRING * edge.weight * (d - rest);
      fx[i]! += (pull * dx) / d;
      fy[i]! += (pull * dy) / d;
      fx[j]! -= (pull * dx) / d;
      fy[j]! -= (pull * dy) / d;
    }

    const step = 1 - it / iterations;
    for (let i = 0; i < n; i++) {
      fx[i]! -= CENTERING * x[i]!;
      fy[i]! -= CENTERING * y[i]!;
      const move = Math.hypot(fx[i]!, fy[i]!);
      const cap = 12 * step + 0.5;
      const scale = move > cap ? cap / move : 1;
      x[i]! += fx[i]! * scale * step;
      y[i]! += fy[i]! * scale * step;
    }
  }

  // center on the canvas and keep a margin
  const pad = 24;
  let cx = 0;
  let cy = 0;
  for (let i = 0; i < n; i++) {
    cx += x[i]! / n;
    cy += y[i]! / n;
  }
  const points: LayoutPoint[] = [];
  for (let i = 0; i < n; i++) {
    points.push({
      x: clamp(x[i]! - cx + width / 2, pad, width - pad),
      y: clamp(y[i]! - cy + height / 2, pad, height - pad),
    });
  }
  return points;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

export function distance(a: LayoutPoint, b: LayoutPoint): number {
  return Math.hypot(a.x - b.x, a.y - b.y);
}
