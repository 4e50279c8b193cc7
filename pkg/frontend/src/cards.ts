/** Kernel cards: one mini-scatterplot of c class points per kernel, plus the
 * separation hint and the expert's keep/remove decision. All card state is
 * rebuilt from API payloads; nothing here is authoritative. */

import type {
  DecisionState,
  ProjectionPayload,
  ProjectionPoint,
  ScoreRecord,
} from "./types.js";

export interface KernelCard {
  kernel: number;
  points: ProjectionPoint[];
  hint: number;
  score: number | null;
  decision: DecisionState;
  /** what a toggle away from "remove" returns to: undecided before the first
   * submit, keep once the server confirmed a decision set */
  resting: Exclude<DecisionState, "remove">;
}

export interface BuildOptions {
  decisions?: number[] | null;
  scores?: ScoreRecord[] | null;
}

export function buildCards(projection: ProjectionPayload, opts: BuildOptions = {}): KernelCard[] {
  const byKernel = new Map<number, ProjectionPoint[]>();
  for (const point of projection.points) {
    const list = byKernel.get(point.kernel) ?? [];
    list.push(point);
    byKernel.set(point.kernel, list);
  }
  const hints = new Map<number, number>();
  for (const h of projection.hints ?? []) hints.set(h.kernel, h.hint);
  const scores = new Map<number, number>();
  for (const s of opts.scores ?? []) scores.set(s.kernel, s.value);

  const removed = new Set(opts.decisions ?? []);
  const submitted = opts.decisions != null;
  const cards: KernelCard[] = [];
  for (const kernel of [...byKernel.keys()].sort((a, b) => a - b)) {
    const resting: KernelCard["resting"] = submitted ? "keep" : "undecided";
    cards.push({
      kernel,
      points: byKernel.get(kernel)!.slice().sort((a, b) => a.class - b.class),
      hint: hints.get(kernel) ?? Number.NaN,
      score: scores.has(kernel) ? scores.get(kernel)! : null,
      decision: removed.has(kernel) ? "remove" : resting,
      resting,
    });
  }
  return cards;
}

/** Remove candidates first: ascending separation hint, NaN hints last. */
export function sortByHint(cards: KernelCard[]): KernelCard[] {
  return cards.slice().sort((a, b) => {
    const ha = Number.isNaN(a.hint) ? Number.POSITIVE_INFINITY : a.hint;
    const hb = Number.isNaN(b.hint) ? Number.POSITIVE_INFINITY : b.hint;
    return ha - hb || a.kernel - b.kernel;
  });
}

export function sortByKernel(cards: KernelCard[]): KernelCard[] {
  return cards.slice().sort((a, b) => a.kernel - b.kernel);
}

/** Flip remove on/off; toggling twice restores the original state. */
export function toggleDecision(card: KernelCard): KernelCard {
  return {
    ...card,
    decision: card.decision === "remove" ? card.resting : "remove",
  };
}

export function removalSet(cards: KernelCard[]): number[] {
  return cards
    .filter((c) => c.decision === "remove")
    .map((c) => c.kernel)
    .sort((a, b) => a - b);
}

/** True when submitting would delete every kernel, which the server refuses;
 * the submit control stays disabled and explains why. */
export function removesFullLayer(cards: KernelCard[]): boolean {
  return cards.length > 0 && removalSet(cards).length === cards.length;
}

/** Shared coordinate frame of the layer's joint embedding. */
export function sharedExtent(points: ProjectionPoint[]): {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
} {
  if (points.length === 0) return { minX: -1, maxX: 1, minY: -1, maxY: 1 };
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const p of points) {
    minX = Math.min(minX, p.x);
    maxX = Math.max(maxX, p.x);
    minY = Math.min(minY, p.y);
    maxY = Math.max(maxY, p.y);
  }
  if (minX === maxX) {
    minX -= 1;
    maxX += 1;
  }
  if (minY === maxY) {
    minY -= 1;
    maxY += 1;
  }
  return { minX, maxX, minY, maxY };
}
