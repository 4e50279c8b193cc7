/** Runtime validation of API payloads; a violation renders an error banner
 * instead of a broken grid. Returns a list of problems, empty when valid. */

import type { ProjectionPayload } from "./types.js";

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

export function validateProjection(payload: unknown): string[] {
  const errors: string[] = [];
  if (typeof payload !== "object" || payload === null) {
    return ["payload is not an object"];
  }
  const doc = payload as Record<string, unknown>;
  if (!Number.isInteger(doc.layer)) errors.push("layer must be an integer");
  const params = doc.params as Record<string, unknown> | undefined;
  if (typeof params !== "object" || params === null) {
    errors.push("params missing");
  } else {
    for (const key of ["perplexity", "iterations", "seed"]) {
      if (!isFiniteNumber(params[key])) errors.push(`params.${key} must be a number`);
    }
  }
  if (!Array.isArray(doc.points)) {
    errors.push("points must be an array");
    return errors;
  }
  doc.points.forEach((p, i) => {
    const point = p as Record<string, unknown>;
    if (!Number.isInteger(point.kernel) || (point.kernel as number) < 0) {
      errors.push(`points[${i}].kernel invalid`);
    }
    if (!Number.isInteger(point.class) || (point.class as number) < 0) {
      errors.push(`points[${i}].class invalid`);
    }
    if (!isFiniteNumber(point.x) || !isFiniteNumber(point.y)) {
      errors.push(`points[${i}] coordinates must be finite numbers`);
    }
  });
  if (doc.hints !== undefined) {
    if (!Array.isArray(doc.hints)) {
      errors.push("hints must be an array when present");
    } else {
      doc.hints.forEach((h, i) => {
        const hint = h as Record<string, unknown>;
        if (!Number.isInteger(hint.kernel)) errors.push(`hints[${i}].kernel invalid`);
        if (!isFiniteNumber(hint.hint)) errors.push(`hints[${i}].hint must be a number`);
      });
    }
  }
  return errors;
}

export function assertProjection(payload: unknown): ProjectionPayload {
  const errors = validateProjection(payload);
  if (errors.length > 0) {
    throw new Error(`projection payload invalid: ${errors.join("; ")}`);
  }
  return payload as ProjectionPayload;
}
