/** A fixture-backed fake of the session service, driven through fetch. */

import type { FetchLike } from "../src/api.js";

import sessionAwaiting from "./fixtures/session_awaiting.json";
import sessionAfterCommit from "./fixtures/session_after_commit.json";
import projection from "./fixtures/projection_layer1.json";
import jobStates from "./fixtures/commit_job_states.json";
import layerRecord from "./fixtures/layer1_record.json";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FakeServer {
  decisions: number[] | null = null;
  committed = false;
  jobCursor = 0;
  requests: string[] = [];
  /** when set, the next N fetches fail as if the network dropped */
  failNext = 0;

  fetch: FetchLike = async (input, init) => {
    if (this.failNext > 0) {
      this.failNext -= 1;
      throw new TypeError("network down");
    }
    const method = init?.method ?? "GET";
    const url = input.toString();
    this.requests.push(`${method} ${url}`);
    const sid = (sessionAwaiting as { id: string }).id;

    if (url.endsWith(`/api/sessions/${sid}`) && method === "GET") {
      return jsonResponse(this.committed ? sessionAfterCommit : sessionAwaiting);
    }
    if (url.endsWith("/layers/1/projection") && method === "GET") {
      return jsonResponse(projection);
    }
    if (url.endsWith("/layers/1/decisions") && method === "PUT") {
      const body = JSON.parse(String(init?.body ?? "{}")) as { remove: number[] };
      if (body.remove.length >= 8) {
        return jsonResponse({ detail: "cannot remove every kernel of a layer" }, 409);
      }
      this.decisions = [...body.remove].sort((a, b) => a - b);
      return jsonResponse({ layer: 1, remove: this.decisions });
    }
    if (url.endsWith("/layers/1/decisions") && method === "GET") {
      if (this.decisions === null) {
        return jsonResponse({ detail: "layer 1 has no decisions record yet" }, 409);
      }
      return jsonResponse({ layer: 1, remove: this.decisions });
    }
    if (url.endsWith("/layers/1/commit") && method === "POST") {
      this.jobCursor = 0;
      return jsonResponse((jobStates as unknown[])[0]);
    }
    if (url.includes("/jobs/") && method === "GET") {
      const states = jobStates as unknown[];
      const state = states[Math.min(this.jobCursor, states.length - 1)];
      this.jobCursor += 1;
      if (this.jobCursor >= states.length) this.committed = true;
      return jsonResponse(state);
    }
    if (url.endsWith("/layers/1/record") && method === "GET") {
      return jsonResponse(layerRecord);
    }
    if (url.endsWith("/api/sessions") && method === "GET") {
      return jsonResponse({ sessions: [this.committed ? sessionAfterCommit : sessionAwaiting] });
    }
    return jsonResponse({ detail: `unhandled ${method} ${url}` }, 404);
  };
}

export const SESSION_ID = (sessionAwaiting as { id: string }).id;
