/** Commit flow: poll the job, render the live trace, finish with the
 * recorded 40-epoch distance trace. */

import { describe, expect, it } from "vitest";
import { Window } from "happy-dom";

import { StudioApi } from "../src/api.js";
import { StudioApp } from "../src/app.js";
import { renderLossChart } from "../src/charts.js";
import { FakeServer, SESSION_ID } from "./helpers.js";
import jobStates from "./fixtures/commit_job_states.json";
import layerRecord from "./fixtures/layer1_record.json";

function makeApp(server: FakeServer) {
  const win = new Window({ url: "http://studio.local/" });
  const doc = win.document as unknown as Document;
  const root = doc.createElement("main");
  doc.body.appendChild(root as unknown as Node);
  const api = new StudioApi("http://studio.local", server.fetch);
  return { app: new StudioApp(doc, root as unknown as HTMLElement, api), doc, root, api };
}

describe("loss chart rendering", () => {
  it("renders one polyline point per epoch", () => {
    const win = new Window();
    const doc = win.document as unknown as Document;
    const trace = (layerRecord as { loss_trace: { per_epoch: number[] } }).loss_trace.per_epoch;
    expect(trace).toHaveLength(40);
    const svg = renderLossChart(doc, trace);
    expect(svg.getAttribute("data-points")).toBe("40");
    const polyline = svg.querySelector("polyline")!;
    expect(polyline.getAttribute("points")!.split(" ")).toHaveLength(40);
  });

  it("draws the pre-retraining reference line when given", () => {
    const win = new Window();
    const doc = win.document as unknown as Document;
    const svg = renderLossChart(doc, [3, 2, 1], { reference: 4 });
    expect(svg.querySelector("line.reference")).not.toBeNull();
  });
});

describe("commit flow", () => {
  it("polls to completion and shows the 40-point trace", async () => {
    const server = new FakeServer();
    const { app } = makeApp(server);
    await app.boot(SESSION_ID);
    app.toggle(1);
    app.toggle(4);
    await app.submitDecisions();

    const api = new StudioApi("http://studio.local", server.fetch);
    // drive pollJob without real timers
    const job = await api.commitLayer(SESSION_ID, 1);
    const seen: number[] = [];
    const done = await api.pollJob(SESSION_ID, job.id, (j) => seen.push(j.trace.length), {
      sleep: async () => {},
    });
    expect(done.status).toBe("succeeded");
    expect(done.trace).toHaveLength(40);
    expect(seen.at(-1)).toBe(40);
    // progress only ever grows
    const states = jobStates as { progress: number }[];
    for (let i = 1; i < states.length; i++) {
      expect(states[i]!.progress).toBeGreaterThanOrEqual(states[i - 1]!.progress);
    }
  });

  it("full commit flow through the app updates the trace panel and session", async () => {
    const server = new FakeServer();
    const { app, root } = makeApp(server);
    await app.boot(SESSION_ID);
    app.toggle(1);
    app.toggle(4);
    await app.submitDecisions();

    const api = (app as unknown as { api: StudioApi }).api;
    // swap the poll sleep for an immediate one via a thin wrapper
    const origPoll = api.pollJob.bind(api);
    api.pollJob = (sid, jid, onUpdate) =>
      origPoll(sid, jid, onUpdate, { sleep: async () => {} });
    const result = await app.commitCurrentLayer();
    expect(result?.status).toBe("succeeded");
    expect(app.state.trace).toHaveLength(40);
    expect(app.state.traceReference).toBeCloseTo(
      (layerRecord as { loss_trace: { initial: number } }).loss_trace.initial,
    );
    const chart = root.querySelector(".loss-chart");
    expect(chart).not.toBeNull();
    expect(chart!.getAttribute("data-points")).toBe("40");
    // the session view advanced to the next layer after the reload
    expect(app.state.session!.current_layer).toBe(2);
  });

  it("poll retries with backoff across network interruptions without duplicating the commit", async () => {
    const server = new FakeServer();
    const api = new StudioApi("http://studio.local", server.fetch);
    const job = await api.commitLayer(SESSION_ID, 1);
    const commitsBefore = server.requests.filter((r) => r.includes("commit")).length;
    server.failNext = 3;
    const waits: number[] = [];
    const done = await api.pollJob(SESSION_ID, job.id, () => {}, {
      intervalMs: 10,
      sleep: async (ms) => {
        waits.push(ms);
      },
    });
    expect(done.status).toBe("succeeded");
    const commitsAfter = server.requests.filter((r) => r.includes("commit")).length;
    expect(commitsAfter).toBe(commitsBefore);
    // backoff grew while the network was down
    expect(waits[1]).toBeGreaterThan(waits[0]!);
    expect(waits[2]).toBeGreaterThan(waits[1]!);
  });
});
