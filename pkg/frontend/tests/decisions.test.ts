/** Decision round trip against the recorded API shapes: toggle in the grid,
 * submit, reload the page, and the server's stored set drives the view. */

import { describe, expect, it } from "vitest";
import { Window } from "happy-dom";

import { StudioApi } from "../src/api.js";
import { StudioApp } from "../src/app.js";
import { FakeServer, SESSION_ID } from "./helpers.js";

function makeApp(server: FakeServer) {
  const win = new Window({ url: "http://studio.local/" });
  const doc = win.document as unknown as Document;
  const root = doc.createElement("main");
  doc.body.appendChild(root as unknown as Node);
  const api = new StudioApi("http://studio.local", server.fetch);
  return { app: new StudioApp(doc, root as unknown as HTMLElement, api), doc, root };
}

describe("projection grid rendering", () => {
  it("renders 8 cards of 3 points each from the recorded payload", async () => {
    const server = new FakeServer();
    const { app, root } = makeApp(server);
    await app.boot(SESSION_ID);
    const cards = root.querySelectorAll(".kernel-card");
    expect(cards.length).toBe(8);
    for (const card of Array.from(cards)) {
      expect(card.querySelectorAll("circle").length).toBe(3);
    }
  });

  it("shows an error banner on a schema violation instead of crashing", async () => {
    const server = new FakeServer();
    const brokenFetch: typeof server.fetch = async (input, init) => {
      const url = input.toString();
      if (url.endsWith("/layers/1/projection")) {
        return new Response(JSON.stringify({ layer: 1, points: "garbage" }), {
          status: 200,
          headers: { "Content-Type": "application/json" },
        });
      }
      return server.fetch(input, init);
    };
    const win = new Window({ url: "http://studio.local/" });
    const doc = win.document as unknown as Document;
    const root = doc.createElement("main");
    const api = new StudioApi("http://studio.local", brokenFetch);
    const app = new StudioApp(doc, root as unknown as HTMLElement, api);
    await app.boot(SESSION_ID);
    const banner = root.querySelector(".banner.error");
    expect(banner).not.toBeNull();
    expect(banner!.textContent).toContain("validation");
    expect(root.querySelectorAll(".kernel-card").length).toBe(0);
  });

  it("renders an empty-state message for an empty payload", async () => {
    const server = new FakeServer();
    const emptyFetch: typeof server.fetch = async (input, init) => {
      const url = input.toString();
      if (url.endsWith("/layers/1/projection")) {
        return new Response(
          JSON.stringify({
            layer: 1,
            params: { perplexity: 5, iterations: 10, seed: 0, final_kl: 0 },
            points: [],
            hints: [],
          }),
          { status: 200, headers: { "Content-Type": "application/json" } },
        );
      }
      return server.fetch(input, init);
    };
    const win = new Window({ url: "http://studio.local/" });
    const doc = win.document as unknown as Document;
    const root = doc.createElement("main");
    const api = new StudioApi("http://studio.local", emptyFetch);
    const app = new StudioApp(doc, root as unknown as HTMLElement, api);
    await app.boot(SESSION_ID);
    expect(root.querySelector(".empty-state")).not.toBeNull();
  });
});

describe("objective score overlay", () => {
  it("stays hidden by default and toggles on when scores exist", async () => {
    const server = new FakeServer();
    const withScores: typeof server.fetch = async (input, init) => {
      const url = input.toString();
      if (url.endsWith("/layers/1/scores") && (init?.method ?? "GET") === "GET") {
        return new Response(
          JSON.stringify({
            layer: 1,
            criterion: "objective_loss_delta",
            scores: Array.from({ length: 8 }, (_, k) => ({
              layer: 1, kernel: k, criterion: "objective_loss_delta", value: k / 100,
            })),
          }),
          { status: 200, headers: { "Content-Type": "application/json" } },
        );
      }
      return server.fetch(input, init);
    };
    const win = new Window({ url: "http://studio.local/" });
    const doc = win.document as unknown as Document;
    const root = doc.createElement("main");
    const api = new StudioApi("http://studio.local", withScores);
    const app = new StudioApp(doc, root as unknown as HTMLElement, api);
    await app.boot(SESSION_ID);
    expect(root.querySelectorAll(".card-score").length).toBe(0); // off by default
    const toggle = root.querySelector(".score-toggle") as HTMLButtonElement;
    expect(toggle).not.toBeNull();
    toggle.click();
    expect(root.querySelectorAll(".card-score").length).toBe(8);
  });

  it("offers no toggle when the layer has no scores", async () => {
    const server = new FakeServer();
    const { app, root } = makeApp(server);
    await app.boot(SESSION_ID);
    expect(root.querySelector(".score-toggle")).toBeNull();
  });
});

describe("decision round trip", () => {
  it("toggle -> submit -> reload restores the state from the server", async () => {
    const server = new FakeServer();
    const first = makeApp(server);
    await first.app.boot(SESSION_ID);
    first.app.toggle(2);
    first.app.toggle(6);
    expect(first.app.state.cards.filter((c) => c.decision === "remove").map((c) => c.kernel))
      .toEqual([2, 6]);
    await first.app.submitDecisions();
    expect(server.decisions).toEqual([2, 6]);

    // a brand new page: all view state must come back from the server
    const second = makeApp(server);
    await second.app.boot(SESSION_ID);
    const restored = second.app.state.cards;
    expect(restored.filter((c) => c.decision === "remove").map((c) => c.kernel)).toEqual([2, 6]);
    expect(restored.filter((c) => c.decision === "keep")).toHaveLength(6);
  });

  it("toggling twice restores the rendered state", async () => {
    const server = new FakeServer();
    const { app } = makeApp(server);
    await app.boot(SESSION_ID);
    const before = app.state.cards.map((c) => c.decision);
    app.toggle(3);
    app.toggle(3);
    expect(app.state.cards.map((c) => c.decision)).toEqual(before);
  });

  it("disables submit while every kernel is marked for removal", async () => {
    const server = new FakeServer();
    const { app, root } = makeApp(server);
    await app.boot(SESSION_ID);
    for (let k = 0; k < 8; k++) app.toggle(k);
    const submit = root.querySelector(".submit-decisions") as HTMLButtonElement;
    expect(submit.disabled).toBe(true);
    expect(root.querySelector(".guard-note")).not.toBeNull();
    await app.submitDecisions(); // guarded: no request reaches the server
    expect(server.decisions).toBeNull();
  });
});
