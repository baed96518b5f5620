import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { initApp, type AppHandle } from "../src/app.js";
import { bolaGraphDoc } from "./bola.js";
import { installFakeBackend, type FakeBackend } from "./fakeBackend.js";

let backend: FakeBackend | null = null;
let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = "";
  root = document.createElement("div");
  document.body.appendChild(root);
});

afterEach(() => {
  backend?.restore();
  backend = null;
});

const smallGraph = { nodes: [{ id: "X" }, { id: "Y" }], edges: [{ source: "X", target: "Y", label: "links" }] };

async function mountApp(): Promise<AppHandle> {
  const handle = initApp(root, new ApiClient());
  await handle.ready;
  return handle;
}

describe("chat round trip", () => {
  it("shows the answer and the turn's graph after a query", async () => {
    backend = installFakeBackend({ queries: [{ answer: "BOLA answer", graph: bolaGraphDoc() }] });
    const app = await mountApp();
    await app.submitQuestion("What is BOLA?");

    const turns = root.querySelectorAll(".turn");
    expect(turns).toHaveLength(1);
    expect(turns[0].textContent).toContain("What is BOLA?");
    expect(turns[0].textContent).toContain("BOLA answer");
    expect(root.querySelectorAll(".graph-view .node")).toHaveLength(14);
    expect(root.querySelectorAll(".graph-view .edge-label")).toHaveLength(10);
  });

  it("recalls each turn's graph when the turn is selected", async () => {
    backend = installFakeBackend({
      queries: [
        { answer: "first answer", graph: bolaGraphDoc() },
        { answer: "second answer", graph: smallGraph },
      ],
    });
    const app = await mountApp();
    await app.submitQuestion("first?");
    await app.submitQuestion("second?");

    expect(root.querySelectorAll(".turn")).toHaveLength(2);
    expect(root.querySelectorAll(".graph-view .node")).toHaveLength(2);

    (root.querySelector('[data-turn="0"]') as HTMLElement).click();
    expect(root.querySelectorAll(".graph-view .node")).toHaveLength(14);
    expect(app.state.selectedTurn).toBe(0);

    app.selectTurn(1);
    expect(root.querySelectorAll(".graph-view .node")).toHaveLength(2);
  });

  it("disables input while a query is in flight", async () => {
    backend = installFakeBackend({ queries: [{ answer: "slow answer" }] });
    const app = await mountApp();
    const input = root.querySelector<HTMLInputElement>(".question-input")!;
    input.value = "takes a while?";
    const pending = app.submitQuestion(input.value);
    expect(input.disabled).toBe(true);
    await pending;
    expect(input.disabled).toBe(false);
    expect(input.value).toBe("");
  });

  it("submits through the form like a user", async () => {
    backend = installFakeBackend({ queries: [{ answer: "form answer" }] });
    await mountApp();
    const input = root.querySelector<HTMLInputElement>(".question-input")!;
    const form = root.querySelector<HTMLFormElement>(".ask-form")!;
    input.value = "via the form?";
    form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(root.querySelectorAll(".turn")).toHaveLength(1);
    expect(root.textContent).toContain("form answer");
  });

  it("surfaces provider failures inline and re-enables input", async () => {
    backend = installFakeBackend({
      failQueryWith: { status: 502, code: "provider_error", message: "model fell over" },
    });
    const app = await mountApp();
    await app.submitQuestion("doomed?");

    const errorBox = root.querySelector<HTMLElement>(".chat-error")!;
    expect(errorBox.hidden).toBe(false);
    expect(errorBox.textContent).toContain("provider_error");
    expect(root.querySelector<HTMLInputElement>(".question-input")!.disabled).toBe(false);
    expect(root.querySelectorAll(".turn")).toHaveLength(0);
    expect(root.querySelector(".retry")).not.toBeNull();
  });
});

describe("model switching and history", () => {
  it("tags later answers with the newly selected model", async () => {
    backend = installFakeBackend({ queries: [{ answer: "a1" }, { answer: "a2" }] });
    const app = await mountApp();
    await app.submitQuestion("one?");
    await app.changeModel("openai:gpt-4o");
    await app.submitQuestion("two?");

    const metas = Array.from(root.querySelectorAll(".turn .meta")).map((m) => m.textContent);
    expect(metas[0]).toContain("mock:scripted");
    expect(metas[1]).toContain("openai:gpt-4o");
    const modelCall = backend.calls.find((c) => c.url.endsWith("/api/model"))!;
    expect(modelCall.body).toEqual({ session_id: "sess-1", model: "openai:gpt-4o" });
  });

  it("clears the chat only after the server confirms", async () => {
    backend = installFakeBackend({ queries: [{ answer: "a1" }] });
    const app = await mountApp();
    await app.submitQuestion("one?");
    expect(root.querySelectorAll(".turn")).toHaveLength(1);

    await app.clearHistory();
    expect(root.querySelectorAll(".turn")).toHaveLength(0);
    expect(backend.history).toEqual([]);
    expect(root.querySelector(".graph-notice")).not.toBeNull();
  });
});
