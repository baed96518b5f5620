import { ApiClient, ApiError } from "./api.js";
import { renderGraph } from "./graph.js";
import { EMPTY_GRAPH, type DocumentInfo, type GraphDoc } from "./types.js";

export const MODEL_CHOICES = [
  "mock:scripted",
  "google:gemini-2.0-flash-lite",
  "google:gemini-2.0-flash",
  "groq:deepseek-r1-distill-llama-70b",
  "openai:gpt-4o-mini",
  "openai:gpt-4o",
  "anthropic:claude-3-5-haiku-20241022",
  "anthropic:claude-3-7-sonnet-20250219",
];

export interface TurnEntry {
  question: string;
  answer: string;
  graph: GraphDoc;
  model: string;
  skippedTriples: number;
}

export interface AppHandle {
  ready: Promise<void>;
  submitQuestion(question: string): Promise<void>;
  selectTurn(index: number): void;
  changeModel(model: string): Promise<void>;
  clearHistory(): Promise<void>;
  uploadFile(file: File): Promise<void>;
  deleteDocument(name: string): Promise<void>;
  runIngest(): Promise<void>;
  refreshDocuments(): Promise<void>;
  state: {
    sessionId: string;
    activeModel: string;
    turns: TurnEntry[];
    selectedTurn: number;
    documents: DocumentInfo[];
    busy: boolean;
    ingesting: boolean;
  };
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function formatSize(size: number): string {
  return size < 1024 ? `${size} B` : `${(size / 1024).toFixed(1)} KiB`;
}

/** Mount the single-page app into `root`. The server is the source of truth:
 * every state change below is driven by an API response. */
export function initApp(root: HTMLElement, api: ApiClient): AppHandle {
  const state: AppHandle["state"] = {
    sessionId: "",
    activeModel: "",
    turns: [],
    selectedTurn: -1,
    documents: [],
    busy: false,
    ingesting: false,
  };

  root.textContent = "";
  root.className = "app";

  // -- layout -------------------------------------------------------------
  const header = el("header", "topbar");
  const title = el("span", "title", "ctirag");
  const modelSelect = el("select", "model-select");
  for (const choice of MODEL_CHOICES) {
    const option = el("option", undefined, choice) as HTMLOptionElement;
    option.value = choice;
    modelSelect.appendChild(option);
  }
  const clearButton = el("button", "clear-history", "clear history");
  header.append(title, modelSelect, clearButton);

  const main = el("main", "columns");
  const chatPane = el("section", "chat-pane");
  const messages = el("div", "messages");
  const errorBox = el("div", "chat-error");
  errorBox.hidden = true;
  const form = el("form", "ask-form");
  const input = el("input", "question-input") as HTMLInputElement;
  input.placeholder = "ask about the corpus...";
  const send = el("button", "send", "ask") as HTMLButtonElement;
  send.type = "submit";
  form.append(input, send);
  chatPane.append(messages, errorBox, form);

  const graphPane = el("section", "graph-pane");
  const graphTitle = el("div", "graph-title", "knowledge graph");
  const graphView = el("div", "graph-view");
  renderGraph(graphView, EMPTY_GRAPH);
  graphPane.append(graphTitle, graphView);

  const docsPane = el("aside", "docs-pane");
  const docsTitle = el("div", "docs-title", "documents");
  const docsList = el("ul", "docs-list");
  const uploadInput = el("input", "upload-input") as HTMLInputElement;
  uploadInput.type = "file";
  const ingestButton = el("button", "ingest", "embed documents") as HTMLButtonElement;
  const docsNotice = el("div", "docs-notice");
  docsPane.append(docsTitle, docsList, uploadInput, ingestButton, docsNotice);

  main.append(chatPane, graphPane, docsPane);
  root.append(header, main);

  // -- rendering ------------------------------------------------------------
  function renderMessages(): void {
    messages.textContent = "";
    state.turns.forEach((turn, index) => {
      const entry = el("div", "turn" + (index === state.selectedTurn ? " selected" : ""));
      entry.dataset.turn = String(index);
      const question = el("div", "question", turn.question);
      const answer = el("div", "answer", turn.answer);
      const meta = el("div", "meta", `${turn.model} · turn ${index + 1}`);
      entry.append(question, answer, meta);
      entry.addEventListener("click", () => handle.selectTurn(index));
      messages.appendChild(entry);
    });
  }

  function renderDocuments(): void {
    docsList.textContent = "";
    for (const doc of state.documents) {
      const item = el("li", "doc");
      item.append(el("span", "doc-name", doc.name), el("span", "doc-size", formatSize(doc.size)));
      const remove = el("button", "doc-delete", "delete");
      remove.addEventListener("click", () => void handle.deleteDocument(doc.name));
      item.appendChild(remove);
      docsList.appendChild(item);
    }
  }

  function setBusy(busy: boolean): void {
    state.busy = busy;
    input.disabled = busy;
    send.disabled = busy;
  }

  function showError(message: string): void {
    errorBox.hidden = false;
    errorBox.textContent = "";
    errorBox.append(el("span", "chat-error-text", message));
    const retry = el("button", "retry", "retry");
    retry.addEventListener("click", () => {
      const question = retry.dataset.question ?? "";
      errorBox.hidden = true;
      if (question) void handle.submitQuestion(question);
    });
    errorBox.appendChild(retry);
  }

  function describe(error: unknown): string {
    if (error instanceof ApiError) return `${error.code}: ${error.message}`;
    return error instanceof Error ? error.message : String(error);
  }

  // -- behaviours -----------------------------------------------------------
  const handle: AppHandle = {
    state,
    ready: Promise.resolve(),

    async submitQuestion(question: string): Promise<void> {
      question = question.trim();
      if (!question || state.busy) return;
      setBusy(true);
      errorBox.hidden = true;
      try {
        const response = await api.query(state.sessionId, question);
        state.turns.push({
          question,
          answer: response.answer,
          graph: response.graph,
          model: state.activeModel,
          skippedTriples: response.skipped_triples,
        });
        state.selectedTurn = state.turns.length - 1;
        renderMessages();
        renderGraph(graphView, response.graph);
        input.value = "";
      } catch (error) {
        showError(describe(error));
        const retry = errorBox.querySelector<HTMLButtonElement>(".retry");
        if (retry) retry.dataset.question = question;
      } finally {
        setBusy(false);
      }
    },

    selectTurn(index: number): void {
      if (index < 0 || index >= state.turns.length) return;
      state.selectedTurn = index;
      renderMessages();
      renderGraph(graphView, state.turns[index].graph);
    },

    async changeModel(model: string): Promise<void> {
      try {
        const response = await api.setModel(state.sessionId, model);
        state.activeModel = response.active_model;
        modelSelect.value = response.active_model;
      } catch (error) {
        showError(describe(error));
        modelSelect.value = state.activeModel;
      }
    },

    async clearHistory(): Promise<void> {
      try {
        await api.clearHistory(state.sessionId);
        state.turns = [];
        state.selectedTurn = -1;
        renderMessages();
        renderGraph(graphView, EMPTY_GRAPH);
      } catch (error) {
        showError(describe(error));
      }
    },

    async refreshDocuments(): Promise<void> {
      const listing = await api.listDocuments();
      state.documents = listing.documents;
      renderDocuments();
    },

    async uploadFile(file: File): Promise<void> {
      try {
        await api.uploadDocument(file);
        docsNotice.textContent = `uploaded ${file.name}`;
        await handle.refreshDocuments();
      } catch (error) {
        docsNotice.textContent = describe(error);
      }
    },

    async deleteDocument(name: string): Promise<void> {
      try {
        await api.deleteDocument(name);
        docsNotice.textContent = `deleted ${name}`;
        await handle.refreshDocuments();
      } catch (error) {
        docsNotice.textContent = describe(error);
      }
    },

    async runIngest(): Promise<void> {
      if (state.ingesting) return;
      state.ingesting = true;
      ingestButton.disabled = true;
      docsNotice.textContent = "embedding...";
      try {
        const result = await api.triggerEmbed();
        docsNotice.textContent = `embedded ${result.chunk_count} chunks`;
      } catch (error) {
        docsNotice.textContent = describe(error);
      } finally {
        state.ingesting = false;
        ingestButton.disabled = false;
      }
    },
  };

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void handle.submitQuestion(input.value);
  });
  modelSelect.addEventListener("change", () => void handle.changeModel(modelSelect.value));
  clearButton.addEventListener("click", () => void handle.clearHistory());
  uploadInput.addEventListener("change", () => {
    const file = uploadInput.files?.[0];
    if (file) void handle.uploadFile(file);
    uploadInput.value = "";
  });
  ingestButton.addEventListener("click", () => void handle.runIngest());

  handle.ready = (async () => {
    const session = await api.createSession();
    state.sessionId = session.session_id;
    state.activeModel = session.active_model;
    if (!MODEL_CHOICES.includes(session.active_model)) {
      const option = el("option", undefined, session.active_model) as HTMLOptionElement;
      option.value = session.active_model;
      modelSelect.appendChild(option);
    }
    modelSelect.value = session.active_model;
    await handle.refreshDocuments();
  })();

  return handle;
}
