/** DOM rendering for the chat view model. Pure: model in, elements out. */

import type {
  ChatMessage,
  ChatViewModel,
  DatabaseSummary,
  ResultRows,
} from "./types.js";

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

export function renderSchemaPanel(database: DatabaseSummary): HTMLElement {
  const panel = el("aside", "schema-panel");
  panel.appendChild(el("h2", "schema-title", database.database_id));
  for (const table of database.tables) {
    const block = el("div", "schema-table");
    block.appendChild(el("h3", "schema-table-name", table.name));
    const list = el("ul", "schema-columns");
    for (const column of table.columns) {
      list.appendChild(el("li", "schema-column", column));
    }
    block.appendChild(list);
    panel.appendChild(block);
  }
  return panel;
}

function renderRows(rows: ResultRows): HTMLElement {
  const wrapper = el("div", "result-rows");
  const table = el("table", "result-table");
  const head = el("tr");
  for (const column of rows.columns) {
    head.appendChild(el("th", undefined, column));
  }
  table.appendChild(head);
  for (const row of rows.rows) {
    const tr = el("tr");
    for (const cell of row) {
      tr.appendChild(el("td", undefined, cell === null ? "NULL" : String(cell)));
    }
    table.appendChild(tr);
  }
  wrapper.appendChild(table);
  if (rows.truncated) {
    wrapper.appendChild(el("p", "truncated-note", "more rows truncated"));
  }
  return wrapper;
}

function renderDetail(message: ChatMessage): HTMLElement | null {
  const detail = message.detail;
  if (!detail) return null;
  const hasContent =
    detail.sql !== undefined ||
    detail.rows !== undefined ||
    (detail.trace?.length ?? 0) > 0 ||
    (detail.errorLog?.length ?? 0) > 0;
  if (!hasContent) return null;

  const container = el("div", "message-detail");
  if (detail.sql !== undefined) {
    const sqlBlock = el("pre", "sql-block");
    sqlBlock.appendChild(el("code", undefined, detail.sql));
    container.appendChild(sqlBlock);
  }
  if (detail.rows !== undefined) {
    const results = el("details", "results-panel");
    results.open = true;
    results.appendChild(el("summary", undefined, "results"));
    results.appendChild(renderRows(detail.rows));
    container.appendChild(results);
  }
  if (detail.trace && detail.trace.length > 0) {
    const trace = el("details", "trace-panel"); // collapsed: developer info
    trace.appendChild(el("summary", undefined, "state trace"));
    const list = el("ol", "trace-list");
    for (const entry of detail.trace) {
      list.appendChild(el("li", "trace-phase", entry.phase));
    }
    trace.appendChild(list);
    container.appendChild(trace);
  }
  if (detail.errorLog && detail.errorLog.length > 0) {
    const log = el("details", "error-log-panel");
    log.appendChild(
      el("summary", undefined, `retries (${detail.errorLog.length})`),
    );
    const list = el("ul", "error-log-list");
    for (const entry of detail.errorLog) {
      const item = el("li", "error-log-entry");
      item.appendChild(el("code", "error-log-sql", entry.sql));
      item.appendChild(el("span", "error-log-message", entry.message));
      list.appendChild(item);
    }
    log.appendChild(list);
    container.appendChild(log);
  }
  return container;
}

export function renderMessage(message: ChatMessage): HTMLElement {
  const node = el("div", `message message-${message.speaker}`);
  if (message.speaker === "assistant" && message.badge) {
    node.classList.add(`kind-${message.badge}`);
    node.appendChild(el("span", `badge badge-${message.badge}`, message.badge));
  }
  node.appendChild(el("p", "message-text", message.text));
  const detail = renderDetail(message);
  if (detail) node.appendChild(detail);
  return node;
}

export function render(model: ChatViewModel, root: HTMLElement): void {
  root.textContent = "";
  const layout = el("div", "chat-layout");

  if (model.database) {
    layout.appendChild(renderSchemaPanel(model.database));
  }

  const main = el("main", "chat-main");
  if (model.error) {
    const banner = el("div", "error-banner");
    banner.appendChild(el("span", "error-text", model.error));
    const dismiss = el("button", "error-dismiss", "dismiss");
    dismiss.type = "button";
    banner.appendChild(dismiss);
    main.appendChild(banner);
  }

  const list = el("div", "message-list");
  for (const message of model.messages) {
    list.appendChild(renderMessage(message));
  }
  main.appendChild(list);

  if (model.awaitingClarification) {
    main.appendChild(
      el("p", "clarify-nudge", "The assistant needs an answer to continue."),
    );
  }

  const form = el("form", "composer");
  const input = el("input", "composer-input");
  input.type = "text";
  input.name = "message";
  input.placeholder = model.awaitingClarification
    ? "Answer the clarification..."
    : "Ask about the data...";
  input.disabled = model.pending || model.sessionId === null;
  const send = el("button", "composer-send", "send");
  send.type = "submit";
  send.disabled = model.pending || model.sessionId === null;
  form.appendChild(input);
  form.appendChild(send);
  main.appendChild(form);

  layout.appendChild(main);
  root.appendChild(layout);
}
