/** Controller: owns the view model, talks to the API, re-renders. */

import { ApiError, createSession, listDatabases, sendMessage } from "./api.js";
import type {
  ChatViewModel,
  DatabaseSummary,
  StepReply,
} from "./types.js";
import { emptyModel, type ChatMessage } from "./types.js";
import { render } from "./view.js";

export function replyToMessage(reply: StepReply): ChatMessage {
  const text =
    reply.response_kind === "sql" ? (reply.sql ?? "") : (reply.message ?? "");
  return {
    speaker: "assistant",
    text,
    badge: reply.question_type.variant,
    detail: {
      sql: reply.sql,
      rows: reply.result_rows,
      trace: reply.trace,
      errorLog: reply.error_log,
    },
  };
}

export class ChatApp {
  readonly model: ChatViewModel = emptyModel();

  constructor(private readonly root: HTMLElement) {}

  draw(): void {
    render(this.model, this.root);
    const form = this.root.querySelector<HTMLFormElement>("form.composer");
    form?.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = form.querySelector<HTMLInputElement>("input.composer-input");
      if (input && input.value.trim()) {
        const text = input.value.trim();
        input.value = "";
        void this.sendMessage(text);
      }
    });
    const dismiss = this.root.querySelector<HTMLButtonElement>(".error-dismiss");
    dismiss?.addEventListener("click", () => {
      this.model.error = null;
      this.draw();
    });
  }

  async startSession(database: DatabaseSummary): Promise<void> {
    try {
      const created = await createSession(database.database_id);
      this.model.sessionId = created.session_id;
      this.model.database = database;
      this.model.messages = [];
      this.model.awaitingClarification = false;
      this.model.error = null;
    } catch (error) {
      this.model.error = describe(error);
    }
    this.draw();
  }

  async sendMessage(text: string): Promise<void> {
    if (this.model.pending || this.model.sessionId === null) {
      return; // the engine is strictly serial per session
    }
    this.model.pending = true;
    this.model.messages.push({ speaker: "user", text });
    this.draw();
    try {
      const reply = await sendMessage(this.model.sessionId, text);
      this.model.messages.push(replyToMessage(reply));
      this.model.awaitingClarification = reply.response_kind === "clarify";
      this.model.error = null;
    } catch (error) {
      this.model.error = describe(error);
    } finally {
      this.model.pending = false;
    }
    this.draw();
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return error.message;
  if (error instanceof Error) return `service unreachable: ${error.message}`;
  return String(error);
}

export async function boot(root: HTMLElement): Promise<ChatApp> {
  const app = new ChatApp(root);
  app.draw();
  try {
    const databases = await listDatabases();
    const picker = document.createElement("select");
    picker.className = "database-picker";
    for (const db of databases) {
      const option = document.createElement("option");
      option.value = db.database_id;
      option.textContent = db.database_id;
      picker.appendChild(option);
    }
    picker.addEventListener("change", () => {
      const chosen = databases.find((d) => d.database_id === picker.value);
      if (chosen) void app.startSession(chosen);
    });
    document.querySelector("header")?.appendChild(picker);
    if (databases.length > 0 && databases[0]) {
      await app.startSession(databases[0]);
    }
  } catch (error) {
    app.model.error = describe(error);
    app.draw();
  }
  return app;
}
