/** Wire types mirroring the inference service's JSON shapes. */

export type QuestionVariant =
  | "answerable"
  | "unanswerable"
  | "ambiguous"
  | "improper";

export interface QuestionType {
  variant: QuestionVariant;
  subtype?: string;
}

export type AnswerKind = "sql" | "clarify" | "sorry" | "regular";

export interface TableSummary {
  name: string;
  columns: string[];
}

export interface DatabaseSummary {
  database_id: string;
  tables: TableSummary[];
}

export interface SessionCreated {
  session_id: string;
  database_id: string;
}

export interface ResultRows {
  columns: string[];
  rows: unknown[][];
  truncated: boolean;
}

export interface TraceEntry {
  phase: string;
  at: number;
}

export interface ErrorLogEntry {
  attempt: number;
  sql: string;
  message: string;
}

export interface StepReply {
  question_type: QuestionType;
  response_kind: AnswerKind;
  sql?: string;
  result_rows?: ResultRows;
  message?: string;
  trace: TraceEntry[];
  error_log: ErrorLogEntry[];
}

export interface HistoryTurn {
  index: number;
  question: string;
  question_type: QuestionType;
  relation: string;
  answer_type: AnswerKind;
  response: string;
  verified: boolean;
}

/** One rendered chat entry; assistant entries carry the reply details. */
export interface ChatMessage {
  speaker: "user" | "assistant";
  text: string;
  badge?: QuestionVariant;
  detail?: {
    sql?: string;
    rows?: ResultRows;
    trace?: TraceEntry[];
    errorLog?: ErrorLogEntry[];
  };
}

export interface ChatViewModel {
  sessionId: string | null;
  database: DatabaseSummary | null;
  messages: ChatMessage[];
  pending: boolean;
  awaitingClarification: boolean;
  error: string | null;
}

export function emptyModel(): ChatViewModel {
  return {
    sessionId: null,
    database: null,
    messages: [],
    pending: false,
    awaitingClarification: false,
    error: null,
  };
}
