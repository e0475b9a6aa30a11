"""Per-session inference state machine.

One user message drives one pass: Initial (first message only) feeds
Intent Recognition; non-answerable questions are answered in natural
language and end the pass; answerable ones loop Solve -> Verify with an
error log feeding each retry until the SQL executes or attempts run out.
Phase transitions are restricted to the six legal edges and every visited
phase is recorded on the result trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Union

from .. import dbexec, llmclient
from ..domain import (
    AnswerType,
    QuestionType,
    QuestionVariant,
    ANSWERABLE,
    ThematicRelation,
    Turn,
    canonical_answer_type,
)
from ..errors import PipelineError
from .answerers import Answerer, LlmAnswerer


class Phase(Enum):
    INITIAL = "initial"
    INTENT_RECOGNITION = "intent_recognition"
    SOLVE = "solve"
    VERIFY = "verify"
    END = "end"


LEGAL_EDGES = frozenset(
    {
        (Phase.INITIAL, Phase.INTENT_RECOGNITION),
        (Phase.INTENT_RECOGNITION, Phase.END),
        (Phase.INTENT_RECOGNITION, Phase.SOLVE),
        (Phase.SOLVE, Phase.VERIFY),
        (Phase.VERIFY, Phase.END),
        (Phase.VERIFY, Phase.SOLVE),
    }
)


@dataclass(frozen=True)
class FlowConfig:
    """Engine knobs; the two flags switch off error correction and intent
    recognition for ablation runs."""

    max_retries: int = 2
    intent_enabled: bool = True
    verify_enabled: bool = True
    temperature: float = llmclient.INFERENCE_TEMPERATURE

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ErrorEntry:
    attempt: int
    sql: str
    message: str

    def to_json(self) -> dict[str, Any]:
        return {"attempt": self.attempt, "sql": self.sql, "message": self.message}


@dataclass
class SessionState:
    """Mutable per-session state; one step at a time."""

    db: dbexec.DatabaseRef
    cfg: FlowConfig
    phase: Phase = Phase.INITIAL
    history: list[Turn] = field(default_factory=list)
    error_log: list[ErrorEntry] = field(default_factory=list)
    solve_attempts: int = 0
    current_question: Optional[str] = None
    stepping: bool = False


@dataclass(frozen=True)
class TraceEntry:
    phase: Phase
    at: int  # position in the step's visit order

    def to_json(self) -> dict[str, Any]:
        return {"phase": self.phase.value, "at": self.at}


@dataclass(frozen=True)
class StepResult:
    question_type: QuestionType
    response_kind: AnswerType
    sql: Optional[str] = None
    result_rows: Optional[dbexec.ResultTable] = None
    message: Optional[str] = None
    trace: tuple[TraceEntry, ...] = ()

    def __post_init__(self) -> None:
        if self.response_kind is AnswerType.SQL and self.sql is None:
            raise ValueError("a SQL response carries its SQL text")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "question_type": self.question_type.to_json(),
            "response_kind": self.response_kind.value,
            "trace": [t.to_json() for t in self.trace],
        }
        if self.sql is not None:
            out["sql"] = self.sql
        if self.result_rows is not None:
            out["result_rows"] = self.result_rows.to_json()
        if self.message is not None:
            out["message"] = self.message
        return out


def init_session(db: dbexec.DatabaseRef, cfg: FlowConfig) -> SessionState:
    """Fresh session: database loaded, empty history and error log."""
    return SessionState(db=db, cfg=cfg)


def _as_answerer(source: Union[Answerer, llmclient.Transport]) -> Answerer:
    if isinstance(source, llmclient.Transport):
        return LlmAnswerer(source)
    return source


def recognize_intent(
    state: SessionState,
    question: str,
    source: Union[Answerer, llmclient.Transport],
) -> QuestionType:
    """Four-way classification of the user's message.

    With intent recognition disabled, every message counts as answerable
    and flows straight to Solve.
    """
    if not state.cfg.intent_enabled:
        return ANSWERABLE
    return _as_answerer(source).classify(state, question)


def solve(
    state: SessionState,
    question: str,
    source: Union[Answerer, llmclient.Transport],
) -> str:
    """One SQL attempt; the prompt sees every logged error for this question."""
    state.solve_attempts += 1
    return _as_answerer(source).write_sql(state, question, list(state.error_log))


@dataclass(frozen=True)
class VerifyOutcome:
    passed: bool
    rows: Optional[dbexec.ResultTable] = None
    message: Optional[str] = None


def verify(state: SessionState, sql: str) -> VerifyOutcome:
    """Execute the candidate; failures append to the error log.

    With verification disabled the candidate passes untouched (no
    execution, no log entry).
    """
    if not sql:
        raise ValueError("verify needs a non-empty SQL string")
    if not state.cfg.verify_enabled:
        return VerifyOutcome(passed=True, rows=None)
    try:
        rows = dbexec.execute_readonly(state.db, sql)
    except (dbexec.ExecError, dbexec.RejectedError, dbexec.ExecTimeout) as exc:
        state.error_log.append(ErrorEntry(state.solve_attempts, sql, str(exc)))
        return VerifyOutcome(passed=False, message=str(exc))
    return VerifyOutcome(passed=True, rows=rows)


def step(
    state: SessionState,
    user_message: str,
    source: Union[Answerer, llmclient.Transport],
) -> StepResult:
    """Process one user message end to end and append the turn to history."""
    if state.stepping:
        raise RuntimeError("session is already processing a step")
    state.stepping = True
    try:
        return _step_locked(state, user_message, _as_answerer(source))
    finally:
        state.stepping = False


def _step_locked(state: SessionState, user_message: str, answerer: Answerer) -> StepResult:
    trace: list[TraceEntry] = []

    def visit(phase: Phase) -> None:
        previous = trace[-1].phase if trace else state.phase
        if trace and (previous, phase) not in LEGAL_EDGES:
            raise AssertionError(f"illegal transition {previous} -> {phase}")
        trace.append(TraceEntry(phase, len(trace)))

    if state.phase is Phase.INITIAL:
        visit(Phase.INITIAL)
    state.current_question = user_message
    state.error_log.clear()
    state.solve_attempts = 0

    visit(Phase.INTENT_RECOGNITION)
    try:
        qtype = recognize_intent(state, user_message, answerer)
        if qtype.variant is not QuestionVariant.ANSWERABLE:
            message = answerer.respond(state, user_message, qtype)
            visit(Phase.END)
            result = StepResult(
                question_type=qtype,
                response_kind=canonical_answer_type(qtype),
                message=message,
                trace=tuple(trace),
            )
            _finish(state, user_message, result)
            return result

        attempts = state.cfg.max_retries + 1
        last_failure = "no attempt made"
        for attempt in range(attempts):
            visit(Phase.SOLVE)
            sql = solve(state, user_message, answerer)
            visit(Phase.VERIFY)
            outcome = verify(state, sql)
            if outcome.passed:
                visit(Phase.END)
                result = StepResult(
                    question_type=qtype,
                    response_kind=AnswerType.SQL,
                    sql=sql,
                    result_rows=outcome.rows,
                    trace=tuple(trace),
                )
                _finish(state, user_message, result)
                return result
            last_failure = outcome.message or "execution failed"
        visit(Phase.END)
        result = StepResult(
            question_type=qtype,
            response_kind=AnswerType.SORRY,
            message=f"I could not produce a working query; last error: {last_failure}",
            trace=tuple(trace),
        )
        _finish(state, user_message, result)
        return result
    except (
        llmclient.FormatError,
        llmclient.TransportError,
        llmclient.CassetteMiss,
    ) as exc:
        raise PipelineError(
            str(exc), f"session:{state.db.database_id}", len(state.history) + 1, exc
        ) from exc


def _finish(state: SessionState, question: str, result: StepResult) -> None:
    response = result.sql if result.response_kind is AnswerType.SQL else (result.message or "")
    state.history.append(
        Turn(
            index=len(state.history) + 1,
            question=question,
            question_type=result.question_type,
            relation=ThematicRelation.NONE,
            answer_type=result.response_kind,
            response=response,
        )
    )
    state.phase = Phase.END
