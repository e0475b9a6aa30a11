"""Answer sources for the inference engine.

``LlmAnswerer`` drives everything through the chat client; the
table-driven ``ScriptedAnswerer`` answers from a rule list, which keeps
engine tests, the ablation harness, and UI demos fully deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Protocol

from .. import dbexec, llmclient, prompts
from ..domain import (
    ANSWERABLE,
    IMPROPER,
    AnswerType,
    QuestionType,
    QuestionVariant,
    canonical_answer_type,
)

if TYPE_CHECKING:  # pragma: no cover
    from .engine import ErrorEntry, SessionState


class Answerer(Protocol):
    def classify(self, state: "SessionState", question: str) -> QuestionType: ...

    def respond(self, state: "SessionState", question: str, qtype: QuestionType) -> str: ...

    def write_sql(
        self, state: "SessionState", question: str, error_log: list["ErrorEntry"]
    ) -> str: ...


class LlmAnswerer:
    """Model-backed answerer; temperature comes from the session config."""

    def __init__(self, transport: llmclient.Transport) -> None:
        self.transport = transport

    def classify(self, state, question: str) -> QuestionType:
        from ..augment import render_history

        guides = prompts.TYPE_GUIDES
        prompt = prompts.load_template("intent").format(
            answerable_def=guides[QuestionVariant.ANSWERABLE].definition,
            ambiguous_def=guides[QuestionVariant.AMBIGUOUS].definition,
            unanswerable_def=guides[QuestionVariant.UNANSWERABLE].definition,
            improper_def=guides[QuestionVariant.IMPROPER].definition,
            schema=dbexec.schema_prompt_text(state.db.schema),
            history=render_history(state.history),
            question=question,
        )
        payload = llmclient.complete_json(
            llmclient.ChatRequest(
                messages=(("user", prompt),),
                temperature=state.cfg.temperature,
                tag="intent",
            ),
            self.transport,
            ["type"],
        )
        label = str(payload["type"]).strip().lower()
        try:
            return QuestionType(QuestionVariant(label))
        except ValueError as exc:
            raise llmclient.FormatError(
                f"unknown question type label {label!r}", raw=json.dumps(payload)
            ) from exc

    def respond(self, state, question: str, qtype: QuestionType) -> str:
        from ..augment import render_history

        guide = prompts.TYPE_GUIDES[qtype.variant]
        prompt = prompts.load_template("respond_nonsql").format(
            qa_type=qtype.variant.value,
            qa_type_definition=guide.definition,
            answer_kind=canonical_answer_type(qtype).value,
            schema=dbexec.schema_prompt_text(state.db.schema),
            history=render_history(state.history),
            question=question,
        )
        payload = llmclient.complete_json(
            llmclient.ChatRequest(
                messages=(("user", prompt),),
                temperature=state.cfg.temperature,
                tag=f"respond_{canonical_answer_type(qtype).value}",
            ),
            self.transport,
            ["message"],
        )
        return str(payload["message"]).strip()

    def write_sql(self, state, question: str, error_log) -> str:
        from ..augment import render_history

        if error_log:
            lines = ["Previous attempts failed with these engine errors:"]
            for entry in error_log:
                lines.append(f"- attempt {entry.attempt}: {entry.sql}")
                lines.append(f"  error: {entry.message}")
            error_text = "\n".join(lines) + "\n"
        else:
            error_text = ""
        prompt = prompts.load_template("solve").format(
            schema=dbexec.schema_prompt_text(
                state.db.schema, sample_rows=dbexec.DEFAULT_SAMPLE_ROWS, db=state.db
            ),
            history=render_history(state.history),
            question=question,
            error_log=error_text,
        )
        payload = llmclient.complete_json(
            llmclient.ChatRequest(
                messages=(("user", prompt),),
                temperature=state.cfg.temperature,
                tag="solve",
            ),
            self.transport,
            ["sql"],
        )
        return str(payload["sql"]).strip()


_DEFAULT_RESPONSES = {
    AnswerType.CLARIFY: "Could you point me at the exact table or column you mean?",
    AnswerType.SORRY: "Sorry, the database does not hold that information.",
    AnswerType.REGULAR: "Happy to help!",
}


@dataclass(frozen=True)
class ScriptRule:
    """One scripted exchange, matched on the normalized question text.

    ``sql_sequence`` supplies one candidate per solve attempt; the last
    entry repeats once attempts outrun the list.
    """

    match: str
    qtype: QuestionType = ANSWERABLE
    sql_sequence: tuple[str, ...] = ()
    message: Optional[str] = None

    def normalized(self) -> str:
        return " ".join(self.match.lower().split())


class ScriptedAnswerer:
    def __init__(self, rules: list[ScriptRule]) -> None:
        self.rules = {rule.normalized(): rule for rule in rules}

    @classmethod
    def from_json(cls, path: Path) -> "ScriptedAnswerer":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        rules = []
        for entry in raw:
            rules.append(
                ScriptRule(
                    match=entry["match"],
                    qtype=QuestionType.from_json(entry.get("question_type", {"variant": "answerable"})),
                    sql_sequence=tuple(entry.get("sql_sequence", [])),
                    message=entry.get("message"),
                )
            )
        return cls(rules)

    def _lookup(self, question: str) -> Optional[ScriptRule]:
        return self.rules.get(" ".join(question.lower().split()))

    def classify(self, state, question: str) -> QuestionType:
        rule = self._lookup(question)
        return rule.qtype if rule else IMPROPER

    def respond(self, state, question: str, qtype: QuestionType) -> str:
        rule = self._lookup(question)
        if rule and rule.message:
            return rule.message
        return _DEFAULT_RESPONSES[canonical_answer_type(qtype)]

    def write_sql(self, state, question: str, error_log) -> str:
        rule = self._lookup(question)
        attempt = max(1, state.solve_attempts)
        if rule and rule.sql_sequence:
            return rule.sql_sequence[min(attempt - 1, len(rule.sql_sequence) - 1)]
        first_table = state.db.schema.tables[0].name
        return f"SELECT count(*) FROM {first_table}"
