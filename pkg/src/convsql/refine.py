"""Quality gate over augmented dialogues.

Three passes per turn: an alignment check against the labeled question
type (unanimous high-temperature voting for unanswerable turns), iterative
wording refinement of the natural-language fields, and 0-10 scoring of SQL
execution with a retention threshold. Turns are dropped or rewritten, never
retyped, and SQL text is never touched.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, NamedTuple, Optional

from . import dbexec, llmclient, prompts
from .domain import (
    AnswerType,
    Dialogue,
    DialogueSource,
    QuestionVariant,
    ThematicRelation,
    Turn,
    validate_dialogue,
)
from .errors import PipelineError

log = logging.getLogger("convsql.refine")

DROP_MISALIGNED = "misaligned"
DROP_BELOW_THRESHOLD = "below_threshold"
DROP_REDUNDANT_IMPROPER = "redundant_improper"


@dataclass(frozen=True)
class RefineConfig:
    unanswerable_votes: int = 5
    vote_temperature: float = llmclient.RECHECK_TEMPERATURE
    refine_iterations: int = 2
    score_threshold: int = 8

    def __post_init__(self) -> None:
        if self.unanswerable_votes < 1:
            raise ValueError("unanswerable_votes must be >= 1")
        if not 0 <= self.score_threshold <= 10:
            raise ValueError("score_threshold must be within 0..10")


@dataclass
class RefineReport:
    """Audit trail of one dialogue's pass through the gate."""

    dialogue_id: str
    dropped_turns: list[tuple[int, str]] = field(default_factory=list)
    rewrites: list[tuple[int, str, str, str]] = field(default_factory=list)
    scores: dict[int, int] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "dialogue_id": self.dialogue_id,
            "dropped_turns": [
                {"turn_index": i, "reason": r} for i, r in self.dropped_turns
            ],
            "rewrites": [
                {"turn_index": i, "field": f, "before": b, "after": a}
                for i, f, b, a in self.rewrites
            ],
            "scores": {str(i): s for i, s in self.scores.items()},
        }


def _alignment_request(
    turn: Turn,
    db: dbexec.DatabaseRef,
    history: list[Turn] | tuple[Turn, ...],
    temperature: float,
    tag: str,
) -> llmclient.ChatRequest:
    from .augment import render_history

    guide = prompts.TYPE_GUIDES[turn.question_type.variant]
    prompt = prompts.load_template("align_check").format(
        schema=dbexec.schema_prompt_text(db.schema),
        history=render_history(history),
        question=turn.question,
        response=turn.response,
        qa_type=turn.question_type.variant.value,
        qa_type_definition=guide.definition,
    )
    return llmclient.ChatRequest(
        messages=(("user", prompt),), temperature=temperature, tag=tag
    )


def verify_alignment(
    turn: Turn,
    db: dbexec.DatabaseRef,
    history: list[Turn] | tuple[Turn, ...],
    cfg: RefineConfig,
    transport: llmclient.Transport,
) -> bool:
    """Does the exchange fit its labeled type? Unanswerable turns need a
    unanimous verdict across ``cfg.unanswerable_votes`` high-temperature
    checks; every other type gets a single check."""
    if turn.question_type.variant is QuestionVariant.UNANSWERABLE:
        for vote in range(cfg.unanswerable_votes):
            req = _alignment_request(
                turn, db, history, cfg.vote_temperature, f"align_check_vote{vote + 1}"
            )
            verdict = llmclient.complete_json(req, transport, ["aligned"])
            if not bool(verdict["aligned"]):
                return False
        return True
    req = _alignment_request(
        turn, db, history, llmclient.GENERATION_TEMPERATURE, "align_check"
    )
    verdict = llmclient.complete_json(req, transport, ["aligned"])
    return bool(verdict["aligned"])


class RefinedTurn(NamedTuple):
    turn: Turn
    rewrites: list[tuple[str, str, str]]  # (field, before, after)


def refine_expression(
    turn: Turn,
    history: list[Turn] | tuple[Turn, ...],
    cfg: RefineConfig,
    transport: llmclient.Transport,
) -> RefinedTurn:
    """Feedback-then-rewrite rounds on the turn's natural-language fields.

    Stops early once feedback reports no issues. SQL responses and the
    question type are never altered.
    """
    from .augment import render_history

    sql_answer = turn.answer_type is AnswerType.SQL
    current = turn
    rewrites: list[tuple[str, str, str]] = []
    for iteration in range(1, cfg.refine_iterations + 1):
        feedback_prompt = prompts.load_template("refine_feedback").format(
            history=render_history(history),
            question=current.question,
            response=current.response,
            response_scope=(
                "" if not sql_answer else " (the SQL answer itself is out of scope)"
            ),
        )
        feedback = llmclient.complete_json(
            llmclient.ChatRequest(
                messages=(("user", feedback_prompt),),
                temperature=llmclient.GENERATION_TEMPERATURE,
                tag=f"refine_feedback_iter{iteration}",
            ),
            transport,
            ["issues"],
        )
        issues = [str(i) for i in feedback.get("issues", []) if str(i).strip()]
        if not issues:
            break
        rewrite_prompt = prompts.load_template("refine_rewrite").format(
            question=current.question,
            response=current.response,
            issues="\n".join(f"- {i}" for i in issues),
            sql_note=(
                " Return the response field verbatim; only the question may change."
                if sql_answer
                else ""
            ),
        )
        rewritten = llmclient.complete_json(
            llmclient.ChatRequest(
                messages=(("user", rewrite_prompt),),
                temperature=llmclient.GENERATION_TEMPERATURE,
                tag=f"refine_rewrite_iter{iteration}",
            ),
            transport,
            ["question"],
        )
        new_question = str(rewritten.get("question", "")).strip() or current.question
        if sql_answer:
            new_response = current.response  # SQL is immutable here
        else:
            new_response = str(rewritten.get("response", "")).strip() or current.response
        if new_question != current.question:
            rewrites.append(("question", current.question, new_question))
        if new_response != current.response:
            rewrites.append(("response", current.response, new_response))
        current = replace(current, question=new_question, response=new_response)
    return RefinedTurn(current, rewrites)


def score_sql_execution(
    turn: Turn,
    db: dbexec.DatabaseRef,
    transport: llmclient.Transport,
) -> int:
    """Execute the turn's SQL and have the model score the fit, 0-10."""
    if turn.answer_type is not AnswerType.SQL:
        raise ValueError("only SQL turns are scored")
    try:
        result = dbexec.execute_readonly(db, turn.response, row_cap=8)
        result_text = _render_result(result)
    except (dbexec.ExecError, dbexec.RejectedError, dbexec.ExecTimeout) as exc:
        log.warning(
            json.dumps(
                {"event": "score_exec_anomaly", "turn": turn.index, "error": str(exc)}
            )
        )
        return 0
    prompt = prompts.load_template("score_execution").format(
        question=turn.question, sql=turn.response, result=result_text
    )
    req = llmclient.ChatRequest(
        messages=(("user", prompt),),
        temperature=llmclient.INFERENCE_TEMPERATURE,
        tag="score_execution",
    )
    text = llmclient.complete(req, transport)
    score = llmclient.extract_int(text)
    if score is None:
        retry = req.with_followup("user", "Reply with a single integer from 0 to 10.")
        text = llmclient.complete(retry, transport)
        score = llmclient.extract_int(text)
        if score is None:
            raise llmclient.FormatError("no integer score in reply", raw=text)
    return max(0, min(10, score))


def _render_result(result: dbexec.ResultTable) -> str:
    lines = [" | ".join(result.columns)]
    for row in result.rows:
        lines.append(" | ".join("NULL" if c is None else str(c) for c in row))
    if result.truncated:
        lines.append("(more rows truncated)")
    return "\n".join(lines)


def refine_dialogue(
    d: Dialogue,
    db: dbexec.DatabaseRef,
    cfg: RefineConfig,
    transport: llmclient.Transport,
) -> tuple[Dialogue, RefineReport]:
    """Run the three-step gate over a dialogue; drops are re-indexed away."""
    if d.source is not DialogueSource.AUGMENTED:
        raise ValueError("the refine gate takes augmented dialogues")
    report = RefineReport(dialogue_id=d.id)
    kept: list[Turn] = []
    try:
        for turn in d.turns:
            if not verify_alignment(turn, db, kept, cfg, transport):
                report.dropped_turns.append((turn.index, DROP_MISALIGNED))
                continue
            refined = refine_expression(turn, kept, cfg, transport)
            for fieldname, before, after in refined.rewrites:
                report.rewrites.append((turn.index, fieldname, before, after))
            candidate = refined.turn
            if candidate.answer_type is AnswerType.SQL:
                score = score_sql_execution(candidate, db, transport)
                report.scores[turn.index] = score
                if score < cfg.score_threshold:
                    report.dropped_turns.append((turn.index, DROP_BELOW_THRESHOLD))
                    continue
                candidate = replace(candidate, execution_score=score)
            kept.append(replace(candidate, verified=True))
    except (
        llmclient.FormatError,
        llmclient.TransportError,
        llmclient.CassetteMiss,
    ) as exc:
        raise PipelineError(str(exc), d.id, cause=exc) from exc

    # drops can leave two improper turns stacked at the end; keep the closer
    while (
        len(kept) >= 2
        and kept[-1].question_type.variant is QuestionVariant.IMPROPER
        and kept[-2].question_type.variant is QuestionVariant.IMPROPER
    ):
        removed = kept.pop(-2)
        report.dropped_turns.append((removed.index, DROP_REDUNDANT_IMPROPER))

    reindexed: list[Turn] = []
    for pos, turn in enumerate(kept):
        relation = turn.relation if pos > 0 else ThematicRelation.NONE
        reindexed.append(replace(turn, index=pos + 1, relation=relation))
    report.dropped_turns.sort()
    out = d.with_turns(tuple(reindexed))
    violations = validate_dialogue(out)
    if violations:
        raise PipelineError(
            "refined dialogue failed validation: " + "; ".join(map(str, violations)),
            d.id,
        )
    return out, report


def refine_many(
    dialogues: list[Dialogue],
    catalog: Mapping[str, dbexec.DatabaseRef],
    cfg: RefineConfig,
    transport: llmclient.Transport,
    jobs: int = 1,
) -> tuple[list[Dialogue], list[RefineReport], list[PipelineError]]:
    """Refine many dialogues, preserving input order."""
    results: list[Optional[tuple[Dialogue, RefineReport]]] = [None] * len(dialogues)
    errors: list[PipelineError] = []

    def work(pos: int) -> None:
        dialogue = dialogues[pos]
        db = catalog.get(dialogue.database_id)
        if db is None:
            errors.append(
                PipelineError(
                    f"database {dialogue.database_id!r} missing from catalog",
                    dialogue.id,
                )
            )
            return
        try:
            results[pos] = refine_dialogue(dialogue, db, cfg, transport)
        except PipelineError as exc:
            errors.append(exc)

    if jobs <= 1:
        for pos in range(len(dialogues)):
            work(pos)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(len(dialogues))))
    done = [r for r in results if r is not None]
    return [d for d, _ in done], [r for _, r in done], errors
