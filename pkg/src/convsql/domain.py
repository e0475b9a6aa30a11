"""Shared vocabulary types for multi-turn text-to-SQL dialogues.

Every other module builds on these: question/answer types, thematic
relations between consecutive turns, dialogues, and per-turn evaluation
records. All types are immutable value objects with a stable JSON shape
(lower_snake_case enum values, field names as in ``to_json``) that serves
as the interchange format across the toolkit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Optional


class QuestionVariant(Enum):
    ANSWERABLE = "answerable"
    UNANSWERABLE = "unanswerable"
    AMBIGUOUS = "ambiguous"
    IMPROPER = "improper"


class QuestionSubtype(Enum):
    # refinements of AMBIGUOUS
    COLUMN_AMBIGUITY = "column_ambiguity"
    VALUE_AMBIGUITY = "value_ambiguity"
    # refinements of UNANSWERABLE
    COLUMN_UNANSWERABLE = "column_unanswerable"
    VALUE_UNANSWERABLE = "value_unanswerable"
    OUT_OF_SCOPE = "out_of_scope"


_SUBTYPES_FOR_VARIANT = {
    QuestionVariant.AMBIGUOUS: {
        QuestionSubtype.COLUMN_AMBIGUITY,
        QuestionSubtype.VALUE_AMBIGUITY,
    },
    QuestionVariant.UNANSWERABLE: {
        QuestionSubtype.COLUMN_UNANSWERABLE,
        QuestionSubtype.VALUE_UNANSWERABLE,
        QuestionSubtype.OUT_OF_SCOPE,
    },
}


@dataclass(frozen=True)
class QuestionType:
    """Four-way question classification, optionally refined by a subtype.

    Subtypes exist only for ambiguous and unanswerable questions; metrics
    aggregate at the four-variant level and treat subtypes as metadata.
    """

    variant: QuestionVariant
    subtype: Optional[QuestionSubtype] = None

    def __post_init__(self) -> None:
        allowed = _SUBTYPES_FOR_VARIANT.get(self.variant)
        if self.subtype is not None:
            if allowed is None:
                raise ValueError(
                    f"{self.variant.value} question carries no subtype"
                )
            if self.subtype not in allowed:
                raise ValueError(
                    f"subtype {self.subtype.value} invalid for {self.variant.value}"
                )

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"variant": self.variant.value}
        if self.subtype is not None:
            out["subtype"] = self.subtype.value
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "QuestionType":
        subtype = obj.get("subtype")
        return cls(
            variant=QuestionVariant(obj["variant"]),
            subtype=QuestionSubtype(subtype) if subtype is not None else None,
        )


ANSWERABLE = QuestionType(QuestionVariant.ANSWERABLE)
UNANSWERABLE = QuestionType(QuestionVariant.UNANSWERABLE)
AMBIGUOUS = QuestionType(QuestionVariant.AMBIGUOUS)
IMPROPER = QuestionType(QuestionVariant.IMPROPER)


class AnswerType(Enum):
    SQL = "sql"
    CLARIFY = "clarify"
    SORRY = "sorry"
    REGULAR = "regular"


_CANONICAL_ANSWER = {
    QuestionVariant.ANSWERABLE: AnswerType.SQL,
    QuestionVariant.AMBIGUOUS: AnswerType.CLARIFY,
    QuestionVariant.UNANSWERABLE: AnswerType.SORRY,
    QuestionVariant.IMPROPER: AnswerType.REGULAR,
}


def canonical_answer_type(q: QuestionType) -> AnswerType:
    """Map a question type to its paired answer type.

    Answerable questions get SQL, ambiguous ones a clarification request,
    unanswerable ones an apology with an explanation, and improper ones a
    regular conversational reply. Total and bijective over the variants.
    """
    return _CANONICAL_ANSWER[q.variant]


class ThematicRelation(Enum):
    """How a question relates to the previous exchange.

    The first three link a question to the previous question; the last
    links it to the previous answer. NONE marks a dialogue's opening turn.
    """

    CONSTRAINT_REFINEMENT = "constraint_refinement"
    TOPIC_EXPLORATION = "topic_exploration"
    PARTICIPANT_SHIFT = "participant_shift"
    ANSWER_EXPLORATION = "answer_exploration"
    NONE = "none"


FOLLOWUP_RELATIONS = (
    ThematicRelation.CONSTRAINT_REFINEMENT,
    ThematicRelation.TOPIC_EXPLORATION,
    ThematicRelation.PARTICIPANT_SHIFT,
    ThematicRelation.ANSWER_EXPLORATION,
)


@dataclass(frozen=True)
class Turn:
    """One question/response exchange inside a dialogue.

    ``response`` holds SQL text when ``answer_type`` is SQL and natural
    language otherwise. ``goal_sql`` records the seed query an augmented
    turn was generated toward; ``execution_score`` and ``verified`` are
    set by the refine stage.
    """

    index: int
    question: str
    question_type: QuestionType
    relation: ThematicRelation
    answer_type: AnswerType
    response: str
    goal_sql: Optional[str] = None
    execution_score: Optional[int] = None
    verified: bool = False

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "index": self.index,
            "question": self.question,
            "question_type": self.question_type.to_json(),
            "relation": self.relation.value,
            "answer_type": self.answer_type.value,
            "response": self.response,
            "verified": self.verified,
        }
        if self.goal_sql is not None:
            out["goal_sql"] = self.goal_sql
        if self.execution_score is not None:
            out["execution_score"] = self.execution_score
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Turn":
        return cls(
            index=obj["index"],
            question=obj["question"],
            question_type=QuestionType.from_json(obj["question_type"]),
            relation=ThematicRelation(obj["relation"]),
            answer_type=AnswerType(obj["answer_type"]),
            response=obj["response"],
            goal_sql=obj.get("goal_sql"),
            execution_score=obj.get("execution_score"),
            verified=obj.get("verified", False),
        )


class DialogueSource(Enum):
    SEED = "seed"
    AUGMENTED = "augmented"


@dataclass(frozen=True)
class Dialogue:
    """An ordered multi-turn interaction over one database."""

    id: str
    database_id: str
    turns: tuple[Turn, ...]
    source: DialogueSource

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "database_id": self.database_id,
            "turns": [t.to_json() for t in self.turns],
            "source": self.source.value,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Dialogue":
        return cls(
            id=obj["id"],
            database_id=obj["database_id"],
            turns=tuple(Turn.from_json(t) for t in obj["turns"]),
            source=DialogueSource(obj["source"]),
        )

    def with_turns(self, turns: tuple[Turn, ...]) -> "Dialogue":
        return replace(self, turns=tuple(turns))


@dataclass(frozen=True)
class EvalRecord:
    """One scored prediction: gold/predicted type and gold/predicted SQL."""

    dialogue_id: str
    turn_index: int
    gold_type: QuestionType
    pred_type: QuestionType
    gold_sql: Optional[str] = None
    pred_sql: Optional[str] = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "gold_type": self.gold_type.to_json(),
            "pred_type": self.pred_type.to_json(),
        }
        if self.gold_sql is not None:
            out["gold_sql"] = self.gold_sql
        if self.pred_sql is not None:
            out["pred_sql"] = self.pred_sql
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "EvalRecord":
        return cls(
            dialogue_id=obj["dialogue_id"],
            turn_index=obj["turn_index"],
            gold_type=QuestionType.from_json(obj["gold_type"]),
            pred_type=QuestionType.from_json(obj["pred_type"]),
            gold_sql=obj.get("gold_sql"),
            pred_sql=obj.get("pred_sql"),
        )


@dataclass(frozen=True)
class Violation:
    """A broken dialogue invariant, reported as data rather than raised."""

    turn_index: Optional[int]
    rule: str
    detail: str

    def __str__(self) -> str:
        where = f"turn {self.turn_index}" if self.turn_index is not None else "dialogue"
        return f"{where}: {self.rule}: {self.detail}"


def validate_dialogue(d: Dialogue) -> list[Violation]:
    """Check every turn and dialogue invariant; empty list means well-formed.

    Checked rules: contiguous 1-based turn indices, non-empty questions,
    SQL answers that parse as a single statement, execution scores only on
    SQL answers, opening turn carrying the NONE relation (and only it),
    and at most one trailing improper turn.
    """
    from .sqlkit import ParseError, parse_sql

    violations: list[Violation] = []
    for pos, turn in enumerate(d.turns):
        expected = pos + 1
        if turn.index != expected:
            violations.append(
                Violation(turn.index, "contiguous_indices",
                          f"expected index {expected}, found {turn.index}")
            )
        if not turn.question.strip():
            violations.append(Violation(turn.index, "non_empty_question", "question is empty"))
        if turn.answer_type is AnswerType.SQL:
            try:
                parse_sql(turn.response)
            except ParseError as exc:
                violations.append(
                    Violation(turn.index, "unparseable_sql", str(exc))
                )
        elif turn.execution_score is not None:
            violations.append(
                Violation(turn.index, "score_without_sql",
                          "execution_score present on a non-SQL answer")
            )
        if pos == 0 and turn.relation is not ThematicRelation.NONE:
            violations.append(
                Violation(turn.index, "opening_relation",
                          f"turn 1 must carry relation none, found {turn.relation.value}")
            )
        if pos > 0 and turn.relation is ThematicRelation.NONE:
            violations.append(
                Violation(turn.index, "missing_relation",
                          "turns after the first need a non-none relation")
            )
    if len(d.turns) >= 2:
        last, prev = d.turns[-1], d.turns[-2]
        if (last.question_type.variant is QuestionVariant.IMPROPER
                and prev.question_type.variant is QuestionVariant.IMPROPER):
            violations.append(
                Violation(last.index, "trailing_improper",
                          "more than one trailing improper turn")
            )
    return violations
