"""Turn-by-turn dialogue generation from seed corpora.

Each augmented dialogue starts from a seed dialogue's SQL (the goal
queries), draws a per-turn plan of (thematic relation, question type),
prompts the model for the turn grounded in schema, history, plan, and
goal, keeps only answerable turns whose SQL actually executes, and stops
early when the model closes the conversation with an improper turn.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Optional

from . import dbexec, llmclient, prompts
from .domain import (
    ANSWERABLE,
    AMBIGUOUS,
    IMPROPER,
    UNANSWERABLE,
    AnswerType,
    Dialogue,
    DialogueSource,
    QuestionSubtype,
    QuestionType,
    QuestionVariant,
    ThematicRelation,
    Turn,
    canonical_answer_type,
    validate_dialogue,
)
from .errors import PipelineError

log = logging.getLogger("convsql.augment")


class EmptyGoalError(ValueError):
    """The seed dialogue has no SQL to anchor generation on."""


class GenerationRejected(RuntimeError):
    """The model refused to produce the planned turn type twice."""


class NoExecutableSql(RuntimeError):
    """Every SQL candidate for an answerable turn failed execution."""


@dataclass(frozen=True)
class TurnPlan:
    relation: ThematicRelation
    qa_type: QuestionType
    turn_index: int

    def __post_init__(self) -> None:
        if self.turn_index == 1 and self.relation is not ThematicRelation.NONE:
            raise ValueError("turn 1 carries no thematic relation")


def _default_qa_weights() -> dict[QuestionType, float]:
    return {ANSWERABLE: 0.6, AMBIGUOUS: 0.15, UNANSWERABLE: 0.15, IMPROPER: 0.10}


def _default_relation_weights() -> dict[ThematicRelation, float]:
    return {
        ThematicRelation.CONSTRAINT_REFINEMENT: 0.25,
        ThematicRelation.TOPIC_EXPLORATION: 0.25,
        ThematicRelation.PARTICIPANT_SHIFT: 0.25,
        ThematicRelation.ANSWER_EXPLORATION: 0.25,
    }


@dataclass(frozen=True)
class GenConfig:
    """Knobs for the generation stage.

    ``target_turns`` is an inclusive range the dialogue length is drawn
    from; ``sql_candidates_per_turn`` bounds how many SQL variants one
    answerable turn may offer to the executability filter.
    """

    target_turns: tuple[int, int] = (3, 8)
    qa_type_weights: Mapping[QuestionType, float] = field(
        default_factory=_default_qa_weights
    )
    relation_weights: Mapping[ThematicRelation, float] = field(
        default_factory=_default_relation_weights
    )
    sql_candidates_per_turn: int = 5
    seed: int = 0
    complexity_nudge: bool = True

    def __post_init__(self) -> None:
        low, high = self.target_turns
        if low < 1 or high < low:
            raise ValueError("target_turns must satisfy 1 <= min <= max")
        if self.sql_candidates_per_turn < 1:
            raise ValueError("sql_candidates_per_turn must be >= 1")
        for name, weights in (
            ("qa_type_weights", self.qa_type_weights),
            ("relation_weights", self.relation_weights),
        ):
            total = sum(weights.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1, got {total}")


def select_goal_sql(seed_dialogue: Dialogue) -> list[str]:
    """SQL strings of the seed's answerable turns, deduplicated in order."""
    if seed_dialogue.source is not DialogueSource.SEED:
        raise ValueError("goal SQL comes from seed dialogues only")
    seen: set[str] = set()
    goals: list[str] = []
    for turn in seed_dialogue.turns:
        if turn.answer_type is AnswerType.SQL and turn.response not in seen:
            seen.add(turn.response)
            goals.append(turn.response)
    if not goals:
        raise EmptyGoalError(f"seed dialogue {seed_dialogue.id!r} contains no SQL")
    return goals


def _weighted_draw(rng: random.Random, weights: Mapping) -> object:
    roll = rng.random() * sum(weights.values())
    acc = 0.0
    keys = list(weights)
    for key in keys:
        acc += weights[key]
        if roll < acc:
            return key
    return keys[-1]


def sample_turn_plan(cfg: GenConfig, turn_index: int, rng: random.Random) -> TurnPlan:
    """Draw a (question type, relation) plan; deterministic given the rng state."""
    if turn_index < 1:
        raise ValueError("turn_index starts at 1")
    qa_type = _weighted_draw(rng, cfg.qa_type_weights)
    if turn_index == 1:
        relation = ThematicRelation.NONE
    else:
        relation = _weighted_draw(rng, cfg.relation_weights)
    return TurnPlan(relation=relation, qa_type=qa_type, turn_index=turn_index)


def executability_filter(
    db: dbexec.DatabaseRef, candidates: list[str]
) -> Optional[str]:
    """First candidate that executes; None when all fail."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    for sql in candidates:
        try:
            dbexec.execute_readonly(db, sql)
        except (dbexec.ExecError, dbexec.RejectedError, dbexec.ExecTimeout):
            continue
        return sql
    return None


class GeneratedTurn(NamedTuple):
    turn: Turn
    ends_conversation: bool


def render_history(turns: list[Turn] | tuple[Turn, ...]) -> str:
    if not turns:
        return "(the conversation is just starting)"
    lines = []
    for t in turns:
        lines.append(f"Q{t.index}: {t.question}")
        kind = "sql" if t.answer_type is AnswerType.SQL else t.answer_type.value
        lines.append(f"A{t.index} ({kind}): {t.response}")
    return "\n".join(lines)


_COMPLEXITY_NUDGE = (
    " Prefer structurally rich SQL where it fits the question: nested"
    " subqueries and multi-table joins are welcome."
)


def _build_generation_prompt(
    db: dbexec.DatabaseRef,
    history: list[Turn] | tuple[Turn, ...],
    plan: TurnPlan,
    goal_sql: str,
    cfg: GenConfig,
) -> str:
    variant = plan.qa_type.variant
    guide = prompts.TYPE_GUIDES[variant]
    if plan.relation is ThematicRelation.NONE:
        relation_block = ""
    else:
        rel_guide = prompts.RELATION_GUIDES[plan.relation]
        relation_block = prompts.load_template("relation_block").format(
            relation=plan.relation.value,
            relation_definition=rel_guide.definition,
            relation_example_prev=rel_guide.example_prev,
            relation_example_cur=rel_guide.example_cur,
        )
    if variant is QuestionVariant.ANSWERABLE:
        nudge = _COMPLEXITY_NUDGE if cfg.complexity_nudge else ""
        instructions = prompts.load_template("answerable_instructions").format(
            candidate_count=cfg.sql_candidates_per_turn, complexity_nudge=nudge
        )
    else:
        subtype_options = "|".join(guide.subtypes) if guide.subtypes else "null"
        ends_field = (
            ', "ends_conversation": true or false'
            if variant is QuestionVariant.IMPROPER
            else ""
        )
        instructions = prompts.load_template("nonsql_instructions").format(
            answer_kind=canonical_answer_type(plan.qa_type).value,
            subtype_options=subtype_options,
            ends_field=ends_field,
        )
    return prompts.load_template("generate_turn").format(
        schema=dbexec.schema_prompt_text(
            db.schema, sample_rows=dbexec.DEFAULT_SAMPLE_ROWS, db=db
        ),
        history=render_history(history),
        turn_index=plan.turn_index,
        qa_type=variant.value,
        qa_type_definition=guide.definition,
        qa_type_example_q=guide.example_question,
        qa_type_example_a=guide.example_response,
        relation_block=relation_block,
        goal_sql=goal_sql,
        response_instructions=instructions,
    )


def _parse_subtype(raw: Optional[str], variant: QuestionVariant) -> Optional[QuestionSubtype]:
    if not raw or not isinstance(raw, str):
        return None
    try:
        subtype = QuestionSubtype(raw.strip().lower())
    except ValueError:
        return None
    try:
        QuestionType(variant, subtype)
    except ValueError:
        return None
    return subtype


def generate_turn(
    db: dbexec.DatabaseRef,
    history: list[Turn] | tuple[Turn, ...],
    plan: TurnPlan,
    goal_sql: str,
    cfg: GenConfig,
    transport: llmclient.Transport,
) -> GeneratedTurn:
    """Generate one turn per the plan; answerable SQL is execution-checked."""
    variant = plan.qa_type.variant
    prompt = _build_generation_prompt(db, history, plan, goal_sql, cfg)
    required = (
        ["question", "sql_candidates"]
        if variant is QuestionVariant.ANSWERABLE
        else ["question", "response"]
    )
    req = llmclient.ChatRequest(
        messages=(("user", prompt),),
        temperature=llmclient.GENERATION_TEMPERATURE,
        tag="generate_turn",
    )
    payload = llmclient.complete_json(req, transport, required)
    if not str(payload.get("question", "")).strip():
        retry = req.with_followup(
            "user",
            f"The question field must contain a non-empty {variant.value} question.",
        )
        payload = llmclient.complete_json(retry, transport, required)
        if not str(payload.get("question", "")).strip():
            raise GenerationRejected(
                f"model refused to produce a {variant.value} turn"
            )
    question = str(payload["question"]).strip()
    subtype = _parse_subtype(payload.get("subtype"), variant)
    qtype = QuestionType(variant, subtype)
    ends = bool(payload.get("ends_conversation", False))

    if variant is QuestionVariant.ANSWERABLE:
        candidates = [
            str(c).strip()
            for c in payload.get("sql_candidates", [])
            if str(c).strip()
        ][: cfg.sql_candidates_per_turn]
        if not candidates:
            raise NoExecutableSql("model produced no SQL candidates")
        chosen = executability_filter(db, candidates)
        if chosen is None:
            raise NoExecutableSql(f"all {len(candidates)} candidates failed execution")
        response = chosen
    else:
        response = str(payload.get("response", "")).strip()
        if not response:
            raise GenerationRejected(f"empty response for a {variant.value} turn")

    turn = Turn(
        index=plan.turn_index,
        question=question,
        question_type=qtype,
        relation=plan.relation,
        answer_type=canonical_answer_type(plan.qa_type),
        response=response,
        goal_sql=goal_sql if variant is QuestionVariant.ANSWERABLE else None,
    )
    return GeneratedTurn(turn, ends and variant is QuestionVariant.IMPROPER)


def derive_seed(seed: int, dialogue_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{dialogue_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def run_dialogue_generation(
    seed_dialogue: Dialogue,
    catalog: Mapping[str, dbexec.DatabaseRef],
    cfg: GenConfig,
    transport: llmclient.Transport,
) -> Dialogue:
    """Generate one augmented dialogue from a seed dialogue."""
    if seed_dialogue.database_id not in catalog:
        raise PipelineError(
            f"database {seed_dialogue.database_id!r} missing from catalog",
            seed_dialogue.id,
        )
    db = catalog[seed_dialogue.database_id]
    out_id = f"{seed_dialogue.id}-aug"
    rng = random.Random(derive_seed(cfg.seed, seed_dialogue.id))
    try:
        goals = select_goal_sql(seed_dialogue)
    except EmptyGoalError as exc:
        raise PipelineError(str(exc), seed_dialogue.id, cause=exc) from exc

    total_turns = rng.randint(*cfg.target_turns)
    turns: list[Turn] = []
    answerable_count = 0
    for index in range(1, total_turns + 1):
        plan = sample_turn_plan(cfg, index, rng)
        goal = goals[answerable_count % len(goals)]
        try:
            generated = _generate_with_fallback(db, turns, plan, goal, cfg, transport)
        except (
            llmclient.FormatError,
            llmclient.TransportError,
            llmclient.CassetteMiss,
            GenerationRejected,
        ) as exc:
            raise PipelineError(str(exc), out_id, index, cause=exc) from exc
        turns.append(generated.turn)
        if generated.turn.answer_type is AnswerType.SQL:
            answerable_count += 1
        log.info(
            json.dumps(
                {
                    "event": "turn_generated",
                    "dialogue": out_id,
                    "turn": index,
                    "type": generated.turn.question_type.variant.value,
                }
            )
        )
        if generated.ends_conversation:
            break

    dialogue = Dialogue(
        id=out_id,
        database_id=seed_dialogue.database_id,
        turns=tuple(turns),
        source=DialogueSource.AUGMENTED,
    )
    violations = validate_dialogue(dialogue)
    if violations:
        raise PipelineError(
            "generated dialogue failed validation: "
            + "; ".join(str(v) for v in violations),
            out_id,
        )
    return dialogue


def _generate_with_fallback(
    db: dbexec.DatabaseRef,
    history: list[Turn],
    plan: TurnPlan,
    goal: str,
    cfg: GenConfig,
    transport: llmclient.Transport,
) -> GeneratedTurn:
    try:
        return generate_turn(db, history, plan, goal, cfg, transport)
    except NoExecutableSql:
        pass
    try:
        relaxed = replace(cfg, complexity_nudge=False)
        return generate_turn(db, history, plan, goal, relaxed, transport)
    except NoExecutableSql:
        pass
    downgraded = TurnPlan(plan.relation, UNANSWERABLE, plan.turn_index)
    return generate_turn(db, history, downgraded, goal, cfg, transport)


def generate_many(
    seeds: list[Dialogue],
    catalog: Mapping[str, dbexec.DatabaseRef],
    cfg: GenConfig,
    transport: llmclient.Transport,
    jobs: int = 1,
) -> tuple[list[Dialogue], list[PipelineError]]:
    """Generate augmented dialogues for many seeds, preserving input order."""
    results: list[Optional[Dialogue]] = [None] * len(seeds)
    errors: list[PipelineError] = []

    def work(pos: int) -> None:
        try:
            results[pos] = run_dialogue_generation(seeds[pos], catalog, cfg, transport)
        except PipelineError as exc:
            errors.append(exc)

    if jobs <= 1:
        for pos in range(len(seeds)):
            work(pos)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(len(seeds))))
    return [d for d in results if d is not None], errors
