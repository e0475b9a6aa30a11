"""Corpus ingestion, dataset persistence, training assembly, statistics.

The seed loader targets the published SParC/CoSQL layout: a dialogue JSON
file (``train.json`` or ``sql_state_tracking/cosql_train.json``), a
``tables.json`` catalog, and a ``database/`` directory of SQLite files.
Dialogue-act annotations, where a corpus carries them, map onto the four
question types through the frozen ACT_LABEL_MAP table below. Seed turns
without a relation annotation default to topic_exploration, the generic
"more about the same entity" link.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

from . import dbexec, prompts, sqlkit
from .domain import (
    ANSWERABLE,
    AMBIGUOUS,
    IMPROPER,
    UNANSWERABLE,
    AnswerType,
    Dialogue,
    DialogueSource,
    QuestionType,
    QuestionVariant,
    ThematicRelation,
    Turn,
    canonical_answer_type,
    validate_dialogue,
)


class LayoutError(FileNotFoundError):
    """The corpus root does not have the published layout."""


class ValidationError(ValueError):
    """A dataset file or dialogue failed validation; carries the location."""


# Versioned mapping from seed-corpus user dialogue acts to question types.
# Label vocabularies differ across releases; unknown labels are errors so
# no turn is silently misfiled.
ACT_LABEL_MAP: dict[str, QuestionType] = {
    "INFORM_SQL": ANSWERABLE,
    "INFER_SQL": ANSWERABLE,
    "AMBIGUOUS": AMBIGUOUS,
    "CANNOT_UNDERSTAND": AMBIGUOUS,
    "CANNOT_ANSWER": UNANSWERABLE,
    "NOT_RELATED": IMPROPER,
    "GREETING": IMPROPER,
    "GOODBYE": IMPROPER,
    "THANK_YOU": IMPROPER,
    "AFFIRM": IMPROPER,
    "NEGATE": IMPROPER,
}

_DEFAULT_SEED_RESPONSES = {
    AnswerType.CLARIFY: "Could you clarify which one you mean?",
    AnswerType.SORRY: "Sorry, the database does not hold that information.",
    AnswerType.REGULAR: "You are welcome!",
}

_DEFAULT_RELATION = ThematicRelation.TOPIC_EXPLORATION


@dataclass
class CorpusCatalog:
    """Seed dialogues plus the databases they run against."""

    databases: dict[str, dbexec.DatabaseRef]
    dialogues: list[Dialogue] = field(default_factory=list)

    def __post_init__(self) -> None:
        for dialogue in self.dialogues:
            if dialogue.database_id not in self.databases:
                raise ValidationError(
                    f"dialogue {dialogue.id!r} references unknown database "
                    f"{dialogue.database_id!r}"
                )


def load_seed_corpus(root: Path, split: str = "train") -> CorpusCatalog:
    """Load a SParC/CoSQL-layout corpus from ``root``."""
    root = Path(root)
    tables_json = root / "tables.json"
    database_dir = root / "database"
    if not tables_json.is_file():
        raise LayoutError(f"missing {tables_json}")
    if not database_dir.is_dir():
        raise LayoutError(f"missing database directory {database_dir}")
    candidates = [
        root / f"{split}.json",
        root / "sql_state_tracking" / f"cosql_{split}.json",
    ]
    dialogue_file = next((c for c in candidates if c.is_file()), None)
    if dialogue_file is None:
        raise LayoutError(
            f"no dialogue file for split {split!r}; looked for "
            + ", ".join(str(c) for c in candidates)
        )

    try:
        databases = dbexec.load_spider_catalog(tables_json, database_dir)
    except FileNotFoundError as exc:
        raise LayoutError(str(exc)) from exc

    with open(dialogue_file, encoding="utf-8") as handle:
        entries = json.load(handle)
    dialogues = []
    for i, entry in enumerate(entries):
        dialogues.append(_parse_seed_entry(entry, i, split, dialogue_file))
    return CorpusCatalog(databases=databases, dialogues=dialogues)


def _parse_seed_entry(
    entry: dict, position: int, split: str, source: Path
) -> Dialogue:
    db_id = entry.get("database_id") or entry.get("db_id")
    if not db_id:
        raise ValidationError(f"{source}: entry {position} has no database id")
    dialogue_id = entry.get("id") or f"{split}-{position:05d}"
    interaction = entry.get("interaction")
    if not interaction:
        raise ValidationError(f"{source}: dialogue {dialogue_id!r} has no turns")
    turns = []
    for t, item in enumerate(interaction, start=1):
        question = (item.get("utterance") or "").strip()
        query = (item.get("query") or "").strip()
        act = item.get("dialogue_act")
        if act is not None:
            act = str(act).upper()
            if act not in ACT_LABEL_MAP:
                raise ValidationError(
                    f"{source}: dialogue {dialogue_id!r} turn {t} has unknown "
                    f"dialogue act {act!r}"
                )
            qtype = ACT_LABEL_MAP[act]
        else:
            qtype = ANSWERABLE
        answer_type = canonical_answer_type(qtype)
        if answer_type is AnswerType.SQL:
            if not query:
                raise ValidationError(
                    f"{source}: dialogue {dialogue_id!r} turn {t} is answerable "
                    "but has no query"
                )
            response = query
        else:
            response = (
                item.get("response") or _DEFAULT_SEED_RESPONSES[answer_type]
            )
        turns.append(
            Turn(
                index=t,
                question=question,
                question_type=qtype,
                relation=(
                    ThematicRelation.NONE if t == 1 else _DEFAULT_RELATION
                ),
                answer_type=answer_type,
                response=response,
            )
        )
    dialogue = Dialogue(
        id=dialogue_id,
        database_id=db_id,
        turns=tuple(turns),
        source=DialogueSource.SEED,
    )
    violations = validate_dialogue(dialogue)
    if violations:
        raise ValidationError(
            f"{source}: dialogue {dialogue_id!r} invalid: "
            + "; ".join(str(v) for v in violations)
        )
    return dialogue


# ---------------------------------------------------------------------------
# Dataset persistence (JSON-lines of Dialogue)


def write_dataset(dialogues: list[Dialogue], path: Path) -> None:
    """One dialogue per line; dialogues must validate."""
    path = Path(path)
    for dialogue in dialogues:
        violations = validate_dialogue(dialogue)
        if violations:
            raise ValidationError(
                f"dialogue {dialogue.id!r} invalid: "
                + "; ".join(str(v) for v in violations)
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for dialogue in dialogues:
            handle.write(json.dumps(dialogue.to_json(), ensure_ascii=False) + "\n")


def read_dataset(path: Path) -> list[Dialogue]:
    dialogues = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                dialogues.append(Dialogue.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}, line {lineno}: {exc}") from exc
    return dialogues


def write_records(records, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")


def read_records(path: Path):
    from .domain import EvalRecord

    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(EvalRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValidationError(f"{path}, line {lineno}: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Training-data assembly


class TrainMode(Enum):
    WITH_INTENT = "with_intent"
    SQL_ONLY = "sql_only"


class TrainTask(Enum):
    INTENT_RECOGNITION = "intent_recognition"
    SOLVE = "solve"


@dataclass(frozen=True)
class TrainingSample:
    task: TrainTask
    prompt: str
    target: str
    origin: tuple[str, int]  # (dialogue_id, turn_index)

    def to_json(self) -> dict[str, Any]:
        return {
            "task": self.task.value,
            "prompt": self.prompt,
            "target": self.target,
            "origin": {"dialogue_id": self.origin[0], "turn_index": self.origin[1]},
        }


def _solve_prompt(db: dbexec.DatabaseRef, history_text: str, question: str) -> str:
    # identical shape to the inference engine's solve prompt, with the
    # error-log slot left empty
    return prompts.load_template("solve").format(
        schema=dbexec.schema_prompt_text(
            db.schema, sample_rows=dbexec.DEFAULT_SAMPLE_ROWS, db=db
        ),
        history=history_text,
        question=question,
        error_log="",
    )


def _intent_prompt(db: dbexec.DatabaseRef, history_text: str, question: str) -> str:
    guides = prompts.TYPE_GUIDES
    return prompts.load_template("intent").format(
        answerable_def=guides[QuestionVariant.ANSWERABLE].definition,
        ambiguous_def=guides[QuestionVariant.AMBIGUOUS].definition,
        unanswerable_def=guides[QuestionVariant.UNANSWERABLE].definition,
        improper_def=guides[QuestionVariant.IMPROPER].definition,
        schema=dbexec.schema_prompt_text(db.schema),
        history=history_text,
        question=question,
    )


def assemble_training_data(
    dialogues: list[Dialogue],
    databases: Mapping[str, dbexec.DatabaseRef],
    mode: TrainMode,
    balance_ratio: float = 3.0,
    seed: int = 0,
) -> list[TrainingSample]:
    """Decompose dialogues into per-state training samples.

    SQL_ONLY keeps one solve sample per answerable turn. WITH_INTENT adds
    one intent sample per turn of every type, then downsamples the
    majority intent class until majority/minority <= balance_ratio.
    Deterministic for a fixed seed.
    """
    from .augment import render_history

    solve_samples: list[TrainingSample] = []
    intent_samples: list[TrainingSample] = []
    for dialogue in dialogues:
        db = databases.get(dialogue.database_id)
        if db is None:
            raise ValidationError(
                f"dialogue {dialogue.id!r} references unknown database "
                f"{dialogue.database_id!r}"
            )
        for turn in dialogue.turns:
            history_text = render_history(dialogue.turns[: turn.index - 1])
            if turn.answer_type is AnswerType.SQL:
                solve_samples.append(
                    TrainingSample(
                        TrainTask.SOLVE,
                        _solve_prompt(db, history_text, turn.question),
                        turn.response,
                        (dialogue.id, turn.index),
                    )
                )
            if mode is TrainMode.WITH_INTENT:
                intent_samples.append(
                    TrainingSample(
                        TrainTask.INTENT_RECOGNITION,
                        _intent_prompt(db, history_text, turn.question),
                        turn.question_type.variant.value,
                        (dialogue.id, turn.index),
                    )
                )
    if mode is TrainMode.SQL_ONLY:
        return solve_samples
    intent_samples = _downsample_majority(intent_samples, balance_ratio, seed)
    return solve_samples + intent_samples


def _downsample_majority(
    samples: list[TrainingSample], balance_ratio: float, seed: int
) -> list[TrainingSample]:
    counts = Counter(s.target for s in samples)
    if len(counts) < 2:
        return samples
    majority, majority_count = counts.most_common(1)[0]
    minority_count = min(counts.values())
    cap = int(balance_ratio * minority_count)
    if majority_count <= cap:
        return samples
    rng = random.Random(seed)
    majority_positions = [i for i, s in enumerate(samples) if s.target == majority]
    keep = set(rng.sample(majority_positions, cap))
    return [
        s
        for i, s in enumerate(samples)
        if s.target != majority or i in keep
    ]


# ---------------------------------------------------------------------------
# Statistics report


@dataclass
class StatsReport:
    dialogue_count: int
    turn_count: int
    avg_turns: Optional[float]
    turn_length_histogram: dict[int, int]
    ast_depth_histogram: dict[int, int]
    type_distribution: dict[str, int]

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "dialogue_count": self.dialogue_count,
            "turn_count": self.turn_count,
            "turn_length_histogram": {
                str(k): v for k, v in sorted(self.turn_length_histogram.items())
            },
            "ast_depth_histogram": {
                str(k): v for k, v in sorted(self.ast_depth_histogram.items())
            },
            "type_distribution": dict(sorted(self.type_distribution.items())),
        }
        if self.avg_turns is not None:
            out["avg_turns"] = self.avg_turns
        return out


def stats_report(dialogues: list[Dialogue]) -> StatsReport:
    """Counts, dialogue-length histogram, and SQL tree-depth histogram."""
    turn_lengths = Counter(len(d.turns) for d in dialogues)
    types = Counter(
        t.question_type.variant.value for d in dialogues for t in d.turns
    )
    depths: Counter = Counter()
    for dialogue in dialogues:
        for turn in dialogue.turns:
            if turn.answer_type is AnswerType.SQL:
                depths[sqlkit.ast_depth(sqlkit.parse_sql(turn.response))] += 1
    turn_count = sum(len(d.turns) for d in dialogues)
    return StatsReport(
        dialogue_count=len(dialogues),
        turn_count=turn_count,
        avg_turns=turn_count / len(dialogues) if dialogues else None,
        turn_length_histogram=dict(turn_lengths),
        ast_depth_histogram=dict(depths),
        type_distribution=dict(types),
    )
