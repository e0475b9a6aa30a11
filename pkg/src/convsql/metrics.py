"""Evaluation suite over per-turn prediction records.

Turn-level structural SQL matching (QM), its all-turns interaction version
(IM), type accuracy (Acc), type accuracy gated by QM on answerable turns
(AccS) and its all-or-nothing per-dialogue form (IAccS), one-vs-rest
precision/recall/F1 per question type, and the execution error rate.
Aggregation is at the four-variant level; subtypes stay metadata. Also
hosts the pairwise quality judge with placement alternation and the
failure classifier.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional

from . import dbexec, llmclient, prompts, sqlkit
from .domain import Dialogue, EvalRecord, QuestionVariant


class EmptyInput(ValueError):
    """A metric was asked to aggregate over zero records."""


@dataclass(frozen=True)
class EvalContext:
    """Resolves records to their database for parsing and execution."""

    dialogue_db: Mapping[str, str]
    databases: Mapping[str, dbexec.DatabaseRef]

    @classmethod
    def from_dialogues(
        cls,
        dialogues: Iterable[Dialogue],
        databases: Mapping[str, dbexec.DatabaseRef],
    ) -> "EvalContext":
        return cls({d.id: d.database_id for d in dialogues}, databases)

    def db_for(self, dialogue_id: str) -> Optional[dbexec.DatabaseRef]:
        db_id = self.dialogue_db.get(dialogue_id)
        return self.databases.get(db_id) if db_id else None

    def schema_for(self, dialogue_id: str) -> Optional[dbexec.DatabaseSchema]:
        db = self.db_for(dialogue_id)
        return db.schema if db else None


def question_match(
    gold_sql: str,
    pred_sql: Optional[str],
    schema: Optional[dbexec.DatabaseSchema] = None,
    include_values: bool = False,
) -> bool:
    """Structural match of predicted SQL against gold at the turn level.

    Gold must parse (errors propagate); an unparseable or missing
    prediction scores False so evaluation never aborts on bad output.
    """
    gold = sqlkit.parse_sql(gold_sql, schema)
    if pred_sql is None:
        return False
    try:
        pred = sqlkit.parse_sql(pred_sql, schema)
    except sqlkit.SqlError:
        return False
    return sqlkit.exact_set_match(gold, pred, include_values=include_values)


def _type_match(record: EvalRecord) -> bool:
    return record.gold_type.variant is record.pred_type.variant


def _record_qm(record: EvalRecord, ctx: Optional[EvalContext]) -> bool:
    if record.gold_sql is None:
        return False
    schema = ctx.schema_for(record.dialogue_id) if ctx else None
    return question_match(record.gold_sql, record.pred_sql, schema)


def interaction_match(
    records: list[EvalRecord], ctx: Optional[EvalContext] = None
) -> bool:
    """True iff every answerable-gold record of one dialogue achieves QM."""
    ids = {r.dialogue_id for r in records}
    if len(ids) > 1:
        raise ValueError(f"records span several dialogues: {sorted(ids)}")
    return all(
        _record_qm(r, ctx)
        for r in records
        if r.gold_type.variant is QuestionVariant.ANSWERABLE
    )


def acc(records: list[EvalRecord]) -> float:
    """Fraction of records whose predicted type equals gold."""
    if not records:
        raise EmptyInput("acc needs at least one record")
    return sum(1 for r in records if _type_match(r)) / len(records)


def accs(records: list[EvalRecord], ctx: Optional[EvalContext] = None) -> float:
    """Type accuracy, additionally requiring QM on answerable-gold turns."""
    if not records:
        raise EmptyInput("accs needs at least one record")
    total = 0.0
    for r in records:
        matched = _type_match(r)
        if r.gold_type.variant is QuestionVariant.ANSWERABLE:
            total += 1.0 if (matched and _record_qm(r, ctx)) else 0.0
        else:
            total += 1.0 if matched else 0.0
    return total / len(records)


def _by_dialogue(records: list[EvalRecord]) -> dict[str, list[EvalRecord]]:
    groups: dict[str, list[EvalRecord]] = defaultdict(list)
    for r in records:
        groups[r.dialogue_id].append(r)
    return groups


def iaccs(records: list[EvalRecord], ctx: Optional[EvalContext] = None) -> float:
    """All-or-nothing AccS per dialogue, averaged over dialogues."""
    if not records:
        raise EmptyInput("iaccs needs at least one record")
    groups = _by_dialogue(records)
    perfect = 0
    for group in groups.values():
        ok = all(_type_match(r) for r in group) and all(
            _record_qm(r, ctx)
            for r in group
            if r.gold_type.variant is QuestionVariant.ANSWERABLE
        )
        perfect += 1 if ok else 0
    return perfect / len(groups)


@dataclass(frozen=True)
class Prf:
    precision: float
    recall: float
    f1: float

    def to_json(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def per_type_prf(records: list[EvalRecord]) -> dict[QuestionVariant, Prf]:
    """One-vs-rest precision/recall/F1 per type; zero denominators give 0."""
    if not records:
        raise EmptyInput("per_type_prf needs at least one record")
    out: dict[QuestionVariant, Prf] = {}
    for variant in QuestionVariant:
        tp = sum(
            1
            for r in records
            if r.gold_type.variant is variant and r.pred_type.variant is variant
        )
        pred = sum(1 for r in records if r.pred_type.variant is variant)
        gold = sum(1 for r in records if r.gold_type.variant is variant)
        precision = tp / pred if pred else 0.0
        recall = tp / gold if gold else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        out[variant] = Prf(precision, recall, f1)
    return out


def macro_prf(per_type: dict[QuestionVariant, Prf]) -> Prf:
    n = len(per_type)
    return Prf(
        sum(p.precision for p in per_type.values()) / n,
        sum(p.recall for p in per_type.values()) / n,
        sum(p.f1 for p in per_type.values()) / n,
    )


def error_rate(
    records: list[EvalRecord], ctx: Optional[EvalContext] = None
) -> Optional[float]:
    """Fraction of predicted SQL that fails execution; None without any."""
    with_sql = [r for r in records if r.pred_sql is not None]
    if not with_sql:
        return None
    failures = 0
    for r in with_sql:
        db = ctx.db_for(r.dialogue_id) if ctx else None
        if db is None:
            failures += 1
            continue
        try:
            dbexec.execute_readonly(db, r.pred_sql)
        except (dbexec.ExecError, dbexec.RejectedError, dbexec.ExecTimeout):
            failures += 1
    return failures / len(with_sql)


@dataclass
class EvalSummary:
    qm: Optional[float]
    im: Optional[float]
    acc: float
    accs: float
    iaccs: float
    per_type: dict[QuestionVariant, Prf]
    per_type_macro: Prf
    error_rate: Optional[float]
    counts: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "acc": self.acc,
            "accs": self.accs,
            "iaccs": self.iaccs,
            "per_type": {v.value: p.to_json() for v, p in self.per_type.items()},
            "per_type_macro": self.per_type_macro.to_json(),
            "counts": dict(self.counts),
        }
        if self.qm is not None:
            out["qm"] = self.qm
        if self.im is not None:
            out["im"] = self.im
        if self.error_rate is not None:
            out["error_rate"] = self.error_rate
        return out


def evaluate(
    records: list[EvalRecord], ctx: Optional[EvalContext] = None
) -> EvalSummary:
    """Compute the whole metric suite over a record set."""
    if not records:
        raise EmptyInput("evaluate needs at least one record")
    answerable = [
        r for r in records if r.gold_type.variant is QuestionVariant.ANSWERABLE
    ]
    qm_rate = (
        sum(1 for r in answerable if _record_qm(r, ctx)) / len(answerable)
        if answerable
        else None
    )
    groups = _by_dialogue(records)
    im_rate = sum(
        1 for g in groups.values() if interaction_match(g, ctx)
    ) / len(groups)
    per_type = per_type_prf(records)
    return EvalSummary(
        qm=qm_rate,
        im=im_rate,
        acc=acc(records),
        accs=accs(records, ctx),
        iaccs=iaccs(records, ctx),
        per_type=per_type,
        per_type_macro=macro_prf(per_type),
        error_rate=error_rate(records, ctx),
        counts={
            "records": len(records),
            "dialogues": len(groups),
            "answerable_gold": len(answerable),
            "sql_predictions": sum(1 for r in records if r.pred_sql is not None),
        },
    )


# ---------------------------------------------------------------------------
# Pairwise quality judge


JUDGE_CRITERIA = ("completeness", "relevance", "utility", "overall")


@dataclass(frozen=True)
class JudgeVerdict:
    pair_id: int
    a_first: bool
    winners: Mapping[str, str]  # criterion -> "A" | "B" | "Tie"
    raw: str

    def to_json(self) -> dict[str, Any]:
        return {
            "pair_id": self.pair_id,
            "a_first": self.a_first,
            "winners": dict(self.winners),
        }


def pairwise_judge(
    a: Dialogue,
    b: Dialogue,
    pair_id: int,
    transport: llmclient.Transport,
) -> JudgeVerdict:
    """Compare two dialogues per criterion with position alternation.

    Dialogue ``a`` occupies the first prompt slot for odd pair ids and the
    second for even ids; the judge's positional verdicts are mapped back
    to logical A/B before returning.
    """
    from .augment import render_history

    a_first = pair_id % 2 == 1
    first, second = (a, b) if a_first else (b, a)
    prompt = prompts.load_template("judge_pairwise").format(
        dialogue_first=render_history(first.turns),
        dialogue_second=render_history(second.turns),
    )
    payload = llmclient.complete_json(
        llmclient.ChatRequest(
            messages=(("user", prompt),),
            temperature=llmclient.INFERENCE_TEMPERATURE,
            tag=f"judge_pair_{pair_id}",
        ),
        transport,
        list(JUDGE_CRITERIA),
    )
    winners: dict[str, str] = {}
    for criterion in JUDGE_CRITERIA:
        verdict = str(payload[criterion]).strip().lower()
        if verdict == "tie":
            winners[criterion] = "Tie"
        elif verdict in ("1", "first", "conversation 1"):
            winners[criterion] = "A" if a_first else "B"
        elif verdict in ("2", "second", "conversation 2"):
            winners[criterion] = "B" if a_first else "A"
        else:
            raise llmclient.FormatError(
                f"unrecognized verdict {verdict!r} for {criterion}", raw=str(payload)
            )
    return JudgeVerdict(pair_id, a_first, winners, raw=str(payload))


# ---------------------------------------------------------------------------
# Failure classifier


class ErrorClass(Enum):
    SEMANTIC_UNDERSTANDING = "semantic_understanding"
    SQL_EXECUTION = "sql_execution"
    LOGICAL = "logical"
    DATABASE_COMPREHENSION = "database_comprehension"


def classify_error(
    record: EvalRecord,
    transport: llmclient.Transport,
    question: Optional[str] = None,
    failure: Optional[str] = None,
) -> ErrorClass:
    """Classify one failed prediction into the four-way error taxonomy."""
    prompt = prompts.load_template("classify_error").format(
        question=question or "(not recorded)",
        gold_sql=record.gold_sql or "(none)",
        pred_sql=record.pred_sql or "(none)",
        failure=failure or "prediction failed the structural match",
    )
    payload = llmclient.complete_json(
        llmclient.ChatRequest(
            messages=(("user", prompt),),
            temperature=llmclient.INFERENCE_TEMPERATURE,
            tag="classify_error",
        ),
        transport,
        ["error_class"],
    )
    label = str(payload["error_class"]).strip().lower()
    try:
        return ErrorClass(label)
    except ValueError as exc:
        raise llmclient.FormatError(
            f"unknown error class {label!r}", raw=str(payload)
        ) from exc
