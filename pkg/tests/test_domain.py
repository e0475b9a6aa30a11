"""Domain type invariants, pairings, validation, and JSON round-trips."""

import pytest
from hypothesis import given, strategies as st

from convsql.domain import (
    ANSWERABLE,
    AMBIGUOUS,
    IMPROPER,
    UNANSWERABLE,
    AnswerType,
    Dialogue,
    DialogueSource,
    EvalRecord,
    QuestionSubtype,
    QuestionType,
    QuestionVariant,
    ThematicRelation,
    Turn,
    canonical_answer_type,
    validate_dialogue,
)


def make_turn(index, question="Show the rows.", qtype=ANSWERABLE, **kwargs):
    defaults = dict(
        question_type=qtype,
        relation=ThematicRelation.NONE if index == 1 else ThematicRelation.TOPIC_EXPLORATION,
        answer_type=canonical_answer_type(qtype),
        response="SELECT name FROM t" if qtype is ANSWERABLE else "Sure.",
    )
    defaults.update(kwargs)
    return Turn(index=index, question=question, **defaults)


def make_dialogue(turns, source=DialogueSource.AUGMENTED, db="concert"):
    return Dialogue(id="d1", database_id=db, turns=tuple(turns), source=source)


class TestQuestionType:
    def test_subtype_requires_refinable_variant(self):
        with pytest.raises(ValueError):
            QuestionType(QuestionVariant.ANSWERABLE, QuestionSubtype.COLUMN_AMBIGUITY)

    def test_subtype_must_match_variant(self):
        with pytest.raises(ValueError):
            QuestionType(QuestionVariant.AMBIGUOUS, QuestionSubtype.OUT_OF_SCOPE)
        QuestionType(QuestionVariant.AMBIGUOUS, QuestionSubtype.VALUE_AMBIGUITY)
        QuestionType(QuestionVariant.UNANSWERABLE, QuestionSubtype.OUT_OF_SCOPE)

    def test_json_roundtrip_with_subtype(self):
        q = QuestionType(QuestionVariant.UNANSWERABLE, QuestionSubtype.COLUMN_UNANSWERABLE)
        assert QuestionType.from_json(q.to_json()) == q
        assert q.to_json() == {
            "variant": "unanswerable",
            "subtype": "column_unanswerable",
        }

    def test_json_omits_absent_subtype(self):
        assert ANSWERABLE.to_json() == {"variant": "answerable"}


class TestCanonicalAnswerType:
    @pytest.mark.parametrize(
        "qtype, expected",
        [
            (ANSWERABLE, AnswerType.SQL),
            (AMBIGUOUS, AnswerType.CLARIFY),
            (UNANSWERABLE, AnswerType.SORRY),
            (IMPROPER, AnswerType.REGULAR),
        ],
    )
    def test_pairing(self, qtype, expected):
        assert canonical_answer_type(qtype) is expected

    def test_bijection(self):
        images = {canonical_answer_type(QuestionType(v)) for v in QuestionVariant}
        assert images == set(AnswerType)


class TestValidateDialogue:
    def test_well_formed(self):
        d = make_dialogue(
            [make_turn(1), make_turn(2, qtype=AMBIGUOUS), make_turn(3)]
        )
        assert validate_dialogue(d) == []

    def test_unparseable_sql(self):
        bad = make_turn(2, answer_type=AnswerType.SQL, response="hello")
        d = make_dialogue([make_turn(1), bad])
        violations = validate_dialogue(d)
        assert len(violations) == 1
        assert violations[0].turn_index == 2
        assert violations[0].rule == "unparseable_sql"

    def test_non_contiguous_indices(self):
        d = make_dialogue([make_turn(1), make_turn(3)])
        rules = {v.rule for v in validate_dialogue(d)}
        assert "contiguous_indices" in rules

    def test_empty_question(self):
        d = make_dialogue([make_turn(1, question="  ")])
        assert any(v.rule == "non_empty_question" for v in validate_dialogue(d))

    def test_score_only_on_sql(self):
        turn = make_turn(1, qtype=IMPROPER, execution_score=9)
        d = make_dialogue([turn])
        assert any(v.rule == "score_without_sql" for v in validate_dialogue(d))

    def test_opening_relation_must_be_none(self):
        turn = make_turn(1, relation=ThematicRelation.PARTICIPANT_SHIFT)
        d = make_dialogue([turn])
        assert any(v.rule == "opening_relation" for v in validate_dialogue(d))

    def test_later_turns_need_relation(self):
        d = make_dialogue([make_turn(1), make_turn(2, relation=ThematicRelation.NONE)])
        assert any(v.rule == "missing_relation" for v in validate_dialogue(d))

    def test_one_trailing_improper_is_fine(self):
        d = make_dialogue([make_turn(1), make_turn(2, qtype=IMPROPER)])
        assert validate_dialogue(d) == []

    def test_mid_dialogue_improper_is_fine(self):
        d = make_dialogue(
            [make_turn(1), make_turn(2, qtype=IMPROPER), make_turn(3)]
        )
        assert validate_dialogue(d) == []

    def test_two_trailing_impropers_flagged(self):
        d = make_dialogue(
            [make_turn(1), make_turn(2, qtype=IMPROPER), make_turn(3, qtype=IMPROPER)]
        )
        assert any(v.rule == "trailing_improper" for v in validate_dialogue(d))


subtypes = {
    QuestionVariant.AMBIGUOUS: [None, QuestionSubtype.COLUMN_AMBIGUITY, QuestionSubtype.VALUE_AMBIGUITY],
    QuestionVariant.UNANSWERABLE: [
        None,
        QuestionSubtype.COLUMN_UNANSWERABLE,
        QuestionSubtype.VALUE_UNANSWERABLE,
        QuestionSubtype.OUT_OF_SCOPE,
    ],
}


@st.composite
def question_types(draw):
    variant = draw(st.sampled_from(list(QuestionVariant)))
    subtype = draw(st.sampled_from(subtypes.get(variant, [None])))
    return QuestionType(variant, subtype)


@st.composite
def turns(draw, index):
    qtype = draw(question_types())
    answer = canonical_answer_type(qtype)
    response = "SELECT name FROM t" if answer is AnswerType.SQL else draw(st.text(min_size=1, max_size=30))
    return Turn(
        index=index,
        question=draw(st.text(min_size=1, max_size=40).filter(str.strip)),
        question_type=qtype,
        relation=ThematicRelation.NONE
        if index == 1
        else draw(st.sampled_from([r for r in ThematicRelation if r is not ThematicRelation.NONE])),
        answer_type=answer,
        response=response,
        goal_sql=draw(st.sampled_from([None, "SELECT a FROM t"])) if answer is AnswerType.SQL else None,
        execution_score=draw(st.sampled_from([None, 0, 7, 10])) if answer is AnswerType.SQL else None,
        verified=draw(st.booleans()),
    )


@st.composite
def dialogues(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    return Dialogue(
        id=draw(st.text(min_size=1, max_size=12)),
        database_id="concert",
        turns=tuple(draw(turns(index=i + 1)) for i in range(n)),
        source=draw(st.sampled_from(list(DialogueSource))),
    )


@given(dialogues())
def test_dialogue_json_roundtrip(d):
    assert Dialogue.from_json(d.to_json()) == d


@given(question_types(), question_types())
def test_eval_record_roundtrip(gold, pred):
    record = EvalRecord(
        dialogue_id="d9",
        turn_index=2,
        gold_type=gold,
        pred_type=pred,
        gold_sql="SELECT a FROM t" if gold.variant is QuestionVariant.ANSWERABLE else None,
        pred_sql="SELECT b FROM t",
    )
    assert EvalRecord.from_json(record.to_json()) == record
