"""Generation stage: goal selection, planning, turn generation, pipeline."""

import json
import random

import pytest

from convsql import augment, llmclient, sqlkit
from convsql.augment import (
    EmptyGoalError,
    GenConfig,
    NoExecutableSql,
    TurnPlan,
    executability_filter,
    generate_turn,
    run_dialogue_generation,
    sample_turn_plan,
    select_goal_sql,
)
from convsql.domain import (
    ANSWERABLE,
    IMPROPER,
    UNANSWERABLE,
    AnswerType,
    Dialogue,
    DialogueSource,
    QuestionVariant,
    ThematicRelation,
    Turn,
    validate_dialogue,
)
from convsql.errors import PipelineError


def seed_dialogue(turn_specs, db="endowment", dialogue_id="seed-x"):
    turns = []
    for i, spec in enumerate(turn_specs, start=1):
        qtype, response = spec
        turns.append(
            Turn(
                index=i,
                question=f"question {i}",
                question_type=qtype,
                relation=ThematicRelation.NONE if i == 1 else ThematicRelation.TOPIC_EXPLORATION,
                answer_type=AnswerType.SQL if qtype is ANSWERABLE else AnswerType.SORRY,
                response=response,
            )
        )
    return Dialogue(dialogue_id, db, tuple(turns), DialogueSource.SEED)


class TestSelectGoalSql:
    def test_sql_turns_in_order(self):
        d = seed_dialogue(
            [
                (ANSWERABLE, "SELECT a FROM school"),
                (UNANSWERABLE, "Sorry."),
                (ANSWERABLE, "SELECT b FROM school"),
            ]
        )
        assert select_goal_sql(d) == ["SELECT a FROM school", "SELECT b FROM school"]

    def test_duplicates_removed(self):
        d = seed_dialogue(
            [(ANSWERABLE, "SELECT a FROM school"), (ANSWERABLE, "SELECT a FROM school")]
        )
        assert select_goal_sql(d) == ["SELECT a FROM school"]

    def test_no_sql_is_an_error(self):
        d = seed_dialogue([(UNANSWERABLE, "Sorry.")])
        with pytest.raises(EmptyGoalError):
            select_goal_sql(d)

    def test_only_seed_dialogues(self):
        d = seed_dialogue([(ANSWERABLE, "SELECT a FROM school")])
        augmented = Dialogue(d.id, d.database_id, d.turns, DialogueSource.AUGMENTED)
        with pytest.raises(ValueError):
            select_goal_sql(augmented)


class TestSampleTurnPlan:
    def test_turn_one_has_no_relation(self):
        for seed in range(20):
            plan = sample_turn_plan(GenConfig(), 1, random.Random(seed))
            assert plan.relation is ThematicRelation.NONE

    def test_golden_draw_for_seed_42(self):
        rng = random.Random(42)
        first = sample_turn_plan(GenConfig(), 1, rng)
        second = sample_turn_plan(GenConfig(), 2, rng)
        assert first.qa_type.variant is QuestionVariant.AMBIGUOUS
        assert second.qa_type.variant is QuestionVariant.ANSWERABLE
        assert second.relation is ThematicRelation.TOPIC_EXPLORATION

    def test_degenerate_weights(self):
        cfg = GenConfig(
            qa_type_weights={ANSWERABLE: 1.0, IMPROPER: 0.0, UNANSWERABLE: 0.0}
        )
        rng = random.Random(7)
        for turn in range(1, 30):
            assert sample_turn_plan(cfg, turn, rng).qa_type is ANSWERABLE

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GenConfig(qa_type_weights={ANSWERABLE: 0.5})

    def test_plan_validates_opening_relation(self):
        with pytest.raises(ValueError):
            TurnPlan(ThematicRelation.PARTICIPANT_SHIFT, ANSWERABLE, 1)


class TestExecutabilityFilter:
    def test_first_success_wins(self, endowment_db):
        chosen = executability_filter(
            endowment_db,
            ["SELECT broken FROM nowhere", "SELECT school_name FROM school"],
        )
        assert chosen == "SELECT school_name FROM school"

    def test_order_preserved(self, endowment_db):
        chosen = executability_filter(
            endowment_db,
            ["SELECT school_name FROM school", "SELECT location FROM school"],
        )
        assert chosen == "SELECT school_name FROM school"

    def test_all_failures_give_none(self, endowment_db):
        assert (
            executability_filter(endowment_db, ["SELECT x FROM y", "bad sql ("])
            is None
        )

    def test_empty_candidates_rejected(self, endowment_db):
        with pytest.raises(ValueError):
            executability_filter(endowment_db, [])


@pytest.fixture
def live(fake_llm):
    return llmclient.Transport("live")


class TestGenerateTurn:
    def test_answerable_turn_carries_executable_sql(self, endowment_db, live):
        plan = TurnPlan(ThematicRelation.NONE, ANSWERABLE, 1)
        generated = generate_turn(
            endowment_db, [], plan, "SELECT school_name FROM school", GenConfig(), live
        )
        turn = generated.turn
        assert turn.question_type.variant is QuestionVariant.ANSWERABLE
        assert turn.answer_type is AnswerType.SQL
        assert turn.goal_sql == "SELECT school_name FROM school"
        sqlkit.parse_sql(turn.response)
        assert not generated.ends_conversation

    def test_ambiguous_turn_gets_clarify(self, endowment_db, live):
        plan = TurnPlan(ThematicRelation.NONE, augment.AMBIGUOUS, 1)
        generated = generate_turn(
            endowment_db, [], plan, "SELECT school_name FROM school", GenConfig(), live
        )
        assert generated.turn.answer_type is AnswerType.CLARIFY
        assert generated.turn.question_type.subtype is not None
        assert generated.turn.goal_sql is None

    def test_improper_turn_flags_conversation_end(self, endowment_db, live):
        plan = TurnPlan(ThematicRelation.NONE, IMPROPER, 1)
        generated = generate_turn(
            endowment_db, [], plan, "SELECT school_name FROM school", GenConfig(), live
        )
        assert generated.turn.answer_type is AnswerType.REGULAR
        assert generated.ends_conversation

    def test_unexecutable_goal_raises(self, endowment_db, live):
        plan = TurnPlan(ThematicRelation.NONE, ANSWERABLE, 1)
        with pytest.raises(NoExecutableSql):
            generate_turn(
                endowment_db, [], plan, "SELECT mystery FROM school", GenConfig(), live
            )


class TestRunDialogueGeneration:
    def test_all_answerable_dialogue(self, corpus, live):
        cfg = GenConfig(
            target_turns=(2, 2),
            qa_type_weights={ANSWERABLE: 1.0},
            seed=5,
        )
        seed = corpus.dialogues[0]
        out = run_dialogue_generation(seed, corpus.databases, cfg, live)
        assert out.source is DialogueSource.AUGMENTED
        assert len(out.turns) == 2
        assert validate_dialogue(out) == []
        assert out.turns[0].relation is ThematicRelation.NONE
        assert out.turns[1].relation is not ThematicRelation.NONE
        for turn in out.turns:
            assert turn.answer_type is AnswerType.SQL

    def test_improper_turn_stops_generation(self, corpus, live):
        cfg = GenConfig(target_turns=(6, 6), qa_type_weights={IMPROPER: 1.0}, seed=1)
        out = run_dialogue_generation(corpus.dialogues[0], corpus.databases, cfg, live)
        assert len(out.turns) == 1
        assert out.turns[0].question_type.variant is QuestionVariant.IMPROPER

    def test_failed_candidates_downgrade_to_unanswerable(self, corpus, live):
        bad_seed = seed_dialogue(
            [(ANSWERABLE, "SELECT mystery FROM school")], dialogue_id="seed-bad"
        )
        cfg = GenConfig(target_turns=(1, 1), qa_type_weights={ANSWERABLE: 1.0}, seed=3)
        out = run_dialogue_generation(bad_seed, corpus.databases, cfg, live)
        assert len(out.turns) == 1
        assert out.turns[0].question_type.variant is QuestionVariant.UNANSWERABLE
        assert out.turns[0].answer_type is AnswerType.SORRY

    def test_missing_database_is_a_pipeline_error(self, live):
        seed = seed_dialogue([(ANSWERABLE, "SELECT a FROM t")], db="ghost")
        with pytest.raises(PipelineError):
            run_dialogue_generation(seed, {}, GenConfig(), live)

    def test_deterministic_under_replay(self, corpus, fake_llm, tmp_path):
        cassette = tmp_path / "gen.jsonl"
        cfg = GenConfig(target_turns=(3, 3), seed=11)
        seed = corpus.dialogues[1]
        recorded = run_dialogue_generation(
            seed, corpus.databases, cfg, llmclient.Transport("record", cassette)
        )
        replay = llmclient.Transport("replay", cassette)
        one = run_dialogue_generation(seed, corpus.databases, cfg, replay)
        two = run_dialogue_generation(seed, corpus.databases, cfg, replay)
        assert one == two == recorded
        assert json.dumps(one.to_json()) == json.dumps(two.to_json())

    def test_every_answerable_turn_executes(self, corpus, live):
        from convsql import dbexec

        cfg = GenConfig(target_turns=(4, 4), seed=2)
        for seed in corpus.dialogues[:4]:
            out = run_dialogue_generation(seed, corpus.databases, cfg, live)
            db = corpus.databases[out.database_id]
            for turn in out.turns:
                if turn.answer_type is AnswerType.SQL:
                    dbexec.execute_readonly(db, turn.response)

    def test_goal_alignment_proxy(self, corpus, live):
        cfg = GenConfig(target_turns=(2, 2), qa_type_weights={ANSWERABLE: 1.0}, seed=9)
        seed = corpus.dialogues[0]
        goals = select_goal_sql(seed)
        out = run_dialogue_generation(seed, corpus.databases, cfg, live)
        goal_tables = {
            frozenset(sqlkit.parse_sql(g).from_tables) for g in goals
        }
        turn_tables = [
            frozenset(sqlkit.parse_sql(t.response).from_tables)
            for t in out.turns
            if t.answer_type is AnswerType.SQL
        ]
        assert any(tables in goal_tables for tables in turn_tables)
