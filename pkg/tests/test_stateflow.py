"""Engine transitions, retries, ablation flags, and both answerers."""

import pytest

from convsql import llmclient
from convsql.domain import (
    AMBIGUOUS,
    ANSWERABLE,
    IMPROPER,
    UNANSWERABLE,
    AnswerType,
    QuestionVariant,
)
from convsql.stateflow import (
    FlowConfig,
    LEGAL_EDGES,
    Phase,
    ScriptRule,
    ScriptedAnswerer,
    init_session,
    recognize_intent,
    step,
    verify,
)


def scripted(*rules):
    return ScriptedAnswerer(list(rules))


def assert_legal_trace(result):
    phases = [entry.phase for entry in result.trace]
    assert phases[0] in (Phase.INITIAL, Phase.INTENT_RECOGNITION)
    assert phases[-1] is Phase.END
    for a, b in zip(phases, phases[1:]):
        assert (a, b) in LEGAL_EDGES, f"illegal edge {a} -> {b}"


class TestInitSession:
    def test_fresh_state(self, concert_db):
        state = init_session(concert_db, FlowConfig())
        assert state.phase is Phase.INITIAL
        assert state.history == []
        assert state.error_log == []
        assert state.solve_attempts == 0

    def test_sessions_are_independent(self, concert_db):
        a = init_session(concert_db, FlowConfig())
        b = init_session(concert_db, FlowConfig())
        a.history.append("x")
        assert b.history == []

    def test_config_stored_verbatim(self, concert_db):
        cfg = FlowConfig(max_retries=0)
        assert init_session(concert_db, cfg).cfg.max_retries == 0

    def test_negative_retries_rejected(self):
        with pytest.raises(ValueError):
            FlowConfig(max_retries=-1)


class TestScriptedSteps:
    def test_ambiguous_question_clarifies(self, concert_db):
        answerer = scripted(
            ScriptRule("What's the id of Glenn?", AMBIGUOUS, message="Which Glenn?")
        )
        state = init_session(concert_db, FlowConfig())
        result = step(state, "What's the id of Glenn?", answerer)
        assert result.question_type.variant is QuestionVariant.AMBIGUOUS
        assert result.response_kind is AnswerType.CLARIFY
        assert result.sql is None
        assert result.message == "Which Glenn?"
        assert_legal_trace(result)
        assert [e.phase for e in result.trace] == [
            Phase.INITIAL,
            Phase.INTENT_RECOGNITION,
            Phase.END,
        ]

    def test_retry_after_failure(self, concert_db):
        answerer = scripted(
            ScriptRule(
                "count the singers",
                ANSWERABLE,
                sql_sequence=("SELECT broken FROM nowhere", "SELECT count(*) FROM singer"),
            )
        )
        state = init_session(concert_db, FlowConfig(max_retries=1))
        result = step(state, "count the singers", answerer)
        assert result.response_kind is AnswerType.SQL
        assert result.sql == "SELECT count(*) FROM singer"
        assert result.result_rows.rows == ((4,),)
        assert [e.phase for e in result.trace] == [
            Phase.INITIAL,
            Phase.INTENT_RECOGNITION,
            Phase.SOLVE,
            Phase.VERIFY,
            Phase.SOLVE,
            Phase.VERIFY,
            Phase.END,
        ]
        assert len(state.error_log) == 1
        assert state.error_log[0].attempt == 1

    def test_exhaustion_ends_with_sorry(self, concert_db):
        answerer = scripted(
            ScriptRule(
                "break please",
                ANSWERABLE,
                sql_sequence=("SELECT broken FROM nowhere",),
            )
        )
        state = init_session(concert_db, FlowConfig(max_retries=2))
        result = step(state, "break please", answerer)
        assert result.question_type.variant is QuestionVariant.ANSWERABLE
        assert result.response_kind is AnswerType.SORRY
        assert "nowhere" in result.message
        assert len(state.error_log) == 3
        assert state.solve_attempts == 3
        assert_legal_trace(result)

    def test_second_step_starts_at_intent(self, concert_db):
        answerer = scripted(ScriptRule("hi", IMPROPER, message="Hello!"))
        state = init_session(concert_db, FlowConfig())
        step(state, "hi", answerer)
        result = step(state, "hi", answerer)
        assert result.trace[0].phase is Phase.INTENT_RECOGNITION
        assert len(state.history) == 2

    def test_history_grows_by_one_per_step(self, concert_db):
        answerer = scripted()
        state = init_session(concert_db, FlowConfig())
        for n in range(1, 4):
            step(state, f"message {n}", answerer)
            assert len(state.history) == n
            assert state.history[-1].index == n

    def test_concurrent_step_rejected(self, concert_db):
        state = init_session(concert_db, FlowConfig())
        state.stepping = True
        with pytest.raises(RuntimeError):
            step(state, "hello", scripted())


class TestAblationFlags:
    def test_no_intent_treats_everything_answerable(self, concert_db):
        answerer = scripted(ScriptRule("Thanks!", IMPROPER, message="np"))
        state = init_session(concert_db, FlowConfig(intent_enabled=False))
        assert recognize_intent(state, "Thanks!", answerer) == ANSWERABLE
        result = step(state, "Thanks!", answerer)
        assert result.question_type.variant is QuestionVariant.ANSWERABLE
        assert result.response_kind is AnswerType.SQL

    def test_no_verify_accepts_bad_sql(self, concert_db):
        state = init_session(concert_db, FlowConfig(verify_enabled=False))
        outcome = verify(state, "SELECT broken FROM nowhere")
        assert outcome.passed
        assert outcome.rows is None
        assert state.error_log == []

    def test_verify_on_logs_failures(self, concert_db):
        state = init_session(concert_db, FlowConfig())
        state.solve_attempts = 1
        outcome = verify(state, "SELECT broken FROM nowhere")
        assert not outcome.passed
        assert len(state.error_log) == 1
        assert "broken" in state.error_log[0].message or "nowhere" in state.error_log[0].message


class TestLlmAnswerer:
    @pytest.fixture
    def live(self, fake_llm):
        return llmclient.Transport("live")

    def test_intent_classification(self, concert_db, live):
        state = init_session(concert_db, FlowConfig())
        assert (
            recognize_intent(state, "Thanks!", live).variant
            is QuestionVariant.IMPROPER
        )
        assert (
            recognize_intent(state, "What's the id of Glenn?", live).variant
            is QuestionVariant.AMBIGUOUS
        )

    def test_full_step_with_llm(self, concert_db, live):
        state = init_session(concert_db, FlowConfig())
        result = step(state, "How many concerts are there?", live)
        assert result.response_kind is AnswerType.SQL
        assert result.sql == "SELECT count(*) FROM stadium"
        assert_legal_trace(result)

    def test_error_log_reaches_the_prompt(self, concert_db, fake_llm):
        state = init_session(concert_db, FlowConfig(max_retries=1))
        result = step(state, "please fail-probe this", llmclient.Transport("live"))
        assert result.response_kind is AnswerType.SQL
        solve_prompts = [
            p["messages"][-1]["content"]
            for p in fake_llm
            if "Write a single SQLite SELECT" in p["messages"][-1]["content"]
        ]
        assert len(solve_prompts) == 2
        assert "Previous attempts failed" not in solve_prompts[0]
        assert "Previous attempts failed" in solve_prompts[1]
        assert "no such table: nowhere" in solve_prompts[1]

    def test_nonanswerable_reply(self, concert_db, live):
        state = init_session(concert_db, FlowConfig())
        result = step(state, "Thanks!", live)
        assert result.response_kind is AnswerType.REGULAR
        assert result.message == "You are welcome!"
