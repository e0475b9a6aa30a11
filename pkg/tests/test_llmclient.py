"""Transport modes, hashing, retries, and structured-output parsing."""

import json

import pytest
import requests

from convsql import llmclient
from convsql.llmclient import (
    CassetteMiss,
    ChatRequest,
    FormatError,
    RetryPolicy,
    Transport,
    TransportError,
    complete,
    complete_json,
    extract_int,
    request_hash,
)


def req(text="hello", **kwargs):
    return ChatRequest(messages=(("user", text),), **kwargs)


class TestChatRequest:
    def test_needs_a_message(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=())

    def test_rejects_unknown_role(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(("robot", "hi"),))

    def test_rejects_bad_temperature(self):
        with pytest.raises(ValueError):
            req(temperature=float("nan"))
        with pytest.raises(ValueError):
            req(temperature=-1.0)


class TestRequestHash:
    def test_each_field_feeds_the_hash(self):
        base = req("q", temperature=0.5, max_tokens=64, tag="t")
        variants = [
            req("other", temperature=0.5, max_tokens=64, tag="t"),
            req("q", temperature=0.9, max_tokens=64, tag="t"),
            req("q", temperature=0.5, max_tokens=128, tag="t"),
            req("q", temperature=0.5, max_tokens=64, tag="u"),
        ]
        digests = {request_hash(base)} | {request_hash(v) for v in variants}
        assert len(digests) == 5

    def test_stable(self):
        assert request_hash(req("q")) == request_hash(req("q"))


class TestTransport:
    def test_modes_validated(self):
        with pytest.raises(ValueError):
            Transport(mode="weird")
        with pytest.raises(ValueError):
            Transport(mode="replay")

    def test_record_then_replay(self, fake_llm, tmp_path):
        cassette = tmp_path / "tape.jsonl"
        request = req("Classify the user's latest message\nUser message: Thanks!")
        recorded = complete(request, Transport("record", cassette))
        assert json.loads(recorded)["type"] == "improper"
        assert len(fake_llm) == 1
        replayed = complete(request, Transport("replay", cassette))
        assert replayed == recorded
        assert len(fake_llm) == 1  # replay made no network call

    def test_replay_miss(self, tmp_path):
        cassette = tmp_path / "empty.jsonl"
        cassette.write_text("")
        with pytest.raises(CassetteMiss) as err:
            complete(req("anything", tag="generate_turn"), Transport("replay", cassette))
        assert "generate_turn" in str(err.value)

    def test_duplicate_recordings_are_collapsed(self, fake_llm, tmp_path):
        cassette = tmp_path / "tape.jsonl"
        request = req("Rate how well this SQL works")
        complete(request, Transport("record", cassette))
        complete(request, Transport("record", cassette))
        lines = [l for l in cassette.read_text().splitlines() if l.strip()]
        assert len(lines) == 1

    def test_live_retries_then_raises(self, monkeypatch):
        attempts = []

        def dying(payload, endpoint, key, timeout=60.0):
            attempts.append(1)
            raise requests.ConnectionError("endpoint down")

        monkeypatch.setenv(llmclient.ENV_ENDPOINT, "http://dead.invalid")
        monkeypatch.setattr(llmclient, "_post_chat", dying)
        monkeypatch.setattr(llmclient.time, "sleep", lambda _: None)
        with pytest.raises(TransportError) as err:
            complete(req("x", tag="probe"), Transport("live"), RetryPolicy(max_attempts=3))
        assert len(attempts) == 3
        assert "probe" in str(err.value)

    def test_live_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv(llmclient.ENV_ENDPOINT, raising=False)
        with pytest.raises(TransportError):
            complete(req("x"), Transport("live"))


class TestCompleteJson:
    def _with_responses(self, monkeypatch, responses):
        queue = list(responses)

        def stub(payload, endpoint, key, timeout=60.0):
            return queue.pop(0)

        monkeypatch.setenv(llmclient.ENV_ENDPOINT, "http://fake.invalid")
        monkeypatch.setattr(llmclient, "_post_chat", stub)

    def test_plain_object(self, monkeypatch):
        self._with_responses(monkeypatch, ['{"type": "answerable", "sql": "SELECT 1"}'])
        obj = complete_json(req("x"), Transport("live"), ["type", "sql"])
        assert obj == {"type": "answerable", "sql": "SELECT 1"}

    def test_first_object_in_prose(self, monkeypatch):
        self._with_responses(
            monkeypatch,
            ['Sure thing! Here is the answer:\n```json\n{"sql": "SELECT a FROM t"}\n```\ndone'],
        )
        obj = complete_json(req("x"), Transport("live"), ["sql"])
        assert obj["sql"] == "SELECT a FROM t"

    def test_reminder_retry_then_success(self, monkeypatch):
        self._with_responses(monkeypatch, ["no json here", '{"sql": "SELECT 1"}'])
        obj = complete_json(req("x"), Transport("live"), ["sql"])
        assert obj["sql"] == "SELECT 1"

    def test_format_error_after_retry(self, monkeypatch):
        self._with_responses(monkeypatch, ["nope", "still nope"])
        with pytest.raises(FormatError) as err:
            complete_json(req("x"), Transport("live"), ["sql"])
        assert err.value.raw == "still nope"

    def test_missing_required_field_counts_as_failure(self, monkeypatch):
        self._with_responses(monkeypatch, ['{"other": 1}', '{"sql": "SELECT 1"}'])
        obj = complete_json(req("x"), Transport("live"), ["sql"])
        assert "sql" in obj


def test_extract_int():
    assert extract_int("7/10") == 7
    assert extract_int("I rate this 9.") == 9
    assert extract_int("score: -2") == -2
    assert extract_int("no digits") is None
