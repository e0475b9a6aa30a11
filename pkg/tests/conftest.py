"""Shared fixtures: corpus on disk, SQLite databases, and a deterministic
fake chat provider for recording cassettes."""

from __future__ import annotations

import hashlib
import json
import re
import sqlite3
from pathlib import Path

import pytest

from convsql import dbexec, llmclient
from convsql.datasetio import load_seed_corpus

# ---------------------------------------------------------------------------
# Fixture databases

DB_SPECS = {
    "endowment": {
        "tables": {
            "school": [
                ("school_id", "number", "INTEGER"),
                ("school_name", "text", "TEXT"),
                ("location", "text", "TEXT"),
            ],
            "endowment": [
                ("endowment_id", "number", "INTEGER"),
                ("school_id", "number", "INTEGER"),
                ("donator_name", "text", "TEXT"),
                ("amount", "number", "REAL"),
            ],
        },
        "primary_keys": ["school.school_id", "endowment.endowment_id"],
        "foreign_keys": [("endowment.school_id", "school.school_id")],
        "rows": {
            "school": [
                (1, "Glenn", "New York"),
                (2, "Owen Hall", "Boston"),
                (3, "Glenn", "Chicago"),
            ],
            "endowment": [
                (1, 1, "Glenn", 9.51),
                (2, 2, "Monte Plata", 8.82),
                (3, 1, "San Jose", 9.83),
                (4, 3, "Com Dev", 9.55),
            ],
        },
    },
    "concert": {
        "tables": {
            "stadium": [
                ("stadium_id", "number", "INTEGER"),
                ("name", "text", "TEXT"),
                ("capacity", "number", "INTEGER"),
                ("average", "number", "INTEGER"),
            ],
            "singer": [
                ("singer_id", "number", "INTEGER"),
                ("name", "text", "TEXT"),
                ("age", "number", "INTEGER"),
                ("country", "text", "TEXT"),
            ],
            "concert": [
                ("concert_id", "number", "INTEGER"),
                ("concert_name", "text", "TEXT"),
                ("stadium_id", "number", "INTEGER"),
                ("year", "number", "INTEGER"),
            ],
        },
        "primary_keys": [
            "stadium.stadium_id",
            "singer.singer_id",
            "concert.concert_id",
        ],
        "foreign_keys": [("concert.stadium_id", "stadium.stadium_id")],
        "rows": {
            "stadium": [
                (1, "Balmoor", 10104, 1477),
                (2, "Gayfield Park", 11998, 864),
                (3, "Recreation Park", 20000, 730),
            ],
            "singer": [
                (1, "Joe Sharp", 52, "Netherlands"),
                (2, "Timbaland", 32, "United States"),
                (3, "Rose White", 41, "France"),
                (4, "John Nizinik", 43, "France"),
            ],
            "concert": [
                (1, "Auditions", 1, 2014),
                (2, "Super bootcamp", 2, 2014),
                (3, "Home Visits", 2, 2015),
                (4, "Week 1", 3, 2015),
            ],
        },
    },
    "college": {
        "tables": {
            "department": [
                ("dept_id", "number", "INTEGER"),
                ("dept_name", "text", "TEXT"),
                ("budget", "number", "REAL"),
            ],
            "instructor": [
                ("instr_id", "number", "INTEGER"),
                ("name", "text", "TEXT"),
                ("salary", "number", "REAL"),
                ("dept_id", "number", "INTEGER"),
            ],
        },
        "primary_keys": ["department.dept_id", "instructor.instr_id"],
        "foreign_keys": [("instructor.dept_id", "department.dept_id")],
        "rows": {
            "department": [
                (1, "Statistics", 130000.0),
                (2, "History", 50000.0),
                (3, "Physics", 250000.0),
            ],
            "instructor": [
                (1, "Ada Boyle", 72000.0, 1),
                (2, "Ben Furst", 51000.0, 2),
                (3, "Cleo Marks", 99000.0, 3),
                (4, "Dana Wells", 83000.0, 1),
            ],
        },
    },
}


def build_tables_json(specs: dict) -> list[dict]:
    entries = []
    for db_id, spec in specs.items():
        table_names = list(spec["tables"])
        column_names = [[-1, "*"]]
        column_types = ["text"]
        path_to_idx = {}
        for t_idx, table in enumerate(table_names):
            for col_name, col_type, _ in spec["tables"][table]:
                path_to_idx[f"{table}.{col_name}"] = len(column_names)
                column_names.append([t_idx, col_name])
                column_types.append(col_type)
        entries.append(
            {
                "db_id": db_id,
                "table_names_original": table_names,
                "table_names": table_names,
                "column_names_original": column_names,
                "column_names": column_names,
                "column_types": column_types,
                "primary_keys": [path_to_idx[p] for p in spec["primary_keys"]],
                "foreign_keys": [
                    [path_to_idx[a], path_to_idx[b]]
                    for a, b in spec["foreign_keys"]
                ],
            }
        )
    return entries


def build_sqlite(path: Path, spec: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(path)
    try:
        for table, columns in spec["tables"].items():
            decl = ", ".join(f"{name} {sql_type}" for name, _, sql_type in columns)
            conn.execute(f"CREATE TABLE {table} ({decl})")
            rows = spec["rows"][table]
            slots = ", ".join("?" for _ in columns)
            conn.executemany(f"INSERT INTO {table} VALUES ({slots})", rows)
        conn.commit()
    finally:
        conn.close()


SEED_DIALOGUES = [
    {
        "id": "seed-endow-1",
        "database_id": "endowment",
        "interaction": [
            {"utterance": "List all school names.", "query": "SELECT school_name FROM school"},
            {"utterance": "How many endowments are there?", "query": "SELECT count(*) FROM endowment"},
        ],
    },
    {
        "id": "seed-concert-1",
        "database_id": "concert",
        "interaction": [
            {"utterance": "Show every stadium name.", "query": "SELECT name FROM stadium"},
            {"utterance": "What is the largest capacity?", "query": "SELECT max(capacity) FROM stadium"},
            {
                "utterance": "Which singers are over 40?",
                "query": "SELECT name FROM singer WHERE age > 40",
            },
        ],
    },
    {
        "id": "seed-college-1",
        "database_id": "college",
        "interaction": [
            {"utterance": "List the departments.", "query": "SELECT dept_name FROM department"},
            {"utterance": "Average instructor salary?", "query": "SELECT avg(salary) FROM instructor"},
        ],
    },
    {
        "id": "seed-endow-2",
        "database_id": "endowment",
        "interaction": [
            {
                "utterance": "Who donated to the New York school?",
                "query": "SELECT T2.donator_name FROM school AS T1 JOIN endowment AS T2 "
                "ON T1.school_id = T2.school_id WHERE T1.location = 'New York'",
            },
            {
                "utterance": "What's the id of Glenn?",
                "dialogue_act": "AMBIGUOUS",
                "response": "Do you mean the school named Glenn or the donor named Glenn?",
            },
            {"utterance": "Thanks!", "dialogue_act": "THANK_YOU", "response": "You are welcome!"},
        ],
    },
    {
        "id": "seed-concert-2",
        "database_id": "concert",
        "interaction": [
            {
                "utterance": "Which stadium hosted the most concerts?",
                "query": "SELECT T2.name FROM concert AS T1 JOIN stadium AS T2 ON "
                "T1.stadium_id = T2.stadium_id GROUP BY T2.stadium_id "
                "ORDER BY count(*) DESC LIMIT 1",
            },
        ],
    },
    {
        "id": "seed-concert-3",
        "database_id": "concert",
        "interaction": [
            {
                "utterance": "Count singers per country.",
                "query": "SELECT country, count(*) FROM singer GROUP BY country",
            },
            {
                "utterance": "Which countries have more than one singer?",
                "query": "SELECT country FROM singer GROUP BY country HAVING count(*) > 1",
            },
        ],
    },
    {
        "id": "seed-college-2",
        "database_id": "college",
        "interaction": [
            {
                "utterance": "Departments with above-average budget?",
                "query": "SELECT dept_name FROM department WHERE budget > "
                "(SELECT avg(budget) FROM department)",
            },
        ],
    },
    {
        "id": "seed-endow-3",
        "database_id": "endowment",
        "interaction": [
            {
                "utterance": "Donations over 9?",
                "query": "SELECT donator_name FROM endowment WHERE amount > 9",
            },
            {
                "utterance": "And their schools?",
                "query": "SELECT T1.school_name FROM school AS T1 JOIN endowment AS T2 "
                "ON T1.school_id = T2.school_id WHERE T2.amount > 9",
            },
        ],
    },
    {
        "id": "seed-concert-4",
        "database_id": "concert",
        "interaction": [
            {
                "utterance": "Stadium with the highest average attendance?",
                "query": "SELECT name FROM stadium ORDER BY average DESC LIMIT 1",
            },
            {
                "utterance": "Concerts in 2014 or 2015?",
                "query": "SELECT concert_name FROM concert WHERE year = 2014 OR year = 2015",
            },
        ],
    },
    {
        "id": "seed-college-3",
        "database_id": "college",
        "interaction": [
            {
                "utterance": "Who earns the most?",
                "query": "SELECT name FROM instructor ORDER BY salary DESC LIMIT 1",
            },
            {
                "utterance": "Statistics instructors?",
                "query": "SELECT name FROM instructor WHERE dept_id = "
                "(SELECT dept_id FROM department WHERE dept_name = 'Statistics')",
            },
        ],
    },
]


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("corpus")
    (root / "tables.json").write_text(
        json.dumps(build_tables_json(DB_SPECS), indent=1), encoding="utf-8"
    )
    for db_id, spec in DB_SPECS.items():
        build_sqlite(root / "database" / db_id / f"{db_id}.sqlite", spec)
    (root / "train.json").write_text(
        json.dumps(SEED_DIALOGUES, indent=1), encoding="utf-8"
    )
    return root


@pytest.fixture(scope="session")
def catalog(corpus_root):
    return dbexec.load_spider_catalog(
        corpus_root / "tables.json", corpus_root / "database"
    )


@pytest.fixture(scope="session")
def corpus(corpus_root):
    return load_seed_corpus(corpus_root)


@pytest.fixture(scope="session")
def endowment_db(catalog):
    return catalog["endowment"]


@pytest.fixture(scope="session")
def concert_db(catalog):
    return catalog["concert"]


# ---------------------------------------------------------------------------
# Deterministic fake chat provider


def _line_after(text: str, marker: str) -> str:
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if marker in line:
            for candidate in lines[i + 1 :]:
                if candidate.strip():
                    return candidate.strip()
    return ""


def _field(text: str, label: str) -> str:
    match = re.search(rf"^\s*{re.escape(label)}\s*(.*)$", text, re.MULTILINE)
    return match.group(1).strip() if match else ""


def _stable_tag(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:6]


def fake_chat_response(payload: dict) -> str:
    """Rule-driven stand-in for a chat model; same prompt, same reply."""
    text = payload["messages"][-1]["content"]
    full = "\n".join(m["content"] for m in payload["messages"])

    if "Write turn" in full and "sql_candidates" in full:
        goal = _line_after(full, "keep the new question on its topic:")
        question = f"What does the data show for case {_stable_tag(full)}?"
        candidates = [goal]
        if "Write turn 2." in full:
            candidates = ["SELECT broken FROM nowhere", goal]
        return json.dumps({"question": question, "sql_candidates": candidates})

    if "Write turn" in full and '"response"' in full:
        kind = re.search(r'It must be a "(\w+)" question', full).group(1)
        tag = _stable_tag(full)
        if kind == "ambiguous":
            return json.dumps(
                {
                    "question": f"What's the id of Glenn? (case {tag})",
                    "response": "Do you mean the school named Glenn or the donor named Glenn?",
                    "subtype": "value_ambiguity",
                }
            )
        if kind == "unanswerable":
            return json.dumps(
                {
                    "question": f"Are all the donors from the same country? (case {tag})",
                    "response": "Sorry, the database stores no donor nationality.",
                    "subtype": "column_unanswerable",
                }
            )
        return json.dumps(
            {
                "question": f"Thanks, that's all. (case {tag})",
                "response": "You are welcome!",
                "ends_conversation": True,
            }
        )

    if "auditing a generated database conversation turn" in full:
        aligned = "misaligned-probe" not in full
        return json.dumps({"aligned": aligned, "reason": "scripted audit"})

    if "reviewing the wording" in full:
        if "awkward-probe" in full:
            return json.dumps({"issues": ["the phrasing is awkward"]})
        return json.dumps({"issues": []})

    if "Rewrite the turn below" in full:
        question = _field(full, "Q:").replace("awkward-probe", "polished")
        response = _field(full, "A:")
        return json.dumps({"question": question, "response": response})

    if "Rate how well this SQL" in full:
        return "3/10" if "lowscore-probe" in full else "9/10"

    if "Classify the user's latest message" in full:
        question = _field(full, "User message:").lower()
        if any(w in question for w in ("thanks", "hello", "bye")):
            label = "improper"
        elif "glenn" in question:
            label = "ambiguous"
        elif "country" in question:
            label = "unanswerable"
        else:
            label = "answerable"
        return json.dumps({"type": label})

    if "Write a single SQLite SELECT" in full:
        question = _field(full, "User question:").lower()
        table = re.search(r"CREATE TABLE (\w+)", full).group(1)
        if "fail-probe" in question and "Previous attempts failed" not in full:
            return json.dumps({"sql": "SELECT broken FROM nowhere"})
        return json.dumps({"sql": f"SELECT count(*) FROM {table}"})

    if "was classified" in full and "Write the assistant's" in full:
        kind = re.search(r"Write the assistant's (\w+) reply", full).group(1)
        canned = {
            "clarify": "Do you mean the school named Glenn or the donor named Glenn?",
            "sorry": "Sorry, the database does not hold that information.",
            "regular": "You are welcome!",
        }
        return json.dumps({"message": canned.get(kind, "Happy to help!")})

    if "Two multi-turn database conversations" in full:
        return json.dumps(
            {
                "completeness": "1",
                "relevance": "1",
                "utility": "tie",
                "overall": "1",
            }
        )

    if "A text-to-SQL prediction failed" in full:
        return json.dumps({"error_class": "logical"})

    return json.dumps({"note": f"unmatched prompt {_stable_tag(full)}"})


@pytest.fixture
def fake_llm(monkeypatch):
    """Route live chat calls to the deterministic fake provider."""
    calls = []

    def stub(payload, endpoint, key, timeout=60.0):
        calls.append(payload)
        return fake_chat_response(payload)

    monkeypatch.setenv(llmclient.ENV_ENDPOINT, "http://fake.invalid/chat")
    monkeypatch.setenv(llmclient.ENV_MODEL, "fake-model")
    monkeypatch.setenv(llmclient.ENV_KEY, "fake-key")
    monkeypatch.setattr(llmclient, "_post_chat", stub)
    return calls
