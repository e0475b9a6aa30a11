#!/usr/bin/env python3
"""Capture real service responses for the UI snapshot tests.

Boots the inference service in-process with the scripted demo answerer
over the test fixture corpus, plays the scripted four-message session,
and writes every HTTP exchange to tests/fixtures/session.json. Run from
the repository root after changing the wire format or the demo rules:

    python frontend/scripts/capture_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT / "tests"))

from fastapi.testclient import TestClient

from conftest import DB_SPECS, SEED_DIALOGUES, build_sqlite, build_tables_json
from convsql import dbexec
from convsql.stateflow import FlowConfig, ScriptedAnswerer, create_app

MESSAGES = [
    "How many endowments are there?",
    "What's the id of Glenn?",
    "No, I mean the donor named Glenn.",
    "Thanks!",
]


def build_corpus(root: Path) -> None:
    (root / "tables.json").write_text(json.dumps(build_tables_json(DB_SPECS)))
    for db_id, spec in DB_SPECS.items():
        build_sqlite(root / "database" / db_id / f"{db_id}.sqlite", spec)
    (root / "train.json").write_text(json.dumps(SEED_DIALOGUES))


def main() -> int:
    out_path = REPO_ROOT / "frontend" / "tests" / "fixtures" / "session.json"
    rules_path = REPO_ROOT / "frontend" / "fixtures" / "demo-rules.json"
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        build_corpus(root)
        catalog = dbexec.load_spider_catalog(root / "tables.json", root / "database")
        app = create_app(
            catalog,
            FlowConfig(max_retries=2),
            ScriptedAnswerer.from_json(rules_path),
        )
        capture: dict = {}
        with TestClient(app) as client:
            capture["databases"] = client.get("/databases").json()
            created = client.post("/sessions", json={"database_id": "endowment"})
            capture["session"] = created.json()
            session_id = capture["session"]["session_id"]
            capture["exchanges"] = []
            for text in MESSAGES:
                reply = client.post(
                    f"/sessions/{session_id}/messages", json={"text": text}
                )
                reply.raise_for_status()
                capture["exchanges"].append({"text": text, "reply": reply.json()})
            capture["history"] = client.get(f"/sessions/{session_id}/history").json()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(capture, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
