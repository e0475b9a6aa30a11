"""Read-only execution against the corpora's single-file SQLite databases.

Also owns the schema catalog types: parsing the Spider-layout tables.json,
and the deterministic schema-to-prompt serialization the generation and
inference stages embed in every model call.
"""

from __future__ import annotations

import json
import math
import sqlite3
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from . import sqlkit


class ExecError(RuntimeError):
    """The engine reported a failure while executing a query."""


class RejectedError(ValueError):
    """The statement is not a read-only SELECT."""


class ExecTimeout(TimeoutError):
    """Query execution exceeded its deadline."""


class SchemaError(ValueError):
    """Malformed schema catalog entry."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    type: str


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnSchema, ...]


@dataclass(frozen=True)
class DatabaseSchema:
    """Table/column catalog with key annotations.

    ``primary_keys`` holds ``table.column`` paths; ``foreign_keys`` holds
    (from, to) path pairs. Names are unique case-insensitively.
    """

    tables: tuple[TableSchema, ...]
    primary_keys: tuple[str, ...] = ()
    foreign_keys: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for table in self.tables:
            low = table.name.lower()
            if low in seen:
                raise SchemaError(f"duplicate table name {table.name!r}")
            seen.add(low)
            cols = set()
            for col in table.columns:
                cl = col.name.lower()
                if cl in cols:
                    raise SchemaError(
                        f"duplicate column {col.name!r} in table {table.name!r}"
                    )
                cols.add(cl)
        paths = {
            f"{t.name.lower()}.{c.name.lower()}"
            for t in self.tables
            for c in t.columns
        }
        for pk in self.primary_keys:
            if pk.lower() not in paths:
                raise SchemaError(f"primary key {pk!r} references no column")
        for src, dst in self.foreign_keys:
            if src.lower() not in paths or dst.lower() not in paths:
                raise SchemaError(f"foreign key {src!r} -> {dst!r} references no column")

    def column_paths(self) -> set[str]:
        return {
            f"{t.name.lower()}.{c.name.lower()}"
            for t in self.tables
            for c in t.columns
        }


@dataclass(frozen=True)
class DatabaseRef:
    """Handle to one executable database file plus its schema."""

    database_id: str
    file_path: Path
    schema: DatabaseSchema

    def __post_init__(self) -> None:
        object.__setattr__(self, "file_path", Path(self.file_path))
        if not self.file_path.is_file():
            raise FileNotFoundError(
                f"database file for {self.database_id!r} missing: {self.file_path}"
            )


@dataclass(frozen=True)
class ResultTable:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    truncated: bool = False

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row width differs from column count")

    def to_json(self) -> dict[str, Any]:
        return {
            "columns": list(self.columns),
            "rows": [list(r) for r in self.rows],
            "truncated": self.truncated,
        }


DEFAULT_ROW_CAP = 64
DEFAULT_TIMEOUT_MS = 5000


def execute_readonly(
    db: DatabaseRef,
    sql: str,
    row_cap: int = DEFAULT_ROW_CAP,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> ResultTable:
    """Run one SELECT against the database file, read-only.

    Raises RejectedError when the statement is not a plain SELECT,
    ExecError for engine-reported failures, and ExecTimeout past the
    deadline. Rows beyond ``row_cap`` are dropped and flagged.
    """
    try:
        sqlkit.parse_sql(sql)
    except sqlkit.SqlError as exc:
        raise RejectedError(f"not a read-only SELECT: {exc}") from exc
    uri = f"file:{db.file_path}?mode=ro"
    conn = sqlite3.connect(uri, uri=True)
    try:
        deadline = time.monotonic() + timeout_ms / 1000.0
        conn.set_progress_handler(
            lambda: 1 if time.monotonic() > deadline else 0, 1000
        )
        try:
            cursor = conn.execute(sql)
            rows = cursor.fetchmany(row_cap + 1)
        except sqlite3.OperationalError as exc:
            if "interrupted" in str(exc).lower():
                raise ExecTimeout(f"query exceeded {timeout_ms} ms") from exc
            raise ExecError(str(exc)) from exc
        except sqlite3.Error as exc:
            raise ExecError(str(exc)) from exc
        columns = tuple(d[0] for d in cursor.description or ())
        truncated = len(rows) > row_cap
        return ResultTable(
            columns=columns,
            rows=tuple(tuple(r) for r in rows[:row_cap]),
            truncated=truncated,
        )
    finally:
        conn.close()


def results_equal(a: ResultTable, b: ResultTable, ordered: bool = False) -> bool:
    """Compare result tables; unordered compares row multisets.

    Cells within each row are canonically reordered by column name first,
    and numeric cells compare with 1e-9 relative tolerance.
    """
    if len(a.columns) != len(b.columns) or len(a.rows) != len(b.rows):
        return False
    rows_a = [_canonical_row(a.columns, r) for r in a.rows]
    rows_b = [_canonical_row(b.columns, r) for r in b.rows]
    if not ordered:
        rows_a.sort(key=_row_key)
        rows_b.sort(key=_row_key)
    return all(_cells_equal(x, y) for x, y in zip(rows_a, rows_b))


def _canonical_row(columns: tuple[str, ...], row: tuple) -> tuple:
    order = sorted(range(len(columns)), key=lambda i: (columns[i].lower(), i))
    return tuple(row[i] for i in order)


def _row_key(row: tuple) -> tuple:
    key = []
    for cell in row:
        if cell is None:
            key.append((0, ""))
        elif isinstance(cell, (int, float)):
            key.append((1, float(cell)))
        else:
            key.append((2, str(cell)))
    return tuple(key)


def _cells_equal(a: tuple, b: tuple) -> bool:
    for x, y in zip(a, b):
        if isinstance(x, (int, float)) and isinstance(y, (int, float)):
            if not math.isclose(float(x), float(y), rel_tol=1e-9, abs_tol=1e-9):
                return False
        elif x != y:
            return False
    return True


DEFAULT_SAMPLE_ROWS = 3


def schema_prompt_text(
    schema: DatabaseSchema,
    sample_rows: int = 0,
    db: Optional[DatabaseRef] = None,
) -> str:
    """Serialize a schema for prompting: one CREATE-style block per table.

    Primary and foreign keys are annotated, and up to ``sample_rows``
    example rows per table follow when a database handle is supplied.
    Byte-identical across runs for the same inputs.
    """
    if sample_rows < 0:
        raise ValueError("sample_rows must be >= 0")
    pk_set = {p.lower() for p in schema.primary_keys}
    blocks: list[str] = []
    for table in schema.tables:
        lines = [f"CREATE TABLE {table.name} ("]
        for col in table.columns:
            lines.append(f"  {col.name} {col.type},")
        pks = [
            p.split(".", 1)[1]
            for p in sorted(pk_set)
            if p.split(".", 1)[0] == table.name.lower()
        ]
        if pks:
            lines.append(f"  PRIMARY KEY ({', '.join(pks)}),")
        lines[-1] = lines[-1].rstrip(",")
        lines.append(");")
        for src, dst in schema.foreign_keys:
            if src.lower().split(".", 1)[0] == table.name.lower():
                lines.append(f"-- FOREIGN KEY {src.lower()} REFERENCES {dst.lower()}")
        if sample_rows > 0 and db is not None:
            lines.extend(_sample_rows_lines(db, table, sample_rows))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def _sample_rows_lines(db: DatabaseRef, table: TableSchema, limit: int) -> list[str]:
    sql = f"SELECT * FROM {table.name} LIMIT {limit}"
    try:
        result = execute_readonly(db, sql, row_cap=limit)
    except (ExecError, RejectedError):
        return []
    lines = [f"-- sample rows from {table.name}:"]
    for row in result.rows:
        cells = ", ".join("NULL" if c is None else str(c) for c in row)
        lines.append(f"--   ({cells})")
    return lines


# ---------------------------------------------------------------------------
# Spider-layout catalog (tables.json)


def schema_from_spider_entry(entry: dict) -> DatabaseSchema:
    """Build a DatabaseSchema from one tables.json entry."""
    try:
        table_names = entry["table_names_original"]
        column_names = entry["column_names_original"]
        column_types = entry.get("column_types", ["text"] * len(column_names))
        primary_keys = entry.get("primary_keys", [])
        foreign_keys = entry.get("foreign_keys", [])
    except KeyError as exc:
        raise SchemaError(f"tables.json entry missing key {exc}") from exc

    per_table: dict[int, list[ColumnSchema]] = {i: [] for i in range(len(table_names))}
    paths: list[Optional[str]] = []
    for (table_idx, col_name), col_type in zip(column_names, column_types):
        if table_idx < 0:
            paths.append(None)  # the "*" pseudo-column
            continue
        if table_idx >= len(table_names):
            raise SchemaError(f"column {col_name!r} references missing table {table_idx}")
        per_table[table_idx].append(ColumnSchema(col_name, col_type))
        paths.append(f"{table_names[table_idx].lower()}.{col_name.lower()}")

    def path_at(idx: int) -> str:
        if idx < 0 or idx >= len(paths) or paths[idx] is None:
            raise SchemaError(f"key references invalid column index {idx}")
        return paths[idx]

    tables = tuple(
        TableSchema(name, tuple(per_table[i])) for i, name in enumerate(table_names)
    )
    pks = []
    for pk in primary_keys:
        for idx in pk if isinstance(pk, list) else [pk]:
            pks.append(path_at(idx))
    fks = tuple((path_at(src), path_at(dst)) for src, dst in foreign_keys)
    return DatabaseSchema(tables=tables, primary_keys=tuple(pks), foreign_keys=fks)


def load_spider_catalog(tables_json: Path, database_dir: Path) -> dict[str, DatabaseRef]:
    """Load tables.json plus the database directory into DatabaseRefs."""
    with open(tables_json, encoding="utf-8") as handle:
        entries = json.load(handle)
    catalog: dict[str, DatabaseRef] = {}
    for entry in entries:
        db_id = entry.get("db_id")
        if not db_id:
            raise SchemaError("tables.json entry without db_id")
        schema = schema_from_spider_entry(entry)
        file_path = Path(database_dir) / db_id / f"{db_id}.sqlite"
        catalog[db_id] = DatabaseRef(db_id, file_path, schema)
    return catalog
