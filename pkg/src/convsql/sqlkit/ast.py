"""Canonical, order-normalized representation of a SELECT statement.

The structures here are what exact-set matching, depth measurement, and
difficulty bucketing operate on. Everything is frozen and hashable, so
clause components can live in frozensets and whole queries can nest inside
conditions. ``render`` emits canonical SQL text: re-parsing it yields an
equal structure (set components are rendered in sorted order).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union


class Agg(Enum):
    NONE = "none"
    MAX = "max"
    MIN = "min"
    COUNT = "count"
    SUM = "sum"
    AVG = "avg"


class DifficultyLevel(Enum):
    """Spider-standard difficulty buckets, totally ordered."""

    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    EXTRA_HARD = "extra_hard"

    @property
    def rank(self) -> int:
        return _DIFFICULTY_ORDER.index(self)

    def __lt__(self, other: "DifficultyLevel") -> bool:
        return self.rank < other.rank

    def __le__(self, other: "DifficultyLevel") -> bool:
        return self.rank <= other.rank


_DIFFICULTY_ORDER = [
    DifficultyLevel.EASY,
    DifficultyLevel.MEDIUM,
    DifficultyLevel.HARD,
    DifficultyLevel.EXTRA_HARD,
]


@dataclass(frozen=True)
class ColumnRef:
    """A column path, optionally aggregate-wrapped when used as an operand.

    ``path`` is lower-case and alias-expanded: ``table.column``, a bare
    ``column`` when it could not be qualified, ``*``, or ``table.*``.
    """

    path: str
    agg: Agg = Agg.NONE
    distinct: bool = False


@dataclass(frozen=True)
class Arith:
    """Binary arithmetic between two column operands."""

    op: str  # one of - + * /
    left: ColumnRef
    right: ColumnRef


@dataclass(frozen=True)
class Expr:
    """A select item, condition side, or order-by expression.

    The outer aggregate (``count(a)``, ``max(a - b)``) lives here;
    operand-level aggregates (``max(a) - min(b)``) live on the ColumnRef.
    """

    arg: Union[ColumnRef, Arith]
    agg: Agg = Agg.NONE
    distinct: bool = False


@dataclass(frozen=True)
class Literal:
    """A literal comparison value; ``None`` encodes SQL NULL.

    Numbers are stored as floats, strings verbatim without quotes.
    """

    value: Union[float, str, None]


VALUE_SLOT = Literal("__value__")

CondValue = Union[Literal, tuple, Expr, "CanonicalQuery"]


@dataclass(frozen=True)
class Condition:
    """One predicate atom from a WHERE, HAVING, or join ON clause.

    NOT folds into the complement operator for plain comparisons, so
    ``negated`` is set only for like/in/between/is/exists.
    """

    lhs: Optional[Expr]  # None only for EXISTS
    op: str  # = != < > <= >= like in between is exists
    value: CondValue
    value2: Optional[CondValue] = None  # BETWEEN upper bound
    negated: bool = False


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    desc: bool = False


@dataclass(frozen=True)
class SetOp:
    op: str  # union | intersect | except
    right: "CanonicalQuery"


@dataclass(frozen=True)
class CanonicalQuery:
    """Order-normalized component structure of one SELECT statement.

    Set-valued clauses are frozensets, so equality is insensitive to
    component order; ``order_by`` stays an ordered tuple because direction
    and ordering are semantically significant. ``where_connectors`` and
    ``having_connectors`` hold the sorted multiset of and/or connectors
    (the flat conjunction shape, not a precedence tree).
    """

    select_items: frozenset  # of Expr
    select_distinct: bool = False
    from_tables: frozenset = frozenset()  # of str or CanonicalQuery
    join_conditions: frozenset = frozenset()  # of Condition
    where_conditions: frozenset = frozenset()  # of Condition
    where_connectors: tuple = ()
    group_by: frozenset = frozenset()  # of str column paths
    having_conditions: frozenset = frozenset()  # of Condition
    having_connectors: tuple = ()
    order_by: tuple = ()  # of OrderItem
    limit: Optional[int] = None
    set_op: Optional[SetOp] = None


def mask_values(q: CanonicalQuery) -> CanonicalQuery:
    """Replace every literal with a slot marker, recursively.

    Used for value-insensitive matching: literals, IN-lists, and the LIMIT
    count collapse to placeholders while structure stays intact.
    """
    return replace(
        q,
        from_tables=frozenset(
            mask_values(t) if isinstance(t, CanonicalQuery) else t
            for t in q.from_tables
        ),
        join_conditions=frozenset(_mask_cond(c) for c in q.join_conditions),
        where_conditions=frozenset(_mask_cond(c) for c in q.where_conditions),
        having_conditions=frozenset(_mask_cond(c) for c in q.having_conditions),
        limit=1 if q.limit is not None else None,
        set_op=SetOp(q.set_op.op, mask_values(q.set_op.right)) if q.set_op else None,
    )


def _mask_cond(c: Condition) -> Condition:
    return replace(c, value=_mask_value(c.value), value2=_mask_value(c.value2))


def _mask_value(v: Optional[CondValue]) -> Optional[CondValue]:
    if v is None:
        return None
    if isinstance(v, Literal):
        return VALUE_SLOT
    if isinstance(v, tuple):
        return (VALUE_SLOT,)
    if isinstance(v, CanonicalQuery):
        return mask_values(v)
    return v  # column expression


# ---------------------------------------------------------------------------
# Canonical text rendering


def render(q: CanonicalQuery) -> str:
    """Render canonical SQL text; parsing it back yields an equal structure."""
    parts = ["SELECT"]
    if q.select_distinct:
        parts.append("DISTINCT")
    items = sorted(q.select_items, key=_render_expr)
    parts.append(", ".join(_render_expr(e) for e in items))

    tables = sorted(q.from_tables, key=_table_sort_key)
    rendered_tables = [
        f"({render(t)})" if isinstance(t, CanonicalQuery) else t for t in tables
    ]
    parts.append("FROM " + " JOIN ".join(rendered_tables))
    if q.join_conditions:
        conds = sorted(q.join_conditions, key=_render_cond)
        parts.append("ON " + " AND ".join(_render_cond(c) for c in conds))

    if q.where_conditions:
        parts.append("WHERE " + _render_cond_list(q.where_conditions, q.where_connectors))
    if q.group_by:
        parts.append("GROUP BY " + ", ".join(sorted(q.group_by)))
    if q.having_conditions:
        parts.append("HAVING " + _render_cond_list(q.having_conditions, q.having_connectors))
    if q.order_by:
        parts.append(
            "ORDER BY "
            + ", ".join(
                _render_expr(o.expr) + (" DESC" if o.desc else " ASC")
                for o in q.order_by
            )
        )
    if q.limit is not None:
        parts.append(f"LIMIT {q.limit}")
    if q.set_op is not None:
        parts.append(q.set_op.op.upper() + " " + render(q.set_op.right))
    return " ".join(parts)


def _table_sort_key(t) -> str:
    return f"~{render(t)}" if isinstance(t, CanonicalQuery) else t


def _render_expr(e: Expr) -> str:
    inner = _render_arg(e.arg)
    if e.agg is not Agg.NONE:
        if e.distinct:
            inner = "DISTINCT " + inner
        return f"{e.agg.value}({inner})"
    return inner


def _render_arg(arg: Union[ColumnRef, Arith]) -> str:
    if isinstance(arg, Arith):
        return f"{_render_col(arg.left)} {arg.op} {_render_col(arg.right)}"
    return _render_col(arg)


def _render_col(c: ColumnRef) -> str:
    if c.agg is not Agg.NONE:
        inner = ("DISTINCT " if c.distinct else "") + c.path
        return f"{c.agg.value}({inner})"
    return c.path


def _render_cond_list(conditions: frozenset, connectors: tuple) -> str:
    conds = sorted(conditions, key=_render_cond)
    joined = _render_cond(conds[0])
    for conn, cond in zip(sorted(connectors), conds[1:]):
        joined += f" {conn.upper()} {_render_cond(cond)}"
    return joined


def _render_cond(c: Condition) -> str:
    if c.op == "exists":
        prefix = "NOT " if c.negated else ""
        return f"{prefix}EXISTS {_render_value(c.value)}"
    lhs = _render_expr(c.lhs)
    if c.op == "between":
        neg = "NOT " if c.negated else ""
        return f"{lhs} {neg}BETWEEN {_render_value(c.value)} AND {_render_value(c.value2)}"
    if c.op == "is":
        return f"{lhs} IS {'NOT ' if c.negated else ''}{_render_value(c.value)}"
    if c.op in ("in", "like"):
        neg = "NOT " if c.negated else ""
        return f"{lhs} {neg}{c.op.upper()} {_render_value(c.value)}"
    return f"{lhs} {c.op} {_render_value(c.value)}"


def _render_value(v: CondValue) -> str:
    if isinstance(v, Literal):
        return _render_literal(v)
    if isinstance(v, tuple):
        return "(" + ", ".join(_render_literal(x) for x in v) + ")"
    if isinstance(v, CanonicalQuery):
        return f"({render(v)})"
    return _render_expr(v)


def _render_literal(lit: Literal) -> str:
    v = lit.value
    if v is None:
        return "NULL"
    if isinstance(v, float):
        return str(int(v)) if v.is_integer() else repr(v)
    escaped = v.replace("'", "''")
    return f"'{escaped}'"
