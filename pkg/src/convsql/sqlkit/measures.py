"""Structural measures over canonical queries: tree depth and difficulty.

The depth convention is fixed: query root at depth 1, each present clause
at 2, each clause element at 3; aggregator wrappers and binary operators
add one level each; a subquery in a condition re-roots one level below its
atom, while FROM subqueries and set-operands root at their element slot.
Absolute depths are only comparable between queries measured under this
same layout.
"""

from __future__ import annotations

from typing import Optional, Union

from .ast import (
    Agg,
    Arith,
    CanonicalQuery,
    ColumnRef,
    Condition,
    CondValue,
    DifficultyLevel,
    Expr,
)


def ast_depth(q: CanonicalQuery) -> int:
    """Depth of the canonical tree; at least 3 for any query."""
    return _query_depth(q, 1)


def _query_depth(q: CanonicalQuery, root: int) -> int:
    clause = root + 1
    element = clause + 1
    depths = [element]
    for item in q.select_items:
        depths.append(_expr_depth(item, element))
    for table in q.from_tables:
        if isinstance(table, CanonicalQuery):
            depths.append(_query_depth(table, element))
    for cond in q.join_conditions | q.where_conditions | q.having_conditions:
        depths.append(_cond_depth(cond, element))
    for order in q.order_by:
        depths.append(_expr_depth(order.expr, element))
    if q.set_op is not None:
        depths.append(_query_depth(q.set_op.right, element))
    return max(depths)


def _expr_depth(expr: Expr, at: int) -> int:
    base = at + (1 if expr.agg is not Agg.NONE else 0)
    return _arg_depth(expr.arg, base)


def _arg_depth(arg: Union[ColumnRef, Arith], at: int) -> int:
    if isinstance(arg, Arith):
        return max(_col_depth(arg.left, at + 1), _col_depth(arg.right, at + 1))
    return _col_depth(arg, at)


def _col_depth(col: ColumnRef, at: int) -> int:
    return at + (1 if col.agg is not Agg.NONE else 0)


def _cond_depth(cond: Condition, at: int) -> int:
    # the atom is the comparison node; both sides hang one level below
    depths = [at + 1]
    if cond.lhs is not None:
        depths.append(_expr_depth(cond.lhs, at + 1))
    depths.append(_value_depth(cond.value, at + 1))
    if cond.value2 is not None:
        depths.append(_value_depth(cond.value2, at + 1))
    return max(depths)


def _value_depth(value: Optional[CondValue], at: int) -> int:
    if isinstance(value, CanonicalQuery):
        return _query_depth(value, at)
    if isinstance(value, Expr):
        return _expr_depth(value, at)
    return at


# ---------------------------------------------------------------------------
# Spider-standard difficulty


def difficulty(q: CanonicalQuery) -> DifficultyLevel:
    """Bucket a query by the Spider-standard component-count rules.

    Counts are structural only (no literal values, no alias spelling), so
    the bucket is invariant under value changes and alias renaming.
    """
    comp1 = _count_component1(q)
    comp2 = _count_component2(q)
    others = _count_others(q)
    if comp1 <= 1 and others == 0 and comp2 == 0:
        return DifficultyLevel.EASY
    if (others <= 2 and comp1 <= 1 and comp2 == 0) or (
        comp1 <= 2 and others < 2 and comp2 == 0
    ):
        return DifficultyLevel.MEDIUM
    if (
        (others > 2 and comp1 <= 2 and comp2 == 0)
        or (2 < comp1 <= 3 and others <= 2 and comp2 == 0)
        or (comp1 <= 1 and others == 0 and comp2 <= 1)
    ):
        return DifficultyLevel.HARD
    return DifficultyLevel.EXTRA_HARD


def _count_component1(q: CanonicalQuery) -> int:
    count = 0
    if q.where_conditions:
        count += 1
    if q.group_by:
        count += 1
    if q.order_by:
        count += 1
    if q.limit is not None:
        count += 1
    count += max(0, len(q.from_tables) - 1)  # joins
    count += sum(1 for c in q.where_connectors + q.having_connectors if c == "or")
    count += sum(
        1
        for c in q.join_conditions | q.where_conditions | q.having_conditions
        if c.op == "like"
    )
    return count


def _count_component2(q: CanonicalQuery) -> int:
    nested = 0
    for cond in q.join_conditions | q.where_conditions | q.having_conditions:
        if isinstance(cond.value, CanonicalQuery):
            nested += 1
        if isinstance(cond.value2, CanonicalQuery):
            nested += 1
    if q.set_op is not None:
        nested += 1
    return nested


def _count_others(q: CanonicalQuery) -> int:
    count = 0
    if _agg_count(q) > 1:
        count += 1
    if len(q.select_items) > 1:
        count += 1
    if len(q.where_conditions) > 1:
        count += 1
    if len(q.group_by) > 1:
        count += 1
    return count


def _agg_count(q: CanonicalQuery) -> int:
    total = 0
    for item in q.select_items:
        total += _expr_aggs(item)
    for cond in q.where_conditions | q.having_conditions:
        if cond.lhs is not None:
            total += _expr_aggs(cond.lhs)
    for order in q.order_by:
        total += _expr_aggs(order.expr)
    return total


def _expr_aggs(expr: Expr) -> int:
    total = 1 if expr.agg is not Agg.NONE else 0
    if isinstance(expr.arg, Arith):
        total += 1 if expr.arg.left.agg is not Agg.NONE else 0
        total += 1 if expr.arg.right.agg is not Agg.NONE else 0
    elif expr.arg.agg is not Agg.NONE:
        total += 1
    return total
