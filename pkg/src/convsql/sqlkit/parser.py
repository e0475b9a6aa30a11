"""Tokenizer and recursive-descent parser for the corpus SQL dialect.

Accepted grammar: single-statement SELECT with joins, nested subqueries in
conditions and FROM, GROUP BY / HAVING, ORDER BY, LIMIT, and one set
operator (UNION/INTERSECT/EXCEPT). DDL and DML are rejected. Keywords are
case-folded, aliases expanded away, and column paths resolved against the
schema when one is supplied.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Union

from .ast import (
    Agg,
    Arith,
    CanonicalQuery,
    ColumnRef,
    Condition,
    CondValue,
    Expr,
    Literal,
    OrderItem,
    SetOp,
)
from .errors import AmbiguousColumnWarning, ParseError, SchemaResolutionError

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<str>'(?:[^']|'')*'|"(?:[^"]|"")*")
    | (?P<quoted_id>`[^`]*`)
    | (?P<num>\d+\.\d*|\.\d+|\d+)
    | (?P<id>[A-Za-z_][A-Za-z0-9_$]*)
    | (?P<op><>|!=|>=|<=|==|=|<|>)
    | (?P<punct>[(),.;*+\-/%])
    """,
    re.VERBOSE,
)

_AGGS = {"max", "min", "count", "sum", "avg"}
_ARITH_OPS = {"+", "-", "*", "/"}
_COMPLEMENT = {"=": "!=", "!=": "=", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}
_SET_OPS = {"union", "intersect", "except"}
_JOIN_MODIFIERS = {"inner", "left", "right", "full", "outer", "cross"}


@dataclass(frozen=True)
class _Token:
    kind: str  # str | num | id | op | punct | eof
    value: str
    pos: int


def _tokenize(sql: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise ParseError(f"unexpected character {sql[pos]!r}", pos)
        if m.lastgroup != "ws":
            kind = m.lastgroup
            value = m.group()
            if kind == "quoted_id":
                kind, value = "id", value[1:-1]
            tokens.append(_Token(kind, value, pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(sql)))
    return tokens


class _Scope:
    """Tables visible while resolving column references.

    Holds FROM-order (alias, target) pairs where target is a real table
    name or a subquery, plus the schema column map when available.
    """

    def __init__(self, schema_map: Optional[dict], parent: Optional["_Scope"]) -> None:
        self.entries: list[tuple[str, Union[str, CanonicalQuery]]] = []
        self.schema_map = schema_map
        self.parent = parent

    def add(self, alias: str, target: Union[str, CanonicalQuery]) -> None:
        self.entries.append((alias.lower(), target))

    def table_for_alias(self, alias: str) -> Optional[Union[str, CanonicalQuery]]:
        for name, target in self.entries:
            if name == alias:
                return target
        # an unaliased real table is addressable by its own name
        for _, target in self.entries:
            if isinstance(target, str) and target == alias:
                return target
        return None

    def real_tables(self) -> list[str]:
        return [t for _, t in self.entries if isinstance(t, str)]


def parse_sql(sql: str, schema=None) -> CanonicalQuery:
    """Parse one SELECT statement into its canonical component structure.

    ``schema`` is any object exposing ``tables`` with ``name``/``columns``
    attributes (see dbexec.DatabaseSchema). With a schema, unqualified
    columns resolve case-insensitively to their table; ambiguous names go
    to the first FROM table with an AmbiguousColumnWarning, and unknown
    names raise SchemaResolutionError.
    """
    tokens = _tokenize(sql)
    if tokens[0].kind == "eof":
        raise ParseError("empty statement", 0)
    parser = _Parser(tokens, _schema_map(schema))
    return parser.parse_statement()


def _schema_map(schema) -> Optional[dict]:
    if schema is None:
        return None
    return {
        t.name.lower(): [c.name.lower() for c in t.columns] for t in schema.tables
    }


class _Parser:
    def __init__(self, tokens: list[_Token], schema_map: Optional[dict]) -> None:
        self.tokens = tokens
        self.i = 0
        self.schema_map = schema_map

    # -- token helpers ------------------------------------------------

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at_kw(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "id" and tok.value.lower() in words

    def accept_kw(self, *words: str) -> Optional[str]:
        if self.at_kw(*words):
            return self.next().value.lower()
        return None

    def expect_kw(self, word: str) -> None:
        if not self.accept_kw(word):
            tok = self.peek()
            raise ParseError(f"expected {word.upper()}, found {tok.value!r}", tok.pos)

    def accept_punct(self, ch: str) -> bool:
        tok = self.peek()
        if tok.kind == "punct" and tok.value == ch:
            self.next()
            return True
        return False

    def expect_punct(self, ch: str) -> None:
        tok = self.peek()
        if not self.accept_punct(ch):
            raise ParseError(f"expected {ch!r}, found {tok.value!r}", tok.pos)

    # -- entry points -------------------------------------------------

    def parse_statement(self) -> CanonicalQuery:
        tok = self.peek()
        if not self.at_kw("select"):
            raise ParseError(
                f"only single SELECT statements are accepted, found {tok.value!r}",
                tok.pos,
            )
        query = self.parse_query(None)
        self.accept_punct(";")
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"trailing input {tok.value!r}", tok.pos)
        return query

    def parse_query(self, outer: Optional[_Scope]) -> CanonicalQuery:
        core = self.parse_select_core(outer)
        op = self.accept_kw(*_SET_OPS)
        if op:
            if self.accept_kw("all"):
                tok = self.peek()
                raise ParseError("set operators with ALL are not accepted", tok.pos)
            right = self.parse_query(outer)
            return replace(core, set_op=SetOp(op, right))
        return core

    # -- clauses ------------------------------------------------------

    def parse_select_core(self, outer: Optional[_Scope]) -> CanonicalQuery:
        self.expect_kw("select")
        select_distinct = bool(self.accept_kw("distinct"))
        raw_items = [self.parse_expr()]
        while self.accept_punct(","):
            raw_items.append(self.parse_expr())

        self.expect_kw("from")
        scope = _Scope(self.schema_map, outer)
        join_conds: list[Condition] = []
        self.parse_table_source(scope, outer)
        while True:
            if self.at_kw("join") or (
                self.at_kw(*_JOIN_MODIFIERS) and self.peek(1).value.lower() == "join"
            ):
                while self.accept_kw(*_JOIN_MODIFIERS):
                    pass
                self.expect_kw("join")
                self.parse_table_source(scope, outer)
                if self.accept_kw("on"):
                    join_conds.append(self.parse_condition(scope))
                    while self.accept_kw("and"):
                        join_conds.append(self.parse_condition(scope))
            elif self.accept_punct(","):
                self.parse_table_source(scope, outer)
            else:
                break

        where_conds: list[Condition] = []
        where_conn: list[str] = []
        if self.accept_kw("where"):
            where_conds, where_conn = self.parse_cond_list(scope)

        group_by: list[str] = []
        if self.accept_kw("group"):
            self.expect_kw("by")
            group_by.append(self.resolve_path(self.parse_column_path(), scope))
            while self.accept_punct(","):
                group_by.append(self.resolve_path(self.parse_column_path(), scope))

        having_conds: list[Condition] = []
        having_conn: list[str] = []
        if self.accept_kw("having"):
            having_conds, having_conn = self.parse_cond_list(scope)

        order_by: list[OrderItem] = []
        if self.accept_kw("order"):
            self.expect_kw("by")
            order_by.append(self.parse_order_item(scope))
            while self.accept_punct(","):
                order_by.append(self.parse_order_item(scope))

        limit = None
        if self.accept_kw("limit"):
            tok = self.next()
            if tok.kind != "num":
                raise ParseError(f"LIMIT expects a number, found {tok.value!r}", tok.pos)
            limit = int(float(tok.value))

        items = [self.resolve_expr(e, scope) for e in raw_items]
        from_tables = frozenset(target for _, target in scope.entries)
        where_set = frozenset(where_conds)
        having_set = frozenset(having_conds)
        return CanonicalQuery(
            select_items=frozenset(items),
            select_distinct=select_distinct,
            from_tables=from_tables,
            join_conditions=frozenset(join_conds),
            where_conditions=where_set,
            where_connectors=_trim_connectors(where_conn, len(where_set)),
            group_by=frozenset(group_by),
            having_conditions=having_set,
            having_connectors=_trim_connectors(having_conn, len(having_set)),
            order_by=tuple(order_by),
            limit=limit,
        )

    def parse_table_source(self, scope: _Scope, outer: Optional[_Scope]) -> None:
        if self.accept_punct("("):
            sub = self.parse_query(outer)
            self.expect_punct(")")
            alias = self.parse_alias()
            scope.add(alias or f"__subquery_{len(scope.entries)}__", sub)
            return
        tok = self.next()
        if tok.kind != "id":
            raise ParseError(f"expected a table name, found {tok.value!r}", tok.pos)
        table = tok.value.lower()
        if self.schema_map is not None and table not in self.schema_map:
            raise SchemaResolutionError(f"unknown table {table!r}")
        alias = self.parse_alias()
        scope.add(alias or table, table)

    def parse_alias(self) -> Optional[str]:
        if self.accept_kw("as"):
            tok = self.next()
            if tok.kind != "id":
                raise ParseError(f"expected an alias, found {tok.value!r}", tok.pos)
            return tok.value.lower()
        tok = self.peek()
        if tok.kind == "id" and tok.value.lower() not in _RESERVED:
            self.next()
            return tok.value.lower()
        return None

    # -- expressions --------------------------------------------------

    def parse_expr(self) -> Expr:
        if self.at_kw(*_AGGS) and self.peek(1).value == "(":
            agg = Agg(self.next().value.lower())
            self.expect_punct("(")
            distinct = bool(self.accept_kw("distinct"))
            arg = self.parse_arith_or_col()
            self.expect_punct(")")
            if self.peek().value in _ARITH_OPS and self.peek().kind == "punct":
                if isinstance(arg, Arith):
                    tok = self.peek()
                    raise ParseError("arithmetic over aggregated arithmetic", tok.pos)
                op = self.next().value
                right = self.parse_operand()
                left = ColumnRef(arg.path, agg, distinct)
                return Expr(Arith(op, left, right))
            return Expr(arg, agg, distinct)
        left = self.parse_operand()
        if self.peek().kind == "punct" and self.peek().value in _ARITH_OPS:
            op = self.next().value
            right = self.parse_operand()
            return Expr(Arith(op, left, right))
        return Expr(left)

    def parse_arith_or_col(self) -> Union[ColumnRef, Arith]:
        left = self.parse_operand()
        if self.peek().kind == "punct" and self.peek().value in _ARITH_OPS:
            op = self.next().value
            right = self.parse_operand()
            return Arith(op, left, right)
        return left

    def parse_operand(self) -> ColumnRef:
        if self.at_kw(*_AGGS) and self.peek(1).value == "(":
            agg = Agg(self.next().value.lower())
            self.expect_punct("(")
            distinct = bool(self.accept_kw("distinct"))
            path = self.parse_column_path()
            self.expect_punct(")")
            return ColumnRef(path, agg, distinct)
        return ColumnRef(self.parse_column_path())

    def parse_column_path(self) -> str:
        tok = self.next()
        if tok.kind == "punct" and tok.value == "*":
            return "*"
        if tok.kind == "str":
            # double-quoted identifiers occur in column position
            name = tok.value[1:-1].lower()
            if not name:
                raise ParseError("empty quoted identifier", tok.pos)
            head = name
        elif tok.kind == "id":
            if tok.value.lower() in _RESERVED:
                raise ParseError(f"expected a column, found {tok.value!r}", tok.pos)
            head = tok.value.lower()
        else:
            raise ParseError(f"expected a column, found {tok.value!r}", tok.pos)
        if self.peek().kind == "punct" and self.peek().value == ".":
            self.next()
            tok = self.next()
            if tok.kind == "punct" and tok.value == "*":
                return f"{head}.*"
            if tok.kind not in ("id", "str"):
                raise ParseError(f"expected a column, found {tok.value!r}", tok.pos)
            tail = (tok.value[1:-1] if tok.kind == "str" else tok.value).lower()
            return f"{head}.{tail}"
        return head

    def parse_order_item(self, scope: _Scope) -> OrderItem:
        expr = self.resolve_expr(self.parse_expr(), scope)
        desc = False
        direction = self.accept_kw("asc", "desc")
        if direction == "desc":
            desc = True
        return OrderItem(expr, desc)

    # -- conditions ---------------------------------------------------

    def parse_cond_list(self, scope: _Scope) -> tuple[list[Condition], list[str]]:
        conds = [self.parse_condition(scope)]
        connectors: list[str] = []
        while True:
            conn = self.accept_kw("and", "or")
            if conn is None:
                break
            connectors.append(conn)
            conds.append(self.parse_condition(scope))
        return conds, connectors

    def parse_condition(self, scope: _Scope) -> Condition:
        negated = bool(self.accept_kw("not"))
        if self.accept_kw("exists"):
            self.expect_punct("(")
            sub = self.parse_query(scope)
            self.expect_punct(")")
            return Condition(None, "exists", sub, negated=negated)
        lhs = self.resolve_expr(self.parse_expr(), scope)
        if self.accept_kw("not"):
            negated = not negated
        if self.accept_kw("between"):
            low = self.parse_value(scope)
            self.expect_kw("and")
            high = self.parse_value(scope)
            return Condition(lhs, "between", low, high, negated)
        if self.accept_kw("in"):
            self.expect_punct("(")
            if self.at_kw("select"):
                value: CondValue = self.parse_query(scope)
            else:
                value = self.parse_literal_list()
            self.expect_punct(")")
            return Condition(lhs, "in", value, negated=negated)
        if self.accept_kw("like"):
            return Condition(lhs, "like", self.parse_value(scope), negated=negated)
        if self.accept_kw("is"):
            if self.accept_kw("not"):
                negated = not negated
            self.expect_kw("null")
            return Condition(lhs, "is", Literal(None), negated=negated)
        tok = self.next()
        if tok.kind != "op":
            raise ParseError(f"expected a comparison, found {tok.value!r}", tok.pos)
        op = {"<>": "!=", "==": "="}.get(tok.value, tok.value)
        if negated:
            op = _COMPLEMENT[op]
        value = self.parse_value(scope)
        if op in ("=", "!=") and isinstance(value, Expr):
            # canonical operand order makes a = b equal b = a
            from .ast import _render_expr

            if _render_expr(value) < _render_expr(lhs):
                lhs, value = value, lhs
        return Condition(lhs, op, value)

    def parse_literal_list(self) -> tuple:
        values = [self.parse_literal()]
        while self.accept_punct(","):
            values.append(self.parse_literal())
        return tuple(values)

    def parse_literal(self) -> Literal:
        tok = self.next()
        if tok.kind == "num":
            return Literal(float(tok.value))
        if tok.kind == "str":
            return Literal(tok.value[1:-1])
        if tok.kind == "id" and tok.value.lower() == "null":
            return Literal(None)
        if tok.kind == "punct" and tok.value in "+-" and self.peek().kind == "num":
            num = self.next()
            sign = -1.0 if tok.value == "-" else 1.0
            return Literal(sign * float(num.value))
        raise ParseError(f"expected a literal, found {tok.value!r}", tok.pos)

    def parse_value(self, scope: _Scope) -> CondValue:
        tok = self.peek()
        if tok.kind in ("num",) or (tok.kind == "punct" and tok.value in "+-"):
            return self.parse_literal()
        if tok.kind == "str":
            # a quoted token compared against is a string literal
            self.next()
            return Literal(tok.value[1:-1])
        if tok.kind == "punct" and tok.value == "(":
            self.next()
            if self.at_kw("select"):
                sub = self.parse_query(scope)
                self.expect_punct(")")
                return sub
            lit = self.parse_literal()
            self.expect_punct(")")
            return lit
        if tok.kind == "id" and tok.value.lower() == "null":
            self.next()
            return Literal(None)
        # column-valued right-hand side (join-style comparison)
        return self.resolve_expr(self.parse_expr(), scope)

    # -- resolution ---------------------------------------------------

    def resolve_expr(self, expr: Expr, scope: _Scope) -> Expr:
        arg = expr.arg
        if isinstance(arg, Arith):
            arg = Arith(
                arg.op,
                self.resolve_col(arg.left, scope),
                self.resolve_col(arg.right, scope),
            )
        else:
            arg = self.resolve_col(arg, scope)
        return Expr(arg, expr.agg, expr.distinct)

    def resolve_col(self, col: ColumnRef, scope: _Scope) -> ColumnRef:
        return ColumnRef(self.resolve_path(col.path, scope), col.agg, col.distinct)

    def resolve_path(self, path: str, scope: _Scope) -> str:
        if path == "*":
            return path
        if "." in path:
            qualifier, column = path.split(".", 1)
            target = self._find_alias(qualifier, scope)
            if target is None:
                if self.schema_map is not None:
                    raise SchemaResolutionError(
                        f"unknown table or alias {qualifier!r}"
                    )
                return path
            if isinstance(target, CanonicalQuery):
                return column  # subquery alias columns lose their qualifier
            if (
                self.schema_map is not None
                and column != "*"
                and column not in self.schema_map.get(target, ())
            ):
                raise SchemaResolutionError(
                    f"table {target!r} has no column {column!r}"
                )
            return f"{target}.{column}"
        return self._resolve_bare(path, scope)

    def _find_alias(self, qualifier: str, scope: _Scope):
        current: Optional[_Scope] = scope
        while current is not None:
            target = current.table_for_alias(qualifier)
            if target is not None:
                return target
            current = current.parent
        return None

    def _resolve_bare(self, column: str, scope: _Scope) -> str:
        if self.schema_map is None:
            tables = scope.real_tables()
            if len(scope.entries) == 1 and len(tables) == 1:
                return f"{tables[0]}.{column}"
            return column
        current: Optional[_Scope] = scope
        while current is not None:
            matches = [
                t for t in current.real_tables()
                if column in self.schema_map.get(t, ())
            ]
            if len(matches) == 1:
                return f"{matches[0]}.{column}"
            if len(matches) > 1:
                warnings.warn(
                    f"column {column!r} is ambiguous across {matches}; "
                    f"resolved to first FROM table {matches[0]!r}",
                    AmbiguousColumnWarning,
                    stacklevel=4,
                )
                return f"{matches[0]}.{column}"
            current = current.parent
        raise SchemaResolutionError(f"no table in scope has column {column!r}")


_RESERVED = {
    "select", "distinct", "from", "where", "group", "by", "having", "order",
    "limit", "join", "on", "as", "and", "or", "not", "in", "like", "between",
    "is", "null", "exists", "union", "intersect", "except", "asc", "desc",
    "inner", "left", "right", "full", "outer", "cross", "all",
}


def _trim_connectors(connectors: list[str], atom_count: int) -> tuple:
    # duplicate atoms collapse in the set; keep a matching connector count
    keep = max(0, atom_count - 1)
    return tuple(sorted(connectors)[:keep])
