"""SQL parsing, canonicalization, matching, and structural measures."""

from .ast import (
    Agg,
    Arith,
    CanonicalQuery,
    ColumnRef,
    Condition,
    DifficultyLevel,
    Expr,
    Literal,
    OrderItem,
    SetOp,
    VALUE_SLOT,
    mask_values,
    render,
)
from .errors import (
    AmbiguousColumnWarning,
    ParseError,
    SchemaResolutionError,
    SqlError,
)
from .match import exact_set_match
from .measures import ast_depth, difficulty
from .parser import parse_sql

__all__ = [
    "Agg",
    "AmbiguousColumnWarning",
    "Arith",
    "CanonicalQuery",
    "ColumnRef",
    "Condition",
    "DifficultyLevel",
    "Expr",
    "Literal",
    "OrderItem",
    "ParseError",
    "SchemaResolutionError",
    "SetOp",
    "SqlError",
    "VALUE_SLOT",
    "ast_depth",
    "difficulty",
    "exact_set_match",
    "mask_values",
    "parse_sql",
    "render",
]
