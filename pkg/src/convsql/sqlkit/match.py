"""Exact-set matching of canonical queries."""

from __future__ import annotations

from .ast import CanonicalQuery, mask_values


def exact_set_match(
    gold: CanonicalQuery, pred: CanonicalQuery, include_values: bool = False
) -> bool:
    """True iff every clause component of pred equals gold's.

    Set-valued clauses compare as sets, ORDER BY as an ordered list, and
    nested queries recursively. With ``include_values=False`` (the seed
    benchmark's convention) literal values and the LIMIT count are masked
    before comparing. Symmetric and reflexive by construction.
    """
    if include_values:
        return gold == pred
    return mask_values(gold) == mask_values(pred)
