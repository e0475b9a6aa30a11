"""Toolkit for multi-turn, multi-type text-to-SQL dialogues: generation,
refinement, evaluation, dataset tooling, and a stateful inference engine."""

__version__ = "0.1.0"
