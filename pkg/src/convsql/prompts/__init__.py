"""Prompt templates and category guides for every model-facing step.

Templates are versioned text files under ``templates/`` with str.format
placeholders. The relation and question-type guides below are the product
definitions embedded into generation and verification prompts.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from ..domain import QuestionVariant, ThematicRelation


def load_template(name: str) -> str:
    return (
        resources.files(__package__)
        .joinpath("templates", f"{name}.txt")
        .read_text(encoding="utf-8")
    )


@dataclass(frozen=True)
class RelationGuide:
    definition: str
    example_prev: str
    example_cur: str


RELATION_GUIDES: dict[ThematicRelation, RelationGuide] = {
    ThematicRelation.CONSTRAINT_REFINEMENT: RelationGuide(
        "The new question asks for the same kind of entity as the previous "
        "question but under a different constraint.",
        "Which course has the fewest enrollments?",
        "And which one is the most popular?",
    ),
    ThematicRelation.TOPIC_EXPLORATION: RelationGuide(
        "The new question asks about other properties of the entity the "
        "previous question was about.",
        "What is the capacity of the main lecture hall?",
        "List all the equipment it has.",
    ),
    ThematicRelation.PARTICIPANT_SHIFT: RelationGuide(
        "The new question asks for the same property, but about a different "
        "entity.",
        "What rating did the pilot episode get?",
        "How about the season finale?",
    ),
    ThematicRelation.ANSWER_EXPLORATION: RelationGuide(
        "The new question narrows in on a subset of the previous answer or "
        "on one specific entity mentioned in it.",
        "List all the distinct department names.",
        "What is the average salary of instructors in the Statistics department?",
    ),
}


@dataclass(frozen=True)
class TypeGuide:
    definition: str
    example_question: str
    example_response: str
    subtypes: tuple[str, ...] = ()


TYPE_GUIDES: dict[QuestionVariant, TypeGuide] = {
    QuestionVariant.ANSWERABLE: TypeGuide(
        "The question is clear and every concept it mentions exists in the "
        "schema, so it can be answered with a SQL query over the database.",
        "What is the id of the donor named Glenn?",
        "SELECT endowment_id FROM endowment WHERE donator_name LIKE 'Glenn%'",
    ),
    QuestionVariant.AMBIGUOUS: TypeGuide(
        "A term in the question maps to more than one column or more than "
        "one cell value, so the system must ask which one is meant instead "
        "of guessing.",
        "What's the id of Glenn?",
        "Do you mean the school named Glenn or the donor named Glenn?",
        subtypes=("column_ambiguity", "value_ambiguity"),
    ),
    QuestionVariant.UNANSWERABLE: TypeGuide(
        "The question mentions a concept the schema does not store, a value "
        "absent from the tables, or an action outside what a SQL system can "
        "do; the system must explain why it cannot answer.",
        "Are all the donors from the same country?",
        "Sorry, the database stores no nationality information for donors.",
        subtypes=("column_unanswerable", "value_unanswerable", "out_of_scope"),
    ),
    QuestionVariant.IMPROPER: TypeGuide(
        "The message is everyday conversation, not a database question; a "
        "short regular reply is enough.",
        "Thanks!",
        "You are welcome!",
    ),
}
