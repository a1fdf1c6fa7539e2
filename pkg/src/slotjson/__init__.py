"""Generalised multi-intent slot filling as JSON generation."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    EntityName,
    Extraction,
    IntentInstance,
    IntentName,
    TaskInput,
    TaskRecord,
    canonical_serialize,
    parse_extraction,
    to_snake_case,
)
from .evaluation import EvalCounts, Scores, prf1, score_corpus, score_record  # noqa: E402

__all__ = [
    "EntityName", "Extraction", "IntentInstance", "IntentName", "TaskInput", "TaskRecord",
    "canonical_serialize", "parse_extraction", "to_snake_case",
    "EvalCounts", "Scores", "prf1", "score_corpus", "score_record",
]
