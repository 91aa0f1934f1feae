"""Python bindings for the sparsedoc C++ core."""

from ._core import (
    Error,
    NotFoundError,
    ParseError,
    ValidationError,
    classification_loss,
    compute_metrics,
    crossval,
    default_config,
    filter_text,
    generate_synth,
    make_entity_id,
    relevance_loss,
    segment,
    tokenize,
)

__all__ = [
    "Error",
    "NotFoundError",
    "ParseError",
    "ValidationError",
    "classification_loss",
    "compute_metrics",
    "crossval",
    "default_config",
    "filter_text",
    "generate_synth",
    "make_entity_id",
    "relevance_loss",
    "segment",
    "tokenize",
]
