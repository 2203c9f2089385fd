"""Recycling Bloom filters: exact long-run false-positive analysis, bounds,
capacity planning and a Monte-Carlo simulator."""

from .core import (
    FilterParams,
    FilterState,
    HashAssignment,
    HashVariant,
    InsertOutcome,
    InvalidParameterError,
    NBounded,
    Phases,
    Retention,
    SigmaBounded,
    hash_indices,
    insert,
    query,
)

__version__ = "0.1.0"
