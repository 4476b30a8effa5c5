"""Tree-structured GUI exploration: replay checks, exploration runs and diversity metrics."""

import json

from ._core import (
    ConfigError,
    ContractError,
    Error,
    NotFoundError,
    UndefinedAverageError,
    cli,
    exploration_stats,
    explore,
    redundancy_matrix,
    rms_diff,
    tfidf_cosine,
    ttr,
    unique_task_count,
)
from ._core import load_forest as _load_forest


def load_forest(path):
    """Parsed tree documents of a forest directory and the warnings for skipped files."""
    trees, warnings = _load_forest(str(path))
    return [json.loads(t) for t in trees], warnings


__all__ = [
    "ConfigError",
    "ContractError",
    "Error",
    "NotFoundError",
    "UndefinedAverageError",
    "cli",
    "exploration_stats",
    "explore",
    "load_forest",
    "redundancy_matrix",
    "rms_diff",
    "tfidf_cosine",
    "ttr",
    "unique_task_count",
]
