"""Grid search over MLP settings scored by median validation MRR across seeds."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class SearchResult:
    best_params: dict
    best_score: float
    table: list = field(default_factory=list)  # (params, [per-seed MRR], median)


def expand_grid(grid):
    """Accepts a dict of lists or a list of dicts."""
    if isinstance(grid, dict):
        keys = sorted(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid]


def _tie_key(params):
    return (params.get("hidden_units", 0), params.get("dropout", 0.0))


def hyperparameter_search(grid, fit_score, seeds=(0, 1, 2)) -> SearchResult:
    """Pick the setting with the best median of ``fit_score(params, seed)``.

    ``fit_score`` trains with ``params`` and ``seed`` and returns validation
    MRR. Ties go to fewer hidden units, then lower dropout.
    """
    configs = expand_grid(grid)
    if not configs:
        raise ValueError("grid is empty")
    table = []
    for params in configs:
        scores = [float(fit_score(dict(params), seed)) for seed in seeds]
        med = float(np.median(scores))
        logger.info("search %s -> median MRR %.5f", params, med)
        table.append((params, scores, med))
    best = min(table, key=lambda row: (-row[2], _tie_key(row[0])))
    return SearchResult(best_params=best[0], best_score=best[2], table=table)
