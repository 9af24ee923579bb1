"""Rankers and baselines sharing one scoring contract."""
from .mf import MatrixFactorization
from .mlp import SEARCH_GRID, STUDY_PARAMS, TUNED_PARAMS, MLPRanker
from .optim import Adam, one_cycle_schedule
from .scorers import SCORERS, MLPScorer, Scorer, make_scorer

__all__ = ["Adam", "MLPRanker", "MLPScorer", "MatrixFactorization", "SEARCH_GRID", "SCORERS",
           "STUDY_PARAMS", "Scorer", "TUNED_PARAMS", "make_scorer", "one_cycle_schedule"]
