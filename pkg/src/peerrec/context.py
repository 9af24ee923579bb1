"""Shared point-in-time state for scoring: log index, initiations, graph, features."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .events import EventLog
from .features import FeatureBuilder, FeatureConfig
from .feedback import CandidatePool, InitiationTable, TemporalGraph, extract_initiations
from .history import LogIndex


class RankingContext:
    """Everything a scorer needs at time ``t``.

    Time only moves forward (the interaction graph is replayed
    incrementally); use :meth:`fork` for an independent context.
    """

    def __init__(self, log: EventLog, config: FeatureConfig = FeatureConfig(), embedder=None,
                 initiations=None, index: Optional[LogIndex] = None):
        self.log = log
        self.index = index or LogIndex(log)
        self.initiations = extract_initiations(log) if initiations is None else list(initiations)
        self.table = InitiationTable(self.index, self.initiations)
        self.builder = FeatureBuilder(self.index, config, embedder)
        self.pool = CandidatePool(self.index)
        self._tgraph = TemporalGraph(self.table)
        self.t = None

    @property
    def config(self):
        return self.builder.config

    def fork(self):
        """Fresh graph/pool state sharing the (read-only) index and text cache."""
        other = object.__new__(RankingContext)
        other.__dict__.update(self.__dict__)
        other.pool = CandidatePool(self.index)
        other._tgraph = TemporalGraph(self.table)
        other.t = None
        return other

    def at(self, t):
        if self.t is not None and t < self.t:
            raise ValueError("RankingContext cannot move backwards; fork() a new one")
        self._tgraph.advance_to(t)
        self.t = t
        return self

    @property
    def graph(self):
        return self._tgraph.graph

    def source_pairs(self, author):
        return np.asarray(self.index.eligible_pairs_of_author(author, self.t), dtype=np.int64)

    def candidates(self, author, exclude_sites=()):
        return self.pool.for_source(author, self.t, exclude_sites)

    def feature_matrix(self, source_pairs, candidate_pairs):
        return self.builder.matrix(source_pairs, candidate_pairs, self.graph, self.t)
