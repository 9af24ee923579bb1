"""Scorers behind one contract: ``score_pairs(ctx, source_pairs, candidate_pairs)``.

``ctx`` is a :class:`~peerrec.context.RankingContext` positioned at the
scoring instant; pair arguments are pair codes of ``ctx.index``. The result
has shape ``(len(source_pairs), len(candidate_pairs))``; higher is better.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, clone

from .._hashing import combine, seed_word, to_unit
from ..features import MISSING_HOURS
from ..history import HOUR_MS, WEEK_MS
from .mf import MatrixFactorization
from .mlp import MLPRanker


class Scorer(BaseEstimator):
    kind = "abstract"

    def fit(self, ctx, samples=None, initiations=None):
        return self

    def score_pairs(self, ctx, source_pairs, candidate_pairs):
        raise NotImplementedError


def sample_matrix(ctx, sample_set):
    """Feature rows, labels and initiation groups for a training sample set."""
    ix = ctx.index
    by_t = {}
    for k, s in enumerate(sample_set.samples):
        by_t.setdefault(s.timestamp_ms, []).append(k)
    X = np.zeros((len(sample_set.samples), ctx.config.n_features))
    for t in sorted(by_t):
        ks = by_t[t]
        ctx.at(t)
        src = [ix.code_of_pair(sample_set.samples[k].source) for k in ks]
        cand = [ix.code_of_pair(sample_set.samples[k].candidate) for k in ks]
        X[ks] = ctx.builder.paired_matrix(src, cand, ctx.graph, t)
    return X, sample_set.labels, sample_set.groups


class MLPScorer(Scorer):
    kind = "MLP"

    def __init__(self, estimator=None):
        self.estimator = estimator

    def fit(self, ctx, samples=None, initiations=None, X=None):
        est = clone(self.estimator) if self.estimator is not None else MLPRanker()
        if est.scale_columns is None:
            est.set_params(scale_columns=ctx.config.raw_scale_columns().tolist())
        if X is None:
            X, y, groups = sample_matrix(ctx.fork(), samples)
        else:
            y, groups = samples.labels, samples.groups
        self.estimator_ = est.fit(X, y, groups)
        return self

    def score_pairs(self, ctx, source_pairs, candidate_pairs):
        X = ctx.feature_matrix(source_pairs, candidate_pairs)
        return self.estimator_.predict_score(X).reshape(len(source_pairs), len(candidate_pairs))


class PeopleYouKnowScorer(Scorer):
    """Tiered network proximity: reciprocation > friend-of-friend > same component > other."""

    kind = "PeopleYouKnow"

    def score_pairs(self, ctx, source_pairs, candidate_pairs):
        ix, g = ctx.index, ctx.graph
        cand_authors = ix.pair_author[np.asarray(candidate_pairs, dtype=np.int64)]
        out = np.zeros((len(source_pairs), len(candidate_pairs)))
        for i, p in enumerate(np.asarray(source_pairs, dtype=np.int64).tolist()):
            dy = g.dyadic_block(int(ix.pair_author[p]), cand_authors)
            out[i] = np.where(dy[:, 2] > 0, 3.0, np.where(dy[:, 1] > 0, 2.0, np.where(dy[:, 0] > 0, 1.0, 0.0)))
        return out


def cosine_matrix(A, B):
    na = np.linalg.norm(A, axis=1, keepdims=True)
    nb = np.linalg.norm(B, axis=1, keepdims=True)
    na[na == 0] = 1.0
    nb[nb == 0] = 1.0
    return (A / na) @ (B / nb).T


class CosSimScorer(Scorer):
    """Cosine similarity between the source and candidate [text | activity | network] blocks."""

    kind = "CosSim"

    def score_pairs(self, ctx, source_pairs, candidate_pairs):
        b = ctx.builder
        side_mask = b.config.mask()[: b.config.side_width]
        src = b.side_block(source_pairs, ctx.graph, ctx.t) * side_mask
        cand = b.side_block(candidate_pairs, ctx.graph, ctx.t) * side_mask
        return cosine_matrix(src, cand)


class MFScorer(Scorer):
    kind = "MF"

    def __init__(self, estimator=None):
        self.estimator = estimator

    def fit(self, ctx, samples=None, initiations=None):
        est = clone(self.estimator) if self.estimator is not None else MatrixFactorization()
        authors = [s.source.author for s in samples.samples]
        sites = [s.candidate.site for s in samples.samples]
        occ = None
        if initiations is not None:
            occ = [(i.source_author, i.target_site) for i in initiations]
        self.estimator_ = est.fit(authors, sites, samples.labels, occurrences=occ)
        return self

    def score_pairs(self, ctx, source_pairs, candidate_pairs):
        ix = ctx.index
        src_authors = [ix.users[a] for a in ix.pair_author[np.asarray(source_pairs, dtype=np.int64)]]
        cand_sites = [ix.sites[s] for s in ix.pair_site[np.asarray(candidate_pairs, dtype=np.int64)]]
        return self.estimator_.score_matrix(src_authors, cand_sites)


class SiteScorer(Scorer):
    """Non-personalized scorers: one score per candidate site."""

    def site_scores(self, ctx, sites):
        raise NotImplementedError

    def score_pairs(self, ctx, source_pairs, candidate_pairs):
        sites = ctx.index.pair_site[np.asarray(candidate_pairs, dtype=np.int64)]
        s = np.asarray(self.site_scores(ctx, sites), dtype=float)
        return np.broadcast_to(s, (len(source_pairs), len(s))).copy()


def _hours_since(t, last):
    return np.where(last >= 0, (t - last) / HOUR_MS, MISSING_HOURS)


class MostInitsScorer(SiteScorer):
    kind = "MostInits"

    def site_scores(self, ctx, sites):
        return ctx.table.received_between(sites, ctx.t - WEEK_MS, ctx.t).astype(float)


class RecentInitsScorer(SiteScorer):
    kind = "RecentInits"

    def site_scores(self, ctx, sites):
        return -_hours_since(ctx.t, ctx.table.last_received_before(sites, ctx.t))


class MostJournalsScorer(SiteScorer):
    kind = "MostJournals"

    def site_scores(self, ctx, sites):
        return ctx.index.site_updates.count_between(sites, ctx.t - WEEK_MS, ctx.t).astype(float)


class RecentJournalsScorer(SiteScorer):
    kind = "RecentJournals"

    def site_scores(self, ctx, sites):
        return -_hours_since(ctx.t, ctx.index.site_updates.last_before(sites, ctx.t))


class NewestAuthorScorer(SiteScorer):
    """Newest sites first: negative hours since the site's first update."""

    kind = "NewestAuthor"

    def site_scores(self, ctx, sites):
        first = ctx.index.site_first_update[np.asarray(sites, dtype=np.int64)]
        return -np.where(first < ctx.t, (ctx.t - np.minimum(first, ctx.t)) / HOUR_MS, MISSING_HOURS)


class MostInteractiveScorer(SiteScorer):
    """Interactions left on the site by authors during the trailing week."""

    kind = "MostInteractive"

    def site_scores(self, ctx, sites):
        ix, t = ctx.index, ctx.t
        keyed = ix.site_interactions
        start, stop = keyed.bounds(sites, t - WEEK_MS, t)
        out = np.zeros(len(start))
        for i, (a, b) in enumerate(zip(start.tolist(), stop.tolist())):
            if b > a:
                actors = ix.actor[keyed.rows[a:b]]
                out[i] = np.count_nonzero(ix.author_first_update[actors] < ix.ts[keyed.rows[a:b]])
        return out


class RandomScorer(Scorer):
    """Uniform scores keyed by (seed, source pair, candidate pair, t)."""

    kind = "Random"

    def __init__(self, seed=0):
        self.seed = seed

    def score_pairs(self, ctx, source_pairs, candidate_pairs):
        ix = ctx.index
        uh, sh = ix.id_hashes
        sp = np.asarray(source_pairs, dtype=np.int64)
        cp = np.asarray(candidate_pairs, dtype=np.int64)
        h_src = combine(uh[ix.pair_author[sp]], sh[ix.pair_site[sp]])[:, None]
        h_cand = combine(uh[ix.pair_author[cp]], sh[ix.pair_site[cp]])[None, :]
        return to_unit(combine(seed_word(self.seed), h_src, h_cand, np.uint64(ctx.t)))


SCORERS = {cls.kind: cls for cls in (
    MLPScorer, PeopleYouKnowScorer, CosSimScorer, MFScorer, MostInitsScorer, RecentInitsScorer,
    MostJournalsScorer, RecentJournalsScorer, NewestAuthorScorer, MostInteractiveScorer, RandomScorer)}


def make_scorer(kind, **params):
    try:
        cls = SCORERS[kind]
    except KeyError:
        raise ValueError(f"unknown scorer kind {kind!r}; choose from {sorted(SCORERS)}") from None
    return cls(**params)
