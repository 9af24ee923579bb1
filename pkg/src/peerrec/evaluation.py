"""Chronological offline evaluation: competition ranks, MRR/HR, coverage, drift."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .batcher import merge_pair_scores_to_sites, site_scores
from .history import WEEK_MS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    train_end_ts: int
    validation_end_ts: int
    test_end_ts: int

    def __post_init__(self):
        if not self.train_end_ts < self.validation_end_ts < self.test_end_ts:
            raise ValueError("split boundaries must be strictly increasing")


def chronological_split(initiations, spec: SplitSpec):
    """Partition into train [.., train_end), validation [train_end, validation_end),
    test [validation_end, test_end). Initiations at/after ``test_end`` are dropped."""
    train, val, test = [], [], []
    dropped = 0
    for i in initiations:
        t = i.timestamp_ms
        if t < spec.train_end_ts:
            train.append(i)
        elif t < spec.validation_end_ts:
            val.append(i)
        elif t < spec.test_end_ts:
            test.append(i)
        else:
            dropped += 1
    for name, part in (("train", train), ("validation", val), ("test", test)):
        if not part:
            logger.warning("%s split is empty", name)
    if dropped:
        logger.info("%d initiation(s) at or after test_end ignored", dropped)
    return train, val, test


@dataclass(frozen=True)
class RankResult:
    initiation_index: int
    timestamp_ms: int
    rank: int
    n_candidates: int

    @property
    def reciprocal_rank(self):
        return 1.0 / self.rank


def competition_rank(target_score, scores):
    """1 + number of items scoring strictly higher, with ties sharing the worst rank:
    equivalently the count of items scoring >= the target (target included)."""
    return int(np.count_nonzero(np.asarray(scores) >= target_score))


@dataclass
class RankingRun:
    results: list = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)


def rank_target(scorer, ctx, initiation, initiation_index=0):
    """Rank of the initiated site among the source's candidate sites, or a skip reason (str)."""
    ix = ctx.index
    t = initiation.timestamp_ms
    ctx.at(t)
    a = ix.user_idx[initiation.source_author]
    target = ix.site_idx[initiation.target_site]
    src = ctx.source_pairs(a)
    if not len(src):
        return "source_ineligible"
    if not ix.eligible_pairs_of_site(target, t):
        return "target_ineligible"
    cands = ctx.candidates(a)
    cand_sites = ix.pair_site[cands]
    if not np.any(cand_sites == target):
        return "target_not_candidate"
    scores = scorer.score_pairs(ctx, src, cands)
    sites, best = site_scores(scores, cand_sites)
    tgt = best[np.flatnonzero(sites == target)[0]]
    return RankResult(initiation_index, t, competition_rank(tgt, best), len(sites))


def rank_initiations(scorer, ctx, initiations, start_index=0):
    """Ranks for time-ordered initiations; ``ctx`` must not be ahead of the first one."""
    run = RankingRun()
    for k, init in enumerate(initiations):
        r = rank_target(scorer, ctx, init, start_index + k)
        if isinstance(r, str):
            run.skipped[r] += 1
        else:
            run.results.append(r)
    return run


@dataclass
class MetricsReport:
    mrr: float
    hr1: float
    hr5: float
    n_evaluated: int
    median_candidates: float
    skipped: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def compute_metrics(results, skipped=None) -> MetricsReport:
    if not results:
        raise ValueError("no ranked initiations to summarize")
    ranks = np.asarray([r.rank for r in results], dtype=float)
    return MetricsReport(
        mrr=float(np.mean(1.0 / ranks)),
        hr1=float(np.mean(ranks <= 1)),
        hr5=float(np.mean(ranks <= 5)),
        n_evaluated=len(results),
        median_candidates=float(np.median([r.n_candidates for r in results])),
        skipped=dict(sorted((skipped or {}).items())),
    )


def median_metrics(reports):
    """Elementwise median of several seeds' reports."""
    keys = ("mrr", "hr1", "hr5", "n_evaluated", "median_candidates")
    med = {k: float(np.median([getattr(r, k) for r in reports])) for k in keys}
    med["n_evaluated"] = int(med["n_evaluated"])
    return MetricsReport(**med, skipped=reports[0].skipped)


@dataclass
class CoverageReport:
    n_authors: int
    k: int
    R_size: int
    pct_unique: float
    mmst_weeks: float
    siloed_pct_recced: float
    siloed_pct_unrecced: float
    siloed_ratio: float
    n_candidate_sites: int

    def to_dict(self):
        return asdict(self)


def recommendable_authors(ctx, t):
    """Authors with an eligible pair who are active at ``t`` (sorted codes)."""
    ix = ctx.index
    elig = ix.eligible_pairs_mask(t)
    authors = np.unique(ix.pair_author[elig])
    return authors[ix.is_active(authors, t)]


def top_k_sites(scorer, ctx, author, k, seed=0):
    ix = ctx.index
    src = ctx.source_pairs(author)
    cands = ctx.candidates(author)
    if not len(src) or not len(cands):
        return []
    ranked = merge_pair_scores_to_sites(scorer.score_pairs(ctx, src, cands), ix.pair_site[cands], seed)
    return [s for s, _ in ranked[:k]]


def coverage_report(rec_sets, universe, siloed, site_tenure_weeks, n_authors, k) -> CoverageReport:
    """Coverage statistics from explicit recommendation sets.

    ``rec_sets``: list of site collections; ``universe``: all candidate sites;
    ``siloed``: the siloed subset; ``site_tenure_weeks``: site -> weeks.
    """
    R = set().union(*map(set, rec_sets)) if rec_sets else set()
    universe = set(universe)
    N = universe - R
    siloed = set(siloed)
    s_r = len(R & siloed) / len(R) if R else 0.0
    s_n = len(N & siloed) / len(N) if N else 0.0
    mins = [min(site_tenure_weeks[s] for s in rs) for rs in rec_sets if len(rs)]
    return CoverageReport(
        n_authors=n_authors,
        k=k,
        R_size=len(R),
        pct_unique=len(R) / (n_authors * k),
        mmst_weeks=float(np.mean(mins)) if mins else float("nan"),
        siloed_pct_recced=s_r,
        siloed_pct_unrecced=s_n,
        siloed_ratio=s_r / s_n if s_n > 0 else float("nan"),
        n_candidate_sites=len(universe),
    )


def coverage_eval(scorer, ctx, t, n_authors=1000, k=5, seed=0) -> CoverageReport:
    """Top-k (uncapped) sets for a random sample of eligible active authors at ``t``."""
    ix = ctx.index
    ctx.at(t)
    pool = recommendable_authors(ctx, t)
    if len(pool) < n_authors:
        logger.warning("only %d eligible active authors at t; sampling all", len(pool))
        chosen = pool
    else:
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(pool, size=n_authors, replace=False))
    rec_sets = [top_k_sites(scorer, ctx, int(a), k, seed) for a in chosen]
    universe = np.unique(ix.pair_site[ctx.pool.pool(t)])
    g = ctx.graph
    siloed = [s for s in universe.tolist() if all(g.indegree[a] == 0 for a in ix.site_authors(s, t))]
    first = ix.site_first_update
    tenure = {s: (t - first[s]) / WEEK_MS for s in universe.tolist()}
    return coverage_report(rec_sets, universe.tolist(), siloed, tenure, len(chosen), k)


@dataclass
class DriftReport:
    slope: float
    stderr: float
    p_value: float
    weeks: list
    weekly_mrr: list


def drift_check(results, train_end_ts) -> DriftReport:
    """Least-squares slope of weekly MRR against weeks since the end of training."""
    buckets = {}
    for r in results:
        buckets.setdefault((r.timestamp_ms - train_end_ts) // WEEK_MS, []).append(r.reciprocal_rank)
    if len(buckets) < 3:
        raise ValueError(f"need at least 3 weekly buckets, got {len(buckets)}")
    weeks = sorted(buckets)
    mrr = [float(np.mean(buckets[w])) for w in weeks]
    if np.ptp(mrr) == 0:
        return DriftReport(0.0, 0.0, 1.0, [int(w) for w in weeks], mrr)
    fit = stats.linregress(weeks, mrr)
    return DriftReport(float(fit.slope), float(fit.stderr), float(fit.pvalue), [int(w) for w in weeks], mrr)


TABLE_COLUMNS = ("model", "MRR", "HR@1", "HR@5", "|R|", "%Unique", "MMST", "siloed ratio")


def format_table(rows):
    """Aligned text table; ``rows`` is a list of (name, MetricsReport, CoverageReport|None)."""
    lines = []
    for name, m, c in rows:
        cells = [name, f"{m.mrr:.3f}", f"{100 * m.hr1:.2f}%", f"{100 * m.hr5:.2f}%"]
        if c is None:
            cells += ["-", "-", "-", "-"]
        else:
            cells += [str(c.R_size), f"{100 * c.pct_unique:.1f}%", f"{c.mmst_weeks:.1f} weeks",
                      f"{100 * c.siloed_pct_recced:.1f}% / {100 * c.siloed_pct_unrecced:.1f}% = {c.siloed_ratio:.2f}"]
        lines.append(cells)
    table = [list(TABLE_COLUMNS)] + lines
    widths = [max(len(r[i]) for r in table) for i in range(len(TABLE_COLUMNS))]
    out = []
    for j, r in enumerate(table):
        out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        if j == 0:
            out.append("-" * len(out[0]))
    return "\n".join(out) + "\n"


def report_json(rows) -> str:
    payload = [{"model": name, "metrics": m.to_dict(), "coverage": None if c is None else c.to_dict()}
               for name, m, c in rows]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
