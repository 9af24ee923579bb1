"""Implicit feedback: initiations, the author interaction graph, candidates, samples."""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .events import INTERACTION_KINDS, EventKind, EventLog
from .history import LogIndex

logger = logging.getLogger(__name__)

MIN_ELIGIBLE_UPDATES = 3


@dataclass(frozen=True, order=True)
class AuthorSitePair:
    author: str
    site: str


@dataclass(frozen=True)
class Initiation:
    source_author: str
    target_site: str
    timestamp_ms: int
    kind: EventKind


@dataclass(frozen=True)
class TrainingSample:
    source: AuthorSitePair
    candidate: AuthorSitePair
    label: int
    timestamp_ms: int
    initiation_index: int


def extract_initiations(log: EventLog) -> list:
    """First interaction of each author with each site they do not author.

    A (user, site) pair yields an initiation only if its very first
    reaction/comment/guestbook happens while the user is already an author
    somewhere and not yet an author of that site.
    """
    first_update = {}
    site_author_since = {}
    seen = set()
    out = []
    for r in log.records:
        t = r.timestamp_ms
        if r.kind is EventKind.JOURNAL_UPDATE:
            first_update.setdefault(r.actor, t)
            site_author_since.setdefault((r.actor, r.site), t)
        elif r.kind in INTERACTION_KINDS:
            key = (r.actor, r.site)
            if key in seen:
                continue
            seen.add(key)
            if first_update.get(r.actor, t) < t and not site_author_since.get(key, t) < t:
                out.append(Initiation(r.actor, r.site, t, r.kind))
    return out


class InteractionGraph:
    """Directed author multigraph with a disjoint-set forest over its undirected edges.

    Nodes are integer codes; the node set grows on demand. Components are
    merged small-into-large with an explicit label array, so component
    membership and sizes are O(1) array lookups.
    """

    def __init__(self, n_nodes=0):
        self._label = np.arange(n_nodes, dtype=np.int64)
        self._size = np.ones(n_nodes, dtype=np.int64)
        self._members = {}
        self.indegree = np.zeros(n_nodes, dtype=np.int64)
        self.outdegree = np.zeros(n_nodes, dtype=np.int64)
        self.succ = {}
        self.pred = {}
        self.n_edges = 0

    def _grow(self, n):
        m = len(self._label)
        if n > m:
            self._label = np.concatenate([self._label, np.arange(m, n, dtype=np.int64)])
            self._size = np.concatenate([self._size, np.ones(n - m, dtype=np.int64)])
            self.indegree = np.concatenate([self.indegree, np.zeros(n - m, dtype=np.int64)])
            self.outdegree = np.concatenate([self.outdegree, np.zeros(n - m, dtype=np.int64)])

    @property
    def n_nodes(self):
        return len(self._label)

    def find(self, u):
        return int(self._label[u]) if u < len(self._label) else u

    def _union(self, u, v):
        ru, rv = int(self._label[u]), int(self._label[v])
        if ru == rv:
            return
        if self._size[ru] < self._size[rv]:
            ru, rv = rv, ru
        moved = self._members.pop(rv, [rv])
        self._label[moved] = ru
        self._members.setdefault(ru, [ru]).extend(moved)
        self._size[ru] += self._size[rv]

    def add_edge(self, u, v):
        self._grow(max(u, v) + 1)
        self.outdegree[u] += 1
        self.indegree[v] += 1
        self.succ.setdefault(u, set()).add(v)
        self.pred.setdefault(v, set()).add(u)
        self.n_edges += 1
        self._union(u, v)

    def component_size(self, u):
        return int(self._size[self._label[u]]) if u < len(self._label) else 1

    def neighbors(self, u):
        return self.succ.get(u, set()) | self.pred.get(u, set())

    def connected(self, u, v):
        return u == v or self.find(u) == self.find(v)

    def second_neighbors(self, u):
        out = set()
        for w in self.neighbors(u):
            out |= self.neighbors(w)
        out.discard(u)
        return out

    def dyadic(self, source, candidate):
        """(weakly_connected, friend_of_friend, prior_reciprocal) for one dyad."""
        wc = int(source != candidate and self.connected(source, candidate))
        fof = int(candidate in self.second_neighbors(source))
        recip = int(candidate in self.pred.get(source, ()))
        return wc, fof, recip

    def _labels_of(self, nodes):
        n = len(self._label)
        inside = nodes < n
        labels = nodes.copy()
        labels[inside] = self._label[nodes[inside]]
        return labels, inside

    def dyadic_block(self, source, candidates):
        candidates = np.asarray(candidates, dtype=np.int64)
        out = np.zeros((len(candidates), 3))
        if not self.n_edges or not len(candidates):
            return out
        labels, _ = self._labels_of(candidates)
        out[:, 0] = (labels == self.find(source)) & (candidates != source)
        n2 = self.second_neighbors(source)
        if n2:
            out[:, 1] = np.isin(candidates, np.fromiter(n2, dtype=np.int64, count=len(n2)))
        pred = self.pred.get(source)
        if pred:
            out[:, 2] = np.isin(candidates, np.fromiter(pred, dtype=np.int64, count=len(pred)))
        return out

    def network_block(self, nodes):
        """(indegree, outdegree, component size) per node."""
        nodes = np.asarray(nodes, dtype=np.int64)
        out = np.zeros((len(nodes), 3))
        labels, inside = self._labels_of(nodes)
        out[inside, 0] = self.indegree[nodes[inside]]
        out[inside, 1] = self.outdegree[nodes[inside]]
        out[:, 2] = 1
        out[inside, 2] = self._size[labels[inside]]
        return out


class InitiationTable:
    """Initiations coded against a :class:`LogIndex`, with their graph edges."""

    def __init__(self, index: LogIndex, initiations):
        self.index = index
        self.initiations = list(initiations)
        self.ts = np.asarray([i.timestamp_ms for i in self.initiations], dtype=np.int64)
        self.source = index.user_codes([i.source_author for i in self.initiations])
        self.target = index.site_codes([i.target_site for i in self.initiations])
        self.targets_authors = [index.site_authors(int(s), int(t)) for s, t in zip(self.target, self.ts)]
        order = np.argsort(self.target * (1 << 42) + self.ts, kind="stable")
        self._site_keys = (self.target * (1 << 42) + self.ts)[order]

    def __len__(self):
        return len(self.initiations)

    def received_between(self, sites, lo_ts, hi_ts):
        """Initiations received per site with lo_ts < ts < hi_ts."""
        sites = np.asarray(sites, dtype=np.int64)
        base = sites * (1 << 42)
        start = np.searchsorted(self._site_keys, base + np.maximum(lo_ts, -1), side="right")
        stop = np.searchsorted(self._site_keys, base + hi_ts, side="left")
        return np.maximum(stop - start, 0)

    def last_received_before(self, sites, t):
        sites = np.asarray(sites, dtype=np.int64)
        base = sites * (1 << 42)
        start = np.searchsorted(self._site_keys, base, side="left")
        stop = np.searchsorted(self._site_keys, base + t, side="left")
        out = np.full(sites.shape, -1, dtype=np.int64)
        has = stop > start
        out[has] = self._site_keys[stop[has] - 1] - base[has]
        return out


class TemporalGraph:
    """Replays initiation edges in time order; ``graph`` reflects edges strictly before ``t``."""

    def __init__(self, table: InitiationTable):
        self.table = table
        self.graph = InteractionGraph(len(table.index.users))
        self._order = np.argsort(table.ts, kind="stable")
        self._next = 0
        self.t = -1

    def advance_to(self, t):
        if t < self.t:
            raise ValueError(f"graph cannot move backwards in time ({t} < {self.t})")
        order, ts = self._order, self.table.ts
        while self._next < len(order) and ts[order[self._next]] < t:
            k = int(order[self._next])
            src = int(self.table.source[k])
            for b in self.table.targets_authors[k]:
                self.graph.add_edge(src, b)
            self._next += 1
        self.t = t
        return self.graph


def graph_at(table: InitiationTable, t) -> InteractionGraph:
    return TemporalGraph(table).advance_to(t)


class CandidatePool:
    """Candidate author/site pairs for a recommendation-seeking author at ``t``.

    The eligible-and-active pool is shared across sources at the same ``t``
    and cached; per-source exclusions are applied on top.
    """

    def __init__(self, index: LogIndex):
        self.index = index
        self._t = None
        self._pool = None

    def pool(self, t):
        if self._t != t:
            ix = self.index
            elig = np.flatnonzero(ix.eligible_pairs_mask(t))
            active = ix.is_active(ix.pair_author[elig], t)
            self._pool = elig[active]
            self._t = t
        return self._pool

    def for_source(self, author, t, exclude_sites=()):
        ix = self.index
        pool = self.pool(t)
        excluded = ix.authored_sites(author, t) | ix.interacted_sites(author, t) | set(exclude_sites)
        keep = ix.pair_author[pool] != author
        if excluded:
            keep &= ~np.isin(ix.pair_site[pool], np.fromiter(excluded, dtype=np.int64))
        return pool[keep]


# -- string-id convenience API -----------------------------------------------

def is_eligible(index: LogIndex, pair: AuthorSitePair, t) -> bool:
    a, s = index.user_idx.get(pair.author), index.site_idx.get(pair.site)
    if a is None or s is None:
        return False
    return any(int(index.pair_site[i]) == s for i in index.eligible_pairs_of_author(a, t))


def is_active(index: LogIndex, author: str, t) -> bool:
    a = index.user_idx.get(author)
    if a is None:
        return False
    return bool(index.is_active(np.asarray([a]), t)[0])


def pair_of(index: LogIndex, i) -> AuthorSitePair:
    return AuthorSitePair(index.users[int(index.pair_author[i])], index.sites[int(index.pair_site[i])])


def candidate_pairs(index: LogIndex, source_author: str, t, pool: Optional[CandidatePool] = None) -> list:
    pool = pool or CandidatePool(index)
    a = index.user_idx.get(source_author, -1)
    return [pair_of(index, i) for i in pool.for_source(a, t)]


def dyadic_features(graph: InteractionGraph, index: LogIndex, source_author, candidate_author):
    return graph.dyadic(index.user_idx[source_author], index.user_idx[candidate_author])


# -- training samples ----------------------------------------------------------

@dataclass
class SampleSet:
    samples: list
    seed: int
    n_skipped_ineligible: int = 0
    n_missing_negative: int = 0
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self):
        return np.asarray([s.label for s in self.samples], dtype=np.int64)

    @property
    def groups(self):
        return np.asarray([s.initiation_index for s in self.samples], dtype=np.int64)


def build_training_samples(initiations, index: LogIndex, seed, pool: Optional[CandidatePool] = None) -> SampleSet:
    """Positive cross product per initiation plus one uniform negative per positive.

    The negative shares the positive's source pair and is drawn from the
    source's candidates at the same instant, excluding the target site.
    """
    ts = [i.timestamp_ms for i in initiations]
    if any(a > b for a, b in zip(ts, ts[1:])):
        raise ValueError("initiations must be time-ordered")
    pool = pool or CandidatePool(index)
    out = SampleSet([], seed=seed)
    for k, init in enumerate(initiations):
        t = init.timestamp_ms
        a = index.user_idx[init.source_author]
        s = index.site_idx[init.target_site]
        src = index.eligible_pairs_of_author(a, t)
        tgt = index.eligible_pairs_of_site(s, t)
        if not src or not tgt:
            out.n_skipped_ineligible += 1
            continue
        cands = pool.for_source(a, t, exclude_sites=(s,))
        rng = np.random.default_rng([seed, k])
        for sp, tp in itertools.product(src, tgt):
            source = pair_of(index, sp)
            out.samples.append(TrainingSample(source, pair_of(index, tp), 1, t, k))
            if len(cands) == 0:
                out.n_missing_negative += 1
                continue
            neg = cands[rng.integers(len(cands))]
            out.samples.append(TrainingSample(source, pair_of(index, neg), 0, t, k))
    if out.n_missing_negative:
        logger.warning("%d positive(s) had no candidate for a negative", out.n_missing_negative)
    return out


def log_digest(log: EventLog) -> str:
    h = hashlib.sha256()
    for r in log.records:
        h.update(r.to_json().encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def write_samples(path, sample_set: SampleSet, log_hash: str) -> None:
    header = {
        "format": "peerrec-samples",
        "version": 1,
        "seed": sample_set.seed,
        "log_sha256": log_hash,
        "params": sample_set.params,
        "n_samples": len(sample_set),
        "n_skipped_ineligible": sample_set.n_skipped_ineligible,
        "n_missing_negative": sample_set.n_missing_negative,
    }
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in sample_set.samples:
            row = {
                "src": [s.source.author, s.source.site],
                "cand": [s.candidate.author, s.candidate.site],
                "label": s.label,
                "ts": s.timestamp_ms,
                "init": s.initiation_index,
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    os.replace(tmp, path)


def read_samples(path):
    """Returns (header, SampleSet)."""
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "peerrec-samples":
            raise ValueError(f"{path} is not a training-sample file")
        samples = []
        for line in fh:
            row = json.loads(line)
            samples.append(TrainingSample(
                AuthorSitePair(*row["src"]), AuthorSitePair(*row["cand"]),
                row["label"], row["ts"], row["init"]))
    ss = SampleSet(samples, seed=header["seed"], n_skipped_ineligible=header["n_skipped_ineligible"],
                   n_missing_negative=header["n_missing_negative"], params=header.get("params", {}))
    return header, ss
