"""Activity, network, and text features for author/site pairs at a point in time."""
from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import murmurhash3_32
from sklearn.utils.validation import check_array, check_is_fitted

from .events import EventKind
from .feedback import AuthorSitePair, InteractionGraph
from .history import HOUR_MS, WEEK_MS, LogIndex

MISSING_HOURS = 10_000.0
ACTIVITY_KINDS_ORDER = (EventKind.JOURNAL_UPDATE, EventKind.REACTION, EventKind.COMMENT, EventKind.GUESTBOOK)
N_ACTIVITY = 9
N_NETWORK = 3
N_DYADIC = 3
RECENT_UPDATES = 3

_TOKEN = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class ActivityFeatures:
    update_count: int
    update_hours: float
    reaction_count: int
    reaction_hours: float
    comment_count: int
    comment_hours: float
    guestbook_count: int
    guestbook_hours: float
    tenure_hours: float

    def as_array(self):
        return np.asarray([getattr(self, f) for f in self.__dataclass_fields__], dtype=float)


@dataclass(frozen=True)
class NetworkFeatures:
    indegree: int
    outdegree: int
    wcc_size: int


# -- embedders ---------------------------------------------------------------

class HashingEmbedder(BaseEstimator, TransformerMixin):
    """Signed feature hashing of word n-grams, L2-normalized per text.

    Stateless: ``fit`` only validates parameters.
    """

    def __init__(self, dim=768, ngram_range=(1, 2), seed=0):
        self.dim = dim
        self.ngram_range = ngram_range
        self.seed = seed

    def fit(self, X=None, y=None):
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")
        lo, hi = self.ngram_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad ngram_range {self.ngram_range}")
        self.n_features_out_ = int(self.dim)
        return self

    def _ngrams(self, text):
        tokens = _TOKEN.findall(text.lower())
        lo, hi = self.ngram_range
        for n in range(lo, hi + 1):
            for i in range(len(tokens) - n + 1):
                yield " ".join(tokens[i:i + n])

    def embed(self, text: Optional[str]):
        d = int(self.dim)
        vec = np.zeros(d)
        if not text:
            return vec
        grams = list(self._ngrams(text))
        if not grams:
            return vec
        h = np.fromiter((murmurhash3_32(g, seed=int(self.seed)) for g in grams), dtype=np.int64, count=len(grams))
        np.add.at(vec, np.abs(h) % d, np.where(h >= 0, 1.0, -1.0))
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def transform(self, X):
        return np.vstack([self.embed(t) for t in X]) if len(X) else np.zeros((0, int(self.dim)))

    def embed_update(self, index: LogIndex, row):
        return self.embed(index.log.records[row].text)


class PrecomputedEmbedder(BaseEstimator, TransformerMixin):
    """Lookup of externally computed update vectors keyed by ``content_ref``."""

    def __init__(self, table=None, dim=None):
        self.table = table
        self.dim = dim

    def fit(self, X=None, y=None):
        if not self.table:
            raise ValueError("embedding table is empty")
        dims = {len(v) for v in self.table.values()}
        if len(dims) != 1:
            raise ValueError("embedding table rows have inconsistent lengths")
        d = dims.pop()
        if self.dim is not None and d != self.dim:
            raise ValueError(f"table dim {d} != configured dim {self.dim}")
        self.dim = d
        self.n_features_out_ = d
        return self

    def lookup(self, content_ref):
        try:
            return np.asarray(self.table[content_ref], dtype=float)
        except KeyError:
            raise KeyError(f"no precomputed embedding for content_ref {content_ref!r}") from None

    def transform(self, X):
        return np.vstack([self.lookup(ref) for ref in X])

    def embed_update(self, index: LogIndex, row):
        return self.lookup(index.log.records[row].content_ref)

    @classmethod
    def from_file(cls, path):
        return cls(table=read_embedding_table(path)).fit()


_EMB_MAGIC = b"PRCEMB01"


def write_embedding_table(path, table: dict) -> None:
    dims = {len(v) for v in table.values()}
    if len(dims) > 1:
        raise ValueError("inconsistent vector lengths")
    dim = dims.pop() if dims else 0
    with open(path, "wb") as fh:
        fh.write(_EMB_MAGIC)
        fh.write(struct.pack("<II", dim, len(table)))
        for ref in sorted(table):
            key = ref.encode("utf-8")
            fh.write(struct.pack("<H", len(key)))
            fh.write(key)
            fh.write(np.asarray(table[ref], dtype="<f4").tobytes())


def read_embedding_table(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(len(_EMB_MAGIC))
        if head != _EMB_MAGIC:
            fh.seek(0)
            return _read_embedding_jsonl(fh)
        dim, count = struct.unpack("<II", fh.read(8))
        out = {}
        for _ in range(count):
            (n,) = struct.unpack("<H", fh.read(2))
            ref = fh.read(n).decode("utf-8")
            out[ref] = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(float)
        return out


def _read_embedding_jsonl(fh) -> dict:
    out = {}
    for line in fh:
        line = line.decode("utf-8").strip()
        if line:
            row = json.loads(line)
            out[row["content_ref"]] = np.asarray(row["vector"], dtype=float)
    return out


# -- layout ------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureConfig:
    """Embedding dimension plus which blocks (A)ctivity, (N)etwork, (T)ext are live."""

    dim: int = 768
    blocks: str = "ANT"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.blocks or set(self.blocks) - set("ANT"):
            raise ValueError(f"blocks must be a nonempty combination of A, N, T; got {self.blocks!r}")

    @property
    def side_width(self):
        return self.dim + N_ACTIVITY + N_NETWORK

    @property
    def n_features(self):
        return 2 * self.side_width + N_DYADIC

    def slices(self):
        d, w = self.dim, self.side_width
        return {
            "src_text": slice(0, d),
            "src_activity": slice(d, d + N_ACTIVITY),
            "src_network": slice(d + N_ACTIVITY, w),
            "cand_text": slice(w, w + d),
            "cand_activity": slice(w + d, w + d + N_ACTIVITY),
            "cand_network": slice(w + d + N_ACTIVITY, 2 * w),
            "dyadic": slice(2 * w, 2 * w + N_DYADIC),
        }

    def mask(self):
        """Boolean vector of live positions under the block selection."""
        m = np.zeros(self.n_features, dtype=bool)
        for name, sl in self.slices().items():
            block = {"text": "T", "activity": "A", "network": "N", "dyadic": "N"}[name.split("_")[-1]]
            m[sl] = block in self.blocks
        return m

    def raw_scale_columns(self):
        """Count/hour/degree columns that get standardized before scoring."""
        s = self.slices()
        cols = [np.arange(s[k].start, s[k].stop) for k in ("src_activity", "src_network", "cand_activity", "cand_network")]
        return np.concatenate(cols)


class ColumnStandardizer(BaseEstimator, TransformerMixin):
    """Z-scores selected columns with statistics learned in ``fit``."""

    def __init__(self, columns=None):
        self.columns = columns

    def fit(self, X, y=None):
        X = check_array(X)
        cols = np.arange(X.shape[1]) if self.columns is None else np.asarray(self.columns, dtype=np.int64)
        self.columns_ = cols
        self.mean_ = X[:, cols].mean(axis=0)
        std = X[:, cols].std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, copy=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        X[:, self.columns_] = (X[:, self.columns_] - self.mean_) / self.scale_
        return X


# -- point-in-time feature computation ----------------------------------------

class FeatureBuilder:
    """Computes feature blocks against a log index; caches text vectors."""

    def __init__(self, index: LogIndex, config: FeatureConfig = FeatureConfig(), embedder=None):
        self.index = index
        self.config = config
        if embedder is None:
            embedder = HashingEmbedder(dim=config.dim)
        embedder.fit()
        if embedder.n_features_out_ != config.dim:
            raise ValueError(f"embedder dim {embedder.n_features_out_} != feature dim {config.dim}")
        self.embedder = embedder
        self._update_vecs = {}
        self._site_vecs = {}
        self._mask = config.mask()

    def activity_block(self, authors, t):
        ix = self.index
        authors = np.asarray(authors, dtype=np.int64)
        out = np.empty((len(authors), N_ACTIVITY))
        for j, kind in enumerate(ACTIVITY_KINDS_ORDER):
            keyed = ix.by_actor[kind]
            out[:, 2 * j] = keyed.count_between(authors, t - WEEK_MS, t)
            last = keyed.last_before(authors, t)
            out[:, 2 * j + 1] = np.where(last >= 0, (t - last) / HOUR_MS, MISSING_HOURS)
        first = ix.author_first_update[authors]
        out[:, 8] = np.where(first < t, (t - np.minimum(first, t)) / HOUR_MS, MISSING_HOURS)
        return out

    def update_vector(self, row):
        vec = self._update_vecs.get(row)
        if vec is None:
            vec = self.embedder.embed_update(self.index, row)
            self._update_vecs[row] = vec
        return vec

    def _site_vector(self, site, n_before, t):
        key = (site, n_before)
        vec = self._site_vecs.get(key)
        if vec is None:
            rows = self.index.recent_update_rows(site, t, RECENT_UPDATES)
            if rows:
                vec = np.mean(np.stack([self.update_vector(r) for r in rows]), axis=0)
            else:
                vec = np.zeros(self.config.dim)
            self._site_vecs[key] = vec
        return vec

    def site_vector(self, site, t):
        """Mean of the per-update vectors of the last three updates before ``t``."""
        n = int(self.index.site_update_count_before(np.asarray([site]), t)[0])
        return self._site_vector(site, n, t)

    def text_block(self, sites, t):
        sites = np.asarray(sites, dtype=np.int64)
        if not len(sites):
            return np.zeros((0, self.config.dim))
        counts = self.index.site_update_count_before(sites, t)
        return np.stack([self._site_vector(s, n, t) for s, n in zip(sites.tolist(), counts.tolist())])

    def side_block(self, pairs, graph: InteractionGraph, t):
        """[text | activity | network] rows for pair codes."""
        ix = self.index
        pairs = np.asarray(pairs, dtype=np.int64)
        authors = ix.pair_author[pairs]
        return np.hstack([
            self.text_block(ix.pair_site[pairs], t),
            self.activity_block(authors, t),
            graph.network_block(authors),
        ])

    def paired_matrix(self, source_pairs, candidate_pairs, graph: InteractionGraph, t):
        """Feature rows for aligned (source_pairs[i], candidate_pairs[i])."""
        ix = self.index
        source_pairs = np.asarray(source_pairs, dtype=np.int64)
        candidate_pairs = np.asarray(candidate_pairs, dtype=np.int64)
        src = self.side_block(source_pairs, graph, t)
        cand = self.side_block(candidate_pairs, graph, t)
        dy = np.zeros((len(source_pairs), N_DYADIC))
        sa, ca = ix.pair_author[source_pairs], ix.pair_author[candidate_pairs]
        for a in np.unique(sa).tolist():
            rows = np.flatnonzero(sa == a)
            dy[rows] = graph.dyadic_block(a, ca[rows])
        X = np.hstack([src, cand, dy])
        if not self._mask.all():
            X[:, ~self._mask] = 0.0
        return X

    def matrix(self, source_pairs, candidate_pairs, graph: InteractionGraph, t):
        """Feature rows for every (source, candidate) combination, source-major."""
        ix = self.index
        source_pairs = np.asarray(source_pairs, dtype=np.int64)
        candidate_pairs = np.asarray(candidate_pairs, dtype=np.int64)
        ns, nc = len(source_pairs), len(candidate_pairs)
        src = self.side_block(source_pairs, graph, t)
        cand = self.side_block(candidate_pairs, graph, t)
        cand_authors = ix.pair_author[candidate_pairs]
        dy = np.vstack([graph.dyadic_block(int(ix.pair_author[p]), cand_authors) for p in source_pairs]) \
            if ns else np.zeros((0, N_DYADIC))
        X = np.hstack([np.repeat(src, nc, axis=0), np.tile(cand, (ns, 1)), dy])
        if not self._mask.all():
            X[:, ~self._mask] = 0.0
        return X


# -- string-id convenience API ---------------------------------------------------

def activity_features(builder: FeatureBuilder, pair: AuthorSitePair, t) -> ActivityFeatures:
    a = builder.index.user_idx[pair.author]
    v = builder.activity_block([a], t)[0]
    vals = [int(x) if i % 2 == 0 and i < 8 else float(x) for i, x in enumerate(v)]
    return ActivityFeatures(*vals)


def network_features(graph: InteractionGraph, index: LogIndex, author) -> NetworkFeatures:
    v = graph.network_block([index.user_idx[author]])[0]
    return NetworkFeatures(*(int(x) for x in v))


def embed_site_text(builder: FeatureBuilder, site, t):
    return builder.site_vector(builder.index.site_idx[site], t).copy()


def assemble(builder: FeatureBuilder, source: AuthorSitePair, candidate: AuthorSitePair, graph, t):
    ix = builder.index
    return builder.matrix([ix.code_of_pair(source)], [ix.code_of_pair(candidate)], graph, t)[0]
