"""Seeded synthetic community logs with planted topical, popularity, and network structure."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .events import EventKind, EventLog, EventRecord
from .history import DAY_MS

EPOCH_MS = 1_600_000_000_000
N_COMMON_WORDS = 200

DEFAULT_RATES = {
    "journal_update": 0.10,
    "reaction": 0.08,
    "comment": 0.04,
    "guestbook": 0.02,
    "visit": 0.05,
    "follow": 0.002,
}


@dataclass
class SyntheticConfig:
    """Knobs for :func:`generate_synthetic_log`.

    ``base_rates`` are expected events per author per day. ``homophily`` in
    [0, 1] scales topical preference of interaction targets,
    ``popularity_skew`` the log-normal spread of site attractiveness, and
    ``reciprocity`` the extra weight on sites whose authors already reached
    the actor. ``repeat_rate`` and ``self_rate`` divert interactions to
    previously visited sites and to the actor's own sites.
    """

    n_authors: int = 200
    n_sites: int = 200
    horizon_days: float = 56.0
    base_rates: dict = field(default_factory=lambda: dict(DEFAULT_RATES))
    homophily: float = 0.5
    popularity_skew: float = 1.0
    reciprocity: float = 2.0
    repeat_rate: float = 0.3
    self_rate: float = 0.1
    co_author_rate: float = 0.05
    join_spread: float = 0.5
    n_topics: int = 8
    vocab_per_topic: int = 60
    words_per_update: int = 40
    seed: int = 0

    def validate(self):
        if self.n_authors < 1 or self.n_sites < 1:
            raise ValueError("n_authors and n_sites must be >= 1")
        if self.horizon_days <= 0:
            raise ValueError("horizon_days must be positive")
        unknown = set(self.base_rates) - {k.value for k in EventKind}
        if unknown:
            raise ValueError(f"unknown event kinds in base_rates: {sorted(unknown)}")
        if any(v < 0 for v in self.base_rates.values()):
            raise ValueError("rates must be >= 0")
        for name in ("homophily", "repeat_rate", "self_rate", "co_author_rate", "join_spread"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.popularity_skew < 0 or self.reciprocity < 0:
            raise ValueError("popularity_skew and reciprocity must be >= 0")
        if self.n_topics < 1 or self.vocab_per_topic < 1 or self.words_per_update < 1:
            raise ValueError("topic/vocabulary sizes must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown synthetic config keys: {sorted(unknown)}")
        d = dict(d)
        if "base_rates" in d:
            d["base_rates"] = {**DEFAULT_RATES, **d["base_rates"]}
        return cls(**d).validate()

    def to_dict(self):
        return asdict(self)


def _update_text(rng, topic_mix, cfg):
    n = cfg.words_per_update
    topical = rng.random(n) < 0.6
    topics = rng.choice(cfg.n_topics, size=n, p=topic_mix)
    words = []
    for is_topic, k in zip(topical.tolist(), topics.tolist()):
        if is_topic:
            words.append(f"t{k}w{int(rng.integers(cfg.vocab_per_topic))}")
        else:
            words.append(f"w{int(rng.integers(N_COMMON_WORDS))}")
    return " ".join(words)


def generate_synthetic_log(cfg: SyntheticConfig) -> EventLog:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    na, ns = cfg.n_authors, cfg.n_sites
    horizon = int(cfg.horizon_days * DAY_MS)

    topic = rng.dirichlet(np.full(cfg.n_topics, 0.3), size=na)
    unit_topic = topic / np.linalg.norm(topic, axis=1, keepdims=True)
    engagement = rng.standard_normal(na)
    activity_mult = np.exp(0.4 * engagement)
    join = (rng.random(na) * cfg.join_spread * horizon).astype(np.int64)

    site_authors = [[s % na] for s in range(ns)]
    for s in range(ns):
        if na > 1 and rng.random() < cfg.co_author_rate:
            other = int(rng.integers(na - 1))
            site_authors[s].append(other if other < s % na else other + 1)
    authored = [[] for _ in range(na)]
    for s, authors in enumerate(site_authors):
        for a in authors:
            authored[a].append(s)
    primary = np.asarray([a[0] for a in site_authors])
    site_pop = np.exp(cfg.popularity_skew * engagement[primary])
    site_topic = unit_topic[primary]
    beta = 6.0 * cfg.homophily

    # skeleton: (time, author, kind code, own-site index or -1)
    kinds = list(EventKind)
    skeleton = []
    for a in range(na):
        span = horizon - join[a]
        for s in authored[a]:
            # each authored site opens with an update shortly after the author joins
            skeleton.append((int(join[a]) + int(rng.integers(DAY_MS)), a, 0, s))
        for code, kind in enumerate(kinds):
            lam = cfg.base_rates.get(kind.value, 0.0) * activity_mult[a] * span / DAY_MS
            n = int(rng.poisson(lam))
            times = join[a] + rng.integers(0, max(span, 1), size=n)
            for t in times.tolist():
                if kind is EventKind.JOURNAL_UPDATE:
                    if not authored[a]:
                        continue
                    skeleton.append((t, a, code, authored[a][int(rng.integers(len(authored[a])))]))
                else:
                    skeleton.append((t, a, code, -1))
    skeleton.sort(key=lambda e: (e[0], e[1], e[2], e[3]))

    first_update = np.full(ns, np.iinfo(np.int64).max, dtype=np.int64)
    touched = [dict() for _ in range(na)]   # actor -> {site: True}
    reached_by = [set() for _ in range(na)]  # actor -> sites whose authors interacted on actor's sites
    records = []
    n_updates = 0
    user = [f"u{a:05d}" for a in range(na)]
    site_name = [f"s{s:05d}" for s in range(ns)]

    for t, a, code, own in skeleton:
        kind = kinds[code]
        ts = EPOCH_MS + t
        if kind is EventKind.JOURNAL_UPDATE:
            text = _update_text(rng, topic[a], cfg)
            records.append(EventRecord(ts, kind, user[a], site_name[own], f"j{n_updates:07d}", text))
            n_updates += 1
            first_update[own] = min(first_update[own], t)
            continue
        available = first_update < t
        own_sites = [s for s in authored[a] if available[s]]
        target = -1
        if own_sites and rng.random() < cfg.self_rate:
            target = own_sites[int(rng.integers(len(own_sites)))]
        else:
            mask = available.copy()
            mask[authored[a]] = False
            prior = [s for s in touched[a] if mask[s]]
            if prior and rng.random() < cfg.repeat_rate:
                target = prior[int(rng.integers(len(prior)))]
            elif mask.any():
                w = site_pop * np.exp(beta * (site_topic @ unit_topic[a]))
                if reached_by[a] and cfg.reciprocity > 0:
                    boost = np.fromiter(reached_by[a], dtype=np.int64)
                    w[boost] *= 1.0 + cfg.reciprocity * 10.0
                w = np.where(mask, w, 0.0)
                c = np.cumsum(w)
                target = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
                target = min(target, ns - 1)
        if target < 0:
            continue
        records.append(EventRecord(ts, kind, user[a], site_name[target]))
        if kind in (EventKind.REACTION, EventKind.COMMENT, EventKind.GUESTBOOK):
            touched[a][target] = True
            if target not in authored[a]:
                for b in site_authors[target]:
                    if first_update[target] < t:
                        for s_own in authored[a]:
                            reached_by[b].add(s_own)
    return EventLog(records)


def load_synthetic_config(path) -> SyntheticConfig:
    with open(path, encoding="utf-8") as fh:
        return SyntheticConfig.from_dict(json.load(fh))
