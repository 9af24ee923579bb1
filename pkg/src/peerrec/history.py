"""Columnar, vectorized view of an event log for point-in-time queries.

Every query at time ``t`` only sees records with ``timestamp_ms < t``.
Per-entity event times are stored as sorted composite keys
``entity * SPAN + ts`` so that a batch of entities can be answered with two
``searchsorted`` calls.
"""
from __future__ import annotations

import numpy as np

from ._hashing import hash_ids
from .events import ACTIVITY_KINDS, INTERACTION_KINDS, EventKind, EventLog

SPAN = 1 << 42
HOUR_MS = 3_600_000
DAY_MS = 24 * HOUR_MS
WEEK_MS = 7 * DAY_MS
NEVER = np.iinfo(np.int64).max

KIND_CODES = {k: i for i, k in enumerate(EventKind)}


class _KeyedTimes:
    """Sorted ``entity * SPAN + ts`` keys with parallel payload rows."""

    def __init__(self, entity, ts, rows=None):
        keys = entity.astype(np.int64) * SPAN + ts.astype(np.int64)
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.rows = None if rows is None else np.asarray(rows)[order]

    def bounds(self, entity, lo_ts, hi_ts):
        """Index range of keys with lo_ts < ts < hi_ts for each entity."""
        entity = np.asarray(entity, dtype=np.int64)
        base = entity * SPAN
        lo = np.maximum(np.asarray(lo_ts, dtype=np.int64), -1)
        hi = np.minimum(np.asarray(hi_ts, dtype=np.int64), SPAN)
        start = np.searchsorted(self.keys, base + lo, side="right")
        stop = np.searchsorted(self.keys, base + hi, side="left")
        return start, np.maximum(stop, start)

    def count_between(self, entity, lo_ts, hi_ts):
        start, stop = self.bounds(entity, lo_ts, hi_ts)
        return stop - start

    def last_before(self, entity, t):
        """Latest ts strictly before t per entity, -1 where none."""
        entity = np.asarray(entity, dtype=np.int64)
        start, stop = self.bounds(entity, -1, t)
        out = np.full(entity.shape, -1, dtype=np.int64)
        has = stop > start
        out[has] = self.keys[stop[has] - 1] - entity[has] * SPAN
        return out

    def first_before(self, entity, t):
        entity = np.asarray(entity, dtype=np.int64)
        start, stop = self.bounds(entity, -1, t)
        out = np.full(entity.shape, -1, dtype=np.int64)
        has = stop > start
        out[has] = self.keys[start[has]] - entity[has] * SPAN
        return out


class LogIndex:
    """Integer-coded arrays over an :class:`EventLog`.

    Users and sites are coded by their sorted string order, which keeps every
    derived ordering independent of record arrival order.
    """

    def __init__(self, log: EventLog):
        self.log = log
        recs = log.records
        self.users = sorted({r.actor for r in recs})
        self.sites = sorted({r.site for r in recs})
        self.user_idx = {u: i for i, u in enumerate(self.users)}
        self.site_idx = {s: i for i, s in enumerate(self.sites)}
        n = len(recs)
        self.ts = np.fromiter((r.timestamp_ms for r in recs), dtype=np.int64, count=n)
        if n and int(self.ts.max()) >= SPAN - 1:
            raise ValueError("timestamps beyond the supported range")
        self.kind = np.fromiter((KIND_CODES[r.kind] for r in recs), dtype=np.int8, count=n)
        self.actor = np.fromiter((self.user_idx[r.actor] for r in recs), dtype=np.int64, count=n)
        self.site = np.fromiter((self.site_idx[r.site] for r in recs), dtype=np.int64, count=n)
        rows = np.arange(n)

        self.by_actor = {}
        for k in (EventKind.JOURNAL_UPDATE, EventKind.REACTION, EventKind.COMMENT, EventKind.GUESTBOOK, EventKind.VISIT):
            m = self.kind == KIND_CODES[k]
            self.by_actor[k] = _KeyedTimes(self.actor[m], self.ts[m], rows[m])
        act = np.isin(self.kind, [KIND_CODES[k] for k in ACTIVITY_KINDS])
        self.activity = _KeyedTimes(self.actor[act], self.ts[act])

        upd = self.kind == KIND_CODES[EventKind.JOURNAL_UPDATE]
        self.site_updates = _KeyedTimes(self.site[upd], self.ts[upd], rows[upd])
        inter = np.isin(self.kind, [KIND_CODES[k] for k in INTERACTION_KINDS])
        self.site_interactions = _KeyedTimes(self.site[inter], self.ts[inter], rows[inter])

        self.author_first_update = np.full(len(self.users), NEVER, dtype=np.int64)
        if upd.any():
            np.minimum.at(self.author_first_update, self.actor[upd], self.ts[upd])
        self.site_first_update = np.full(len(self.sites), NEVER, dtype=np.int64)
        if upd.any():
            np.minimum.at(self.site_first_update, self.site[upd], self.ts[upd])

        # author/site pairs, ordered by (site, author) code
        p_author, p_site, p_first, p_elig = [], [], [], []
        for site, entries in log.authorship.items():
            for e in entries:
                p_author.append(self.user_idx[e.author])
                p_site.append(self.site_idx[site])
                p_first.append(e.update_timestamps[0])
                p_elig.append(e.update_timestamps[2] if len(e.update_timestamps) >= 3 else NEVER)
        order = np.lexsort((np.asarray(p_author, dtype=np.int64), np.asarray(p_site, dtype=np.int64)))
        self.pair_author = np.asarray(p_author, dtype=np.int64)[order]
        self.pair_site = np.asarray(p_site, dtype=np.int64)[order]
        self.pair_first_ts = np.asarray(p_first, dtype=np.int64)[order]
        self.pair_eligible_ts = np.asarray(p_elig, dtype=np.int64)[order]
        self._pairs_of_author = {}
        self._pairs_of_site = {}
        self.pair_code = {}
        for i, (a, s) in enumerate(zip(self.pair_author.tolist(), self.pair_site.tolist())):
            self._pairs_of_author.setdefault(a, []).append(i)
            self._pairs_of_site.setdefault(s, []).append(i)
            self.pair_code[(a, s)] = i
        self._id_hashes = None

        # first reaction/comment/guestbook by each user on each site
        self.first_interaction = {}
        for i in np.flatnonzero(inter).tolist():
            key = (int(self.actor[i]), int(self.site[i]))
            if key not in self.first_interaction:
                self.first_interaction[key] = int(self.ts[i])
        self._interacted = {}
        for (a, s), t0 in self.first_interaction.items():
            self._interacted.setdefault(a, {})[s] = t0

    # -- entity helpers ---------------------------------------------------
    @property
    def id_hashes(self):
        """Stable 64-bit hashes of user and site ids (users, sites)."""
        if self._id_hashes is None:
            self._id_hashes = (hash_ids(self.users), hash_ids(self.sites))
        return self._id_hashes

    def code_of_pair(self, pair):
        try:
            return self.pair_code[(self.user_idx[pair.author], self.site_idx[pair.site])]
        except KeyError:
            raise KeyError(f"{pair} is not an author/site pair in this log") from None

    def user_codes(self, users):
        return np.asarray([self.user_idx[u] for u in users], dtype=np.int64)

    def site_codes(self, sites):
        return np.asarray([self.site_idx[s] for s in sites], dtype=np.int64)

    def pairs_of_author(self, a):
        return self._pairs_of_author.get(a, [])

    def pairs_of_site(self, s):
        return self._pairs_of_site.get(s, [])

    # -- point-in-time queries ---------------------------------------------
    def eligible_pairs_mask(self, t):
        return self.pair_eligible_ts < t

    def eligible_pairs_of_author(self, a, t):
        return [i for i in self.pairs_of_author(a) if self.pair_eligible_ts[i] < t]

    def eligible_pairs_of_site(self, s, t):
        return [i for i in self.pairs_of_site(s) if self.pair_eligible_ts[i] < t]

    def is_active(self, authors, t):
        return self.activity.last_before(authors, t) > t - WEEK_MS

    def authored_sites(self, a, t):
        return {int(self.pair_site[i]) for i in self.pairs_of_author(a) if self.pair_first_ts[i] < t}

    def site_authors(self, s, t):
        return [int(self.pair_author[i]) for i in self.pairs_of_site(s) if self.pair_first_ts[i] < t]

    def interacted_sites(self, a, t):
        return {s for s, t0 in self._interacted.get(a, {}).items() if t0 < t}

    def is_author(self, a, t):
        return self.author_first_update[a] < t

    def recent_update_rows(self, site, t, k=3):
        """Record indices of the last ``k`` updates on ``site`` before ``t``, oldest first."""
        start, stop = self.site_updates.bounds(np.asarray([site]), -1, t)
        lo = max(int(start[0]), int(stop[0]) - k)
        return self.site_updates.rows[lo:int(stop[0])].tolist()

    def site_update_count_before(self, sites, t):
        return self.site_updates.count_between(sites, -1, t)
