"""Pre-window covariates and post-window outcomes for author or site units."""
from __future__ import annotations

import logging
import math
from collections import defaultdict

import numpy as np

from .._hashing import stable_hash64
from ..events import INTERACTION_KINDS, EventKind, EventLog
from ..history import DAY_MS, WEEK_MS
from .panel import OutcomePanel

logger = logging.getLogger(__name__)

AUTHOR_COVARIATES = (
    "journal_updates",
    "first_visits_other",
    "repeat_visits_other",
    "unique_days_visiting_other",
    "interactions_other",
    "interactions_own",
    "self_sites_interacted",
    "log_tenure",
)

SITE_COVARIATES = (
    "journal_updates",
    "unique_author_visitors",
    "unique_authors_all_time",
    "first_visits_from_peers",
    "repeat_author_visitors",
    "unique_days_peer_visited",
    "interactions_from_peers",
    "initiations_received",
    "peer_interactions_by_authors",
    "self_site_interactions_by_authors",
    "initiations_by_authors",
    "log_tenure",
)

SCHEMAS = {"author": AUTHOR_COVARIATES, "site": SITE_COVARIATES}
OUTCOME_KINDS = ("journal_updates", "first_visits", "repeat_visits", "peer_interactions",
                 "peer_initiations", "self_interactions")


def coarsen_daily_visits(records):
    """Keep only the latest visit per (actor, site, day), like a daily snapshot."""
    last = {}
    for i, r in enumerate(records):
        if r.kind is EventKind.VISIT:
            last[(r.actor, r.site, r.timestamp_ms // DAY_MS)] = i
    keep = set(last.values())
    return [r for i, r in enumerate(records) if r.kind is not EventKind.VISIT or i in keep]


class _Series:
    """Per-unit sorted event times with an optional key per event (for distinct counts)."""

    def __init__(self):
        self._raw = defaultdict(list)
        self._arr = {}

    def add(self, unit, ts, key=0):
        self._raw[unit].append((ts, key))

    def freeze(self):
        for unit, rows in self._raw.items():
            rows.sort(key=lambda r: r[0])
            self._arr[unit] = (np.asarray([r[0] for r in rows], dtype=np.int64),
                               np.asarray([hash(r[1]) for r in rows], dtype=np.int64))
        self._raw = None
        return self

    def _slice(self, unit, lo, hi):
        ts, keys = self._arr.get(unit, (np.zeros(0, np.int64), np.zeros(0, np.int64)))
        a, b = np.searchsorted(ts, lo, side="left"), np.searchsorted(ts, hi, side="left")
        return keys[a:b]

    def count(self, unit, lo, hi):
        """Events with lo <= ts < hi."""
        return len(self._slice(unit, lo, hi))

    def distinct(self, unit, lo, hi):
        return len(np.unique(self._slice(unit, lo, hi)))


class ActionIndex:
    """Annotated action series for author and site units of a log.

    A *peer* action on a site is one by a user who already authors some
    site but does not author that one.
    """

    def __init__(self, log: EventLog, coarsen_visits=False):
        records = coarsen_daily_visits(log.records) if coarsen_visits else list(log.records)
        self.first_seen_user = {}
        self.first_seen_site = {}
        self.first_update = {}
        self.author_since = {}
        self.site_author_list = defaultdict(list)
        names = ("updates", "visit_first", "visit_repeat", "visit_days", "inter_other", "inter_own",
                 "own_sites", "init_made",
                 "s_updates", "s_visitor", "s_first", "s_repeat_visitor", "s_visit_days", "s_inter_peer",
                 "s_init_recv", "s_inter_self")
        self.series = {n: _Series() for n in names}
        S = self.series
        visited = set()
        interacted = set()
        for r in records:
            t, u, s = r.timestamp_ms, r.actor, r.site
            self.first_seen_user.setdefault(u, t)
            self.first_seen_site.setdefault(s, t)
            is_author = self.first_update.get(u, t) < t
            authors_here = self.author_since.get((u, s), t) < t
            peer = is_author and not authors_here
            if r.kind is EventKind.JOURNAL_UPDATE:
                self.first_update.setdefault(u, t)
                if (u, s) not in self.author_since:
                    self.author_since[(u, s)] = t
                    self.site_author_list[s].append((t, u))
                S["updates"].add(u, t)
                S["s_updates"].add(s, t)
            elif r.kind is EventKind.VISIT:
                first = (u, s) not in visited
                visited.add((u, s))
                if not authors_here:
                    S["visit_first" if first else "visit_repeat"].add(u, t)
                    S["visit_days"].add(u, t, t // DAY_MS)
                if peer:
                    S["s_visitor"].add(s, t, u)
                    S["s_visit_days"].add(s, t, t // DAY_MS)
                    if first:
                        S["s_first"].add(s, t)
                    else:
                        S["s_repeat_visitor"].add(s, t, u)
            elif r.kind in INTERACTION_KINDS:
                first = (u, s) not in interacted
                interacted.add((u, s))
                if authors_here:
                    S["inter_own"].add(u, t)
                    S["own_sites"].add(u, t, s)
                    S["s_inter_self"].add(s, t)
                else:
                    S["inter_other"].add(u, t)
                if peer:
                    S["s_inter_peer"].add(s, t)
                    if first:
                        S["init_made"].add(u, t)
                        S["s_init_recv"].add(s, t)
        for x in S.values():
            x.freeze()

    def site_authors(self, site, t):
        return [u for since, u in self.site_author_list.get(site, ()) if since < t]

    def knows(self, unit, schema):
        return unit in (self.first_seen_user if schema == "author" else self.first_seen_site)

    def tenure_log_days(self, unit, t, schema):
        """log(1 + days since the first update by the author / on the site)."""
        if schema == "author":
            first = self.first_update.get(unit, self.first_seen_user.get(unit))
        else:
            lst = self.site_author_list.get(unit)
            first = lst[0][0] if lst else self.first_seen_site.get(unit)
        if first is None:
            first = t
        return math.log1p(max(t - first, 0) / DAY_MS)

    # -- per-unit values ---------------------------------------------------------

    def author_covariates(self, u, lo, hi):
        S = self.series
        return [
            S["updates"].count(u, lo, hi),
            S["visit_first"].count(u, lo, hi),
            S["visit_repeat"].count(u, lo, hi),
            S["visit_days"].distinct(u, lo, hi),
            S["inter_other"].count(u, lo, hi),
            S["inter_own"].count(u, lo, hi),
            S["own_sites"].distinct(u, lo, hi),
            self.tenure_log_days(u, hi, "author"),
        ]

    def site_covariates(self, s, lo, hi):
        S = self.series
        authors = self.site_authors(s, hi)
        by_authors = lambda name: sum(S[name].count(a, lo, hi) for a in authors)  # noqa: E731
        return [
            S["s_updates"].count(s, lo, hi),
            S["s_visitor"].distinct(s, lo, hi),
            len(authors),
            S["s_first"].count(s, lo, hi),
            S["s_repeat_visitor"].distinct(s, lo, hi),
            S["s_visit_days"].distinct(s, lo, hi),
            S["s_inter_peer"].count(s, lo, hi),
            S["s_init_recv"].count(s, lo, hi),
            by_authors("inter_other"),
            by_authors("inter_own"),
            by_authors("init_made"),
            self.tenure_log_days(s, hi, "site"),
        ]

    def outcome(self, unit, kind, lo, hi, schema):
        S = self.series
        if schema == "author":
            name = {"journal_updates": "updates", "first_visits": "visit_first", "repeat_visits": "visit_repeat",
                    "peer_interactions": "inter_other", "peer_initiations": "init_made",
                    "self_interactions": "inter_own"}[kind]
        else:
            name = {"journal_updates": "s_updates", "first_visits": "s_first", "repeat_visits": "s_repeat_visits",
                    "peer_interactions": "s_inter_peer", "peer_initiations": "s_init_recv",
                    "self_interactions": "s_inter_self"}[kind]
            if name == "s_repeat_visits":
                return float(S["s_repeat_visitor"].count(unit, lo, hi))
        return float(S[name].count(unit, lo, hi))


def fabricate_event_times(controls, event_time, treated, batches=None, seed=0):
    """Assign each control without an event time one drawn from treated units of its batch."""
    batches = batches or {}
    pools = defaultdict(list)
    for u in treated:
        if event_time.get(u) is not None:
            pools[batches.get(u)].append(int(event_time[u]))
    everything = sorted(t for p in pools.values() for t in p)
    out = {}
    for u in controls:
        if event_time.get(u) is not None:
            out[u] = int(event_time[u])
            continue
        pool = sorted(pools.get(batches.get(u), ())) or everything
        if not pool:
            raise ValueError("no treated event times to sample from")
        rng = np.random.default_rng([int(seed), stable_hash64(str(u))])
        out[u] = pool[int(rng.integers(len(pool)))]
    return out


def build_outcome_panel(log, treated, controls, event_time: dict, pre_weeks=5.0, post_weeks=13.0,
                        outcome="journal_updates", schema="author", batches=None, seed=0,
                        coarsen_visits=False, index: ActionIndex | None = None) -> OutcomePanel:
    """Covariates over [e - pre, e), outcome over [e, e + post) for each unit's event time e.

    Controls with no event time get one sampled from treated units in the same
    batch (``batches`` maps unit -> batch). Units absent from the log are
    dropped and counted in ``meta['excluded_no_events']``.
    """
    if pre_weeks <= 0 or post_weeks <= 0:
        raise ValueError("window lengths must be positive")
    if schema not in SCHEMAS:
        raise ValueError(f"schema must be one of {sorted(SCHEMAS)}")
    if outcome not in OUTCOME_KINDS:
        raise ValueError(f"outcome must be one of {OUTCOME_KINDS}")
    treated, controls = list(treated), list(controls)
    overlap = set(treated) & set(controls)
    if overlap:
        raise ValueError(f"units in both groups: {sorted(overlap)[:5]}")
    missing = [u for u in treated if event_time.get(u) is None]
    if missing:
        raise ValueError(f"treated units without an event time: {missing[:5]}")
    ix = index or ActionIndex(log, coarsen_visits=coarsen_visits)
    times = {u: int(event_time[u]) for u in treated}
    times.update(fabricate_event_times(controls, event_time, treated, batches, seed))
    pre, post = int(round(pre_weeks * WEEK_MS)), int(round(post_weeks * WEEK_MS))
    units, T, A, Y = [], [], [], []
    excluded = 0
    cov_fn = ix.author_covariates if schema == "author" else ix.site_covariates
    for group, flag in ((treated, 1), (controls, 0)):
        for u in group:
            if not ix.knows(u, schema):
                excluded += 1
                continue
            e = times[u]
            units.append(u)
            T.append(flag)
            A.append(cov_fn(u, e - pre, e))
            Y.append(ix.outcome(u, outcome, e, e + post, schema))
    if excluded:
        logger.info("%d unit(s) without any events excluded", excluded)
    return OutcomePanel(units, np.asarray(T, float), np.asarray(A, float).reshape(len(T), len(SCHEMAS[schema])),
                        np.asarray(Y, float), list(SCHEMAS[schema]), pre_weeks, post_weeks,
                        meta={"excluded_no_events": excluded, "outcome": outcome, "schema": schema,
                              "coarsen_visits": bool(coarsen_visits), "seed": int(seed)})
