"""Site rankings from pair scores, capped draft assignment, and email rendering."""
from __future__ import annotations

import csv
import html
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
from urllib.parse import urlencode

import numpy as np

from ._hashing import combine, hash_ids, seed_word, stable_hash64, to_unit

logger = logging.getLogger(__name__)

PREVIEW_CHARS = 500


def site_scores(scores, candidate_sites):
    """Mean over source pairs, then max over each site's author pairs.

    Returns (sites, scores) with sites in first-appearance order.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[None, :]
    pair = scores.mean(axis=0)
    candidate_sites = np.asarray(candidate_sites)
    uniq, first, inverse = np.unique(candidate_sites, return_index=True, return_inverse=True)
    best = np.full(len(uniq), -np.inf)
    np.maximum.at(best, inverse, pair)
    order = np.argsort(first, kind="stable")
    return uniq[order], best[order]


def tie_break_keys(sites, seed):
    return to_unit(combine(seed_word(seed), hash_ids([str(s) for s in sites])))


def merge_pair_scores_to_sites(scores, candidate_sites, seed=0):
    """Ranked [(site, score)] best first; exact ties ordered by a keyed hash of (seed, site)."""
    sites, best = site_scores(scores, candidate_sites)
    keys = tie_break_keys(sites, seed)
    order = np.lexsort((keys, -best))
    return [(sites[i].item() if hasattr(sites[i], "item") else sites[i], float(best[i])) for i in order]


@dataclass
class BatchConfig:
    k: int = 5
    cap: int = 10
    rounds: int = 5
    batch_id: str = "batch-1"
    seed: int = 0
    blocklist: frozenset = frozenset()
    site_url: str = "https://example.org/site/{site}/journal"
    feedback_url: str = "https://example.org/feedback"
    faq_url: str = "https://example.org/faq"
    unsubscribe_url: str = "https://example.org/unsubscribe"

    def __post_init__(self):
        self.blocklist = frozenset(self.blocklist)
        if self.rounds != self.k:
            raise ValueError("rounds must equal k")
        if self.cap < 1 or self.k < 1:
            raise ValueError("cap and k must be >= 1")


@dataclass
class RecommendationSet:
    participant: str
    sites: list = field(default_factory=list)  # (site, score, model_rank)
    incomplete: bool = False

    @property
    def site_ids(self):
        return [s for s, _, _ in self.sites]


def draft_assign(ranked: dict, cfg: BatchConfig, exclude: Optional[dict] = None) -> dict:
    """Five-round draft with a per-site cap.

    Each round visits participants in a fresh seeded random order; each picks
    their best-ranked site not yet in their set, not excluded, and assigned
    fewer than ``cap`` times in this batch. ``ranked`` maps participant ->
    [(site, score)] best first; ``exclude`` maps participant -> sites.
    """
    exclude = exclude or {}
    participants = sorted(ranked)
    counts: dict = {}
    sets = {p: RecommendationSet(p) for p in participants}
    cursor = {p: 0 for p in participants}
    chosen = {p: set() for p in participants}
    rng = np.random.default_rng([int(cfg.seed), stable_hash64(cfg.batch_id)])
    for _ in range(cfg.rounds):
        for i in rng.permutation(len(participants)).tolist():
            p = participants[i]
            lst = ranked[p]
            ex = exclude.get(p, ())
            j = cursor[p]
            while j < len(lst):
                site, score = lst[j]
                if site not in chosen[p] and site not in cfg.blocklist and site not in ex \
                        and counts.get(site, 0) < cfg.cap:
                    break
                j += 1
            if j >= len(lst):
                sets[p].incomplete = True
                continue
            site, score = lst[j]
            sets[p].sites.append((site, score, j + 1))
            chosen[p].add(site)
            counts[site] = counts.get(site, 0) + 1
            # everything before j is chosen, blocked, excluded or capped for good
            cursor[p] = j + 1
    for s in sets.values():
        if s.incomplete:
            logger.warning("participant %s received only %d recommendation(s)", s.participant, len(s.sites))
    return sets


def build_pseudo_control_sets(ranked_by_batch: dict, assignments_by_batch: dict, k=5) -> dict:
    """Top-k never-recommended sites per (batch, participant).

    Returns {batch: {participant: RecommendationSet}}; sets shorter than k are
    flagged ``incomplete``.
    """
    ever = set()
    for sets in assignments_by_batch.values():
        for rs in sets.values():
            ever.update(rs.site_ids)
    out = {}
    for batch, ranked in ranked_by_batch.items():
        out[batch] = {}
        for p, lst in ranked.items():
            rs = RecommendationSet(p)
            for j, (site, score) in enumerate(lst):
                if site not in ever:
                    rs.sites.append((site, score, j + 1))
                    if len(rs.sites) == k:
                        break
            rs.incomplete = len(rs.sites) < k
            out[batch][p] = rs
    return out


# -- rendering -------------------------------------------------------------------

@dataclass(frozen=True)
class SiteMetadata:
    title: str
    latest_update: str = ""


@dataclass
class EmailDocument:
    participant: str
    batch_id: str
    html: str
    text: str
    links: list
    manifest_rows: list


def tracked_url(site, cfg: BatchConfig, participant):
    params = {
        "utm_source": "rec-engine",
        "utm_medium": "email",
        "utm_campaign": cfg.batch_id,
        "utm_term": participant,
        "utm_content": site,
    }
    base = cfg.site_url.format(site=site)
    sep = "&" if "?" in base else "?"
    return base + sep + urlencode(params)


def truncate_preview(text, limit=PREVIEW_CHARS):
    text = " ".join((text or "").split())
    if len(text) <= limit:
        return text
    cut = text[:limit]
    if " " in cut and not text[limit].isspace():
        cut = cut[: cut.rfind(" ")]
    return cut.rstrip() + "…"


def render_email(rs: RecommendationSet, metadata: dict, cfg: BatchConfig) -> EmailDocument:
    missing = [s for s in rs.site_ids if s not in metadata]
    if missing:
        raise KeyError(f"no site metadata for {', '.join(map(str, missing))}")
    links, bullets_html, bullets_text, rows = [], [], [], []
    for slot, (site, score, rank) in enumerate(rs.sites, start=1):
        meta = metadata[site]
        url = tracked_url(site, cfg, rs.participant)
        links.append(url)
        preview = truncate_preview(meta.latest_update)
        block = [f'<li class="rec"><a href="{html.escape(url, quote=True)}">{html.escape(meta.title)}</a>']
        text = [f"* {meta.title}", f"  {url}"]
        if preview:
            block.append(f"<p>{html.escape(preview)}</p>")
            text.append(f"  {preview}")
        block.append("</li>")
        bullets_html.append("".join(block))
        bullets_text.append("\n".join(text))
        rows.append({"participant": rs.participant, "batch": cfg.batch_id, "slot": slot,
                     "site": site, "score": repr(float(score)), "model_rank": rank})
    footer_html = (f'<p class="footer"><a href="{html.escape(cfg.feedback_url)}">Feedback</a> | '
                   f'<a href="{html.escape(cfg.faq_url)}">FAQ</a> | '
                   f'<a href="{html.escape(cfg.unsubscribe_url)}">Unsubscribe</a></p>')
    body_html = ("<html><body><h1>Site Suggestions</h1><p>Here are some sites you might like to visit:</p>"
                 f"<ul>{''.join(bullets_html)}</ul>{footer_html}</body></html>\n")
    body_text = ("Site Suggestions\n\nHere are some sites you might like to visit:\n\n"
                 + "\n\n".join(bullets_text)
                 + f"\n\nFeedback: {cfg.feedback_url}\nFAQ: {cfg.faq_url}\nUnsubscribe: {cfg.unsubscribe_url}\n")
    return EmailDocument(rs.participant, cfg.batch_id, body_html, body_text, links, rows)


MANIFEST_FIELDS = ("participant", "batch", "slot", "site", "score", "model_rank")


def _safe_name(s):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in str(s))


def write_batch(out_dir, sets: dict, metadata: dict, cfg: BatchConfig, previously_recommended=(),
                pseudo_control: Optional[dict] = None) -> Path:
    """Email files, manifest.csv, review.txt and pseudo_control.csv for one batch."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in sorted(sets):
        doc = render_email(sets[p], metadata, cfg)
        (out / f"{_safe_name(p)}.html").write_text(doc.html, encoding="utf-8")
        (out / f"{_safe_name(p)}.txt").write_text(doc.text, encoding="utf-8")
        rows.extend(doc.manifest_rows)
    with open(out / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    prev = set(previously_recommended)
    new_sites = sorted({r["site"] for r in rows} - prev)
    with open(out / "review.txt", "w", encoding="utf-8") as fh:
        for s in new_sites:
            fh.write(f"{s}\t{metadata[s].title}\n")
    with open(out / "pseudo_control.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant", "batch", "slot", "site", "score", "model_rank"])
        for p in sorted(pseudo_control or {}):
            for slot, (site, score, rank) in enumerate(pseudo_control[p].sites, start=1):
                w.writerow([p, cfg.batch_id, slot, site, repr(float(score)), rank])
    return out


def read_manifest(path) -> dict:
    """participant -> RecommendationSet from a manifest.csv."""
    sets = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rs = sets.setdefault(row["participant"], RecommendationSet(row["participant"]))
            rs.sites.append((row["site"], float(row["score"]), int(row["model_rank"])))
    return sets
