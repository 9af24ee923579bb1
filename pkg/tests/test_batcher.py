import csv
from urllib.parse import parse_qs, urlparse

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peerrec.batcher import (MANIFEST_FIELDS, PREVIEW_CHARS, BatchConfig, RecommendationSet, SiteMetadata,
                             build_pseudo_control_sets, draft_assign, merge_pair_scores_to_sites, read_manifest,
                             render_email, site_scores, tracked_url, truncate_preview, write_batch)


def shared_ranking(n_participants, n_sites=40):
    lst = [(f"s{j:02d}", 1.0 - j / n_sites) for j in range(n_sites)]
    return {f"p{i:02d}": list(lst) for i in range(n_participants)}


# -- site scores ----------------------------------------------------------------------------

def test_site_scores_mean_then_max():
    scores = np.array([[0.2, 0.9, 0.4], [0.6, 0.1, 0.4]])
    sites, best = site_scores(scores, ["A", "B", "A"])
    assert sites.tolist() == ["A", "B"]
    assert best.tolist() == pytest.approx([0.4, 0.5])


def test_merge_ties_are_seeded_and_stable():
    scores = np.ones((1, 6))
    sites = list("abcdef")
    a = merge_pair_scores_to_sites(scores, sites, seed=1)
    assert a == merge_pair_scores_to_sites(scores, sites, seed=1)
    orders = {tuple(s for s, _ in merge_pair_scores_to_sites(scores, sites, seed=k)) for k in range(10)}
    assert len(orders) > 1
    ranked = merge_pair_scores_to_sites(np.array([[0.1, 0.3, 0.2]]), ["x", "y", "z"])
    assert [s for s, _ in ranked] == ["y", "z", "x"]


# -- draft ----------------------------------------------------------------------------------

def test_draft_respects_cap():
    sets = draft_assign(shared_ranking(30), BatchConfig(k=5, cap=10, seed=1))
    counts = {}
    for rs in sets.values():
        assert len(rs.sites) == 5 and not rs.incomplete
        assert len(set(rs.site_ids)) == 5
        for s in rs.site_ids:
            counts[s] = counts.get(s, 0) + 1
    assert max(counts.values()) == 10
    assert sum(counts.values()) == 150


def test_draft_model_rank_is_position_in_list():
    sets = draft_assign({"p": [("a", 0.9), ("b", 0.8), ("c", 0.7), ("d", 0.6), ("e", 0.5), ("f", 0.4)]},
                        BatchConfig(k=5, cap=1, blocklist={"b"}))
    assert sets["p"].sites == [("a", 0.9, 1), ("c", 0.7, 3), ("d", 0.6, 4), ("e", 0.5, 5), ("f", 0.4, 6)]


def test_draft_exclusion_and_shortfall(caplog):
    ranked = {"p": [("a", 0.9), ("b", 0.8), ("c", 0.7)], "q": [("a", 0.9), ("d", 0.1)]}
    sets = draft_assign(ranked, BatchConfig(k=5, cap=5), exclude={"p": {"a"}})
    assert sets["p"].site_ids == ["b", "c"] and sets["p"].incomplete
    assert sets["q"].site_ids == ["a", "d"]
    assert "only 2 recommendation" in caplog.text


def test_draft_is_seeded():
    r = shared_ranking(20)
    a = draft_assign(r, BatchConfig(cap=3, seed=5))
    b = draft_assign(r, BatchConfig(cap=3, seed=5))
    c = draft_assign(r, BatchConfig(cap=3, seed=6))
    assert {p: s.sites for p, s in a.items()} == {p: s.sites for p, s in b.items()}
    assert {p: s.sites for p, s in a.items()} != {p: s.sites for p, s in c.items()}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 25), st.integers(1, 6), st.integers(0, 1000))
def test_draft_invariants(n, cap, seed):
    rng = np.random.default_rng(seed)
    ranked = {f"p{i}": [(f"s{j}", float(v)) for j, v in zip(rng.permutation(15), np.sort(rng.random(15))[::-1])]
              for i in range(n)}
    sets = draft_assign(ranked, BatchConfig(cap=cap, seed=seed))
    counts = {}
    for p, rs in sets.items():
        assert len(set(rs.site_ids)) == len(rs.site_ids) <= 5
        ranks = [r for _, _, r in rs.sites]
        assert ranks == sorted(ranks)
        for s in rs.site_ids:
            counts[s] = counts.get(s, 0) + 1
    assert all(v <= cap for v in counts.values())


@pytest.mark.parametrize("kw", [dict(k=5, rounds=4), dict(cap=0), dict(k=0, rounds=0)])
def test_batch_config_validation(kw):
    with pytest.raises(ValueError):
        BatchConfig(**kw)


def test_pseudo_control_skips_ever_recommended():
    ranked = {"b1": {"p": [("a", 1.0), ("b", 0.9), ("c", 0.8), ("d", 0.7)]}}
    assigned = {"b1": {"p": RecommendationSet("p", [("a", 1.0, 1)])},
                "b0": {"q": RecommendationSet("q", [("c", 0.5, 1)])}}
    pc = build_pseudo_control_sets(ranked, assigned, k=2)
    assert pc["b1"]["p"].sites == [("b", 0.9, 2), ("d", 0.7, 4)]
    assert not pc["b1"]["p"].incomplete
    assert build_pseudo_control_sets(ranked, assigned, k=3)["b1"]["p"].incomplete


# -- rendering ------------------------------------------------------------------------------

def test_tracked_url_parameters():
    cfg = BatchConfig(batch_id="b7")
    q = parse_qs(urlparse(tracked_url("s 1", cfg, "alice")).query)
    assert q == {"utm_source": ["rec-engine"], "utm_medium": ["email"], "utm_campaign": ["b7"],
                 "utm_term": ["alice"], "utm_content": ["s 1"]}
    cfg2 = BatchConfig(site_url="https://x.org/j?id={site}")
    assert "?id=abc&utm_source=" in tracked_url("abc", cfg2, "p")


def test_truncate_preview():
    assert truncate_preview("short text") == "short text"
    assert truncate_preview(None) == ""
    long = ("word " * 200).strip()
    out = truncate_preview(long)
    assert out.endswith("…") and len(out) <= PREVIEW_CHARS + 1
    assert out[:-1].split() == ["word"] * len(out[:-1].split())
    exact = "x" * PREVIEW_CHARS
    assert truncate_preview(exact) == exact
    assert truncate_preview("a" * 600) == "a" * PREVIEW_CHARS + "…"


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet=st.sampled_from("ab \n"), max_size=900))
def test_truncate_preview_properties(text):
    out = truncate_preview(text)
    flat = " ".join(text.split())
    if len(flat) <= PREVIEW_CHARS:
        assert out == flat
    else:
        body = out[:-1]
        assert out.endswith("…") and len(body) <= PREVIEW_CHARS
        assert flat.startswith(body)


def test_render_email_contents():
    cfg = BatchConfig(batch_id="b1")
    rs = RecommendationSet("p1", [("s1", 0.9, 1), ("s2", 0.5, 3)])
    meta = {"s1": SiteMetadata("Gardening <notes>", "New seedlings today"), "s2": SiteMetadata("Recovery diary")}
    doc = render_email(rs, meta, cfg)
    assert "Gardening &lt;notes&gt;" in doc.html and "New seedlings today" in doc.html
    assert doc.html.count('class="rec"') == 2
    for word in ("Feedback", "FAQ", "Unsubscribe"):
        assert word in doc.html and word in doc.text
    assert doc.links == [tracked_url("s1", cfg, "p1"), tracked_url("s2", cfg, "p1")]
    assert [r["slot"] for r in doc.manifest_rows] == [1, 2]
    assert doc.manifest_rows[1]["model_rank"] == 3
    with pytest.raises(KeyError, match="s2"):
        render_email(rs, {"s1": meta["s1"]}, cfg)


def test_write_batch_round_trip(tmp_path):
    cfg = BatchConfig(batch_id="b2", cap=2)
    sets = draft_assign(shared_ranking(3, 8), cfg)
    meta = {f"s{j:02d}": SiteMetadata(f"Site {j}", "latest") for j in range(8)}
    pc = {"p00": RecommendationSet("p00", [("s07", 0.1, 8)])}
    out = write_batch(tmp_path / "b2", sets, meta, cfg, previously_recommended={"s00"}, pseudo_control=pc)
    for p in sets:
        assert (out / f"{p}.html").exists() and (out / f"{p}.txt").exists()
    with open(out / "manifest.csv", newline="") as fh:
        assert tuple(next(csv.reader(fh))) == MANIFEST_FIELDS
    back = read_manifest(out / "manifest.csv")
    assert {p: s.sites for p, s in back.items()} == {p: [(s, float(v), r) for s, v, r in rs.sites]
                                                     for p, rs in sets.items()}
    review = (out / "review.txt").read_text().splitlines()
    assert "s00\tSite 0" not in review and len(review) == len({s for rs in sets.values() for s in rs.site_ids}) - 1
    assert (out / "pseudo_control.csv").read_text().splitlines()[1] == "p00,b2,1,s07,0.1,8"
