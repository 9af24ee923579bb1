import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from peerrec import RankingContext
from peerrec.events import EventKind, EventLog, EventRecord
from peerrec.features import (MISSING_HOURS, ColumnStandardizer, FeatureBuilder, FeatureConfig, HashingEmbedder,
                              PrecomputedEmbedder, activity_features, assemble, embed_site_text,
                              read_embedding_table, write_embedding_table)
from peerrec.feedback import AuthorSitePair, InteractionGraph
from peerrec.history import LogIndex

H = 3_600_000
D = 24 * H
U, R = EventKind.JOURNAL_UPDATE, EventKind.REACTION


def rec(t, kind, actor, site, text=None, ref=None):
    return EventRecord(t, kind, actor, site, ref, text if kind is U else None)


# -- layout -------------------------------------------------------------------------------

@pytest.mark.parametrize("d, n", [(768, 1563), (4, 35), (1, 29)])
def test_layout_length(d, n):
    assert FeatureConfig(dim=d).n_features == n


def test_slices_tile_the_vector():
    cfg = FeatureConfig(dim=7)
    covered = np.zeros(cfg.n_features, dtype=int)
    for sl in cfg.slices().values():
        covered[sl] += 1
    assert (covered == 1).all()


def test_text_only_mask_zeroes_other_blocks():
    cfg = FeatureConfig(dim=4, blocks="T")
    m = cfg.mask()
    s = cfg.slices()
    for name in ("src_activity", "src_network", "cand_activity", "cand_network", "dyadic"):
        assert not m[s[name]].any()
    assert m[s["src_text"]].all() and m[s["cand_text"]].all()


@pytest.mark.parametrize("blocks", ["", "X", "AZ"])
def test_bad_blocks_rejected(blocks):
    with pytest.raises(ValueError):
        FeatureConfig(dim=4, blocks=blocks)


# -- activity -------------------------------------------------------------------------------

def test_activity_examples():
    t = 100 * H
    log = EventLog([rec(t - 48 * H, U, "a", "S"), rec(t - 9 * H, U, "a", "S"), rec(t - 5 * H, U, "a", "S"),
                    rec(t - 30 * H, R, "a", "X"), rec(t, R, "a", "X"), rec(1, U, "x", "X")])
    b = FeatureBuilder(LogIndex(log), FeatureConfig(dim=4))
    f = activity_features(b, AuthorSitePair("a", "S"), t)
    assert (f.update_count, f.update_hours) == (3, 5.0)
    assert (f.reaction_count, f.reaction_hours) == (1, 30.0)
    assert (f.guestbook_count, f.guestbook_hours) == (0, MISSING_HOURS)
    assert f.tenure_hours == 48.0
    g = activity_features(b, AuthorSitePair("a", "S"), t - 8 * H)
    assert (g.update_count, g.update_hours) == (2, 1.0)


def test_tenure_uses_first_update_on_any_site():
    t = 100 * H
    log = EventLog([rec(t - 70 * H, U, "a", "Other"), rec(t - 10 * H, U, "a", "S")])
    b = FeatureBuilder(LogIndex(log), FeatureConfig(dim=4))
    assert activity_features(b, AuthorSitePair("a", "S"), t).tenure_hours == 70.0


# -- text -----------------------------------------------------------------------------------

def test_identical_updates_pool_to_the_single_vector():
    emb = HashingEmbedder(dim=32)
    log = EventLog([rec(k, U, "a", "S", "same words here") for k in (1, 2, 3)])
    b = FeatureBuilder(LogIndex(log), FeatureConfig(dim=32), emb)
    assert np.allclose(embed_site_text(b, "S", 10), emb.embed("same words here"))


def test_two_updates_pool_to_their_mean():
    emb = HashingEmbedder(dim=64, seed=3)
    log = EventLog([rec(1, U, "a", "S", "alpha beta"), rec(2, U, "a", "S", "gamma delta epsilon"),
                    rec(5, U, "a", "S", "late text")])
    b = FeatureBuilder(LogIndex(log), FeatureConfig(dim=64), emb)
    expected = (emb.embed("alpha beta") + emb.embed("gamma delta epsilon")) / 2
    assert np.array_equal(embed_site_text(b, "S", 5), expected)
    # only the three most recent updates count
    log4 = EventLog([rec(k, U, "a", "S", f"word{k}") for k in range(1, 5)])
    b4 = FeatureBuilder(LogIndex(log4), FeatureConfig(dim=64), emb)
    want = np.mean([emb.embed(f"word{k}") for k in (2, 3, 4)], axis=0)
    assert np.allclose(embed_site_text(b4, "S", 10), want)
    assert not embed_site_text(b4, "S", 1).any()


def test_hashing_embedder_properties():
    emb = HashingEmbedder(dim=768, seed=0).fit()
    v = emb.embed("hello there friend")
    assert v.shape == (768,) and np.isfinite(v).all()
    assert np.array_equal(v, HashingEmbedder(dim=768, seed=0).embed("hello there friend"))
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert not emb.embed("").any() and not emb.embed(None).any() and not emb.embed("!!!").any()
    rng = np.random.default_rng(0)
    a = " ".join(f"apple{int(i)}" for i in rng.integers(0, 5000, 1000))
    c = " ".join(f"zebra{int(i)}" for i in rng.integers(0, 5000, 1000))
    cos = emb.embed(a) @ emb.embed(c)
    assert abs(cos) < 0.2
    assert emb.embed(a) @ emb.embed(a) == pytest.approx(1.0)
    assert emb.transform(["x y", "z"]).shape == (2, 768)


@settings(max_examples=40, deadline=None)
@given(st.text(max_size=80), st.integers(1, 64))
def test_hashing_embedder_any_text(text, dim):
    v = HashingEmbedder(dim=dim).fit().embed(text)
    assert v.shape == (dim,) and np.isfinite(v).all()
    assert np.linalg.norm(v) == pytest.approx(1.0) or not v.any()


def test_precomputed_embedder(tmp_path):
    table = {"j1": np.array([1.0, 2.0, 3.0]), "j2": np.array([0.5, -1.0, 0.0])}
    path = tmp_path / "emb.bin"
    write_embedding_table(path, table)
    back = read_embedding_table(path)
    assert set(back) == set(table) and all(np.array_equal(back[k], table[k]) for k in table)
    emb = PrecomputedEmbedder.from_file(path)
    log = EventLog([rec(1, U, "a", "S", ref="j1"), rec(2, U, "a", "S", ref="j2"), rec(3, U, "a", "S", ref="nope")])
    b = FeatureBuilder(LogIndex(log), FeatureConfig(dim=3), emb)
    assert np.array_equal(embed_site_text(b, "S", 3), (table["j1"] + table["j2"]) / 2)
    with pytest.raises(KeyError, match="nope"):
        embed_site_text(b, "S", 4)
    with pytest.raises(ValueError):
        FeatureBuilder(LogIndex(log), FeatureConfig(dim=5), emb)


def test_embedding_table_jsonl(tmp_path):
    p = tmp_path / "emb.jsonl"
    p.write_text('{"content_ref": "a", "vector": [1, 2]}\n{"content_ref": "b", "vector": [3, 4]}\n')
    assert read_embedding_table(p)["b"].tolist() == [3.0, 4.0]


# -- assembled vectors -----------------------------------------------------------------------

def test_assemble_layout():
    t = 10 * D
    rows = [rec(k * H, U, "a", "A", "text a") for k in (1, 2, 3)] + [rec(k * H, U, "b", "B", "text b")
                                                                   for k in (1, 2, 3)]
    log = EventLog(rows + [rec(t - H, R, "b", "A")])
    cfg = FeatureConfig(dim=4)
    b = FeatureBuilder(LogIndex(log), cfg, HashingEmbedder(dim=4))
    g = InteractionGraph(2)
    g.add_edge(1, 0)
    x = assemble(b, AuthorSitePair("a", "A"), AuthorSitePair("b", "B"), g, t)
    s = cfg.slices()
    assert x.shape == (35,) and np.isfinite(x).all()
    assert x[s["dyadic"]].tolist() == [1.0, 0.0, 1.0]
    assert x[s["src_network"]].tolist() == [1.0, 0.0, 2.0]
    assert x[s["cand_network"]].tolist() == [0.0, 1.0, 2.0]
    assert x[s["cand_activity"]][2:4].tolist() == [1.0, 1.0]
    text_only = FeatureConfig(dim=4, blocks="T")
    y = assemble(FeatureBuilder(LogIndex(log), text_only, HashingEmbedder(dim=4)),
                 AuthorSitePair("a", "A"), AuthorSitePair("b", "B"), g, t)
    keep = text_only.mask()
    assert np.array_equal(y[keep], x[keep])
    assert not y[~keep].any()


def test_feature_matrix_matches_reference(small_log):
    d = 8
    emb = HashingEmbedder(dim=d, seed=1)
    ctx = RankingContext(small_log, FeatureConfig(dim=d), emb)
    ref = oracle.Reference(small_log.records)
    cache = {}
    checked = 0
    for init in ctx.initiations:
        t = init.timestamp_ms
        ctx.at(t)
        a = ctx.index.user_idx[init.source_author]
        src, cands = ctx.source_pairs(a), ctx.candidates(a)
        if not len(src) or not len(cands):
            continue
        X = ctx.feature_matrix(src, cands)
        snap = ref.snapshot(ref.graph_before(t))
        sp = ref.source_pairs(init.source_author, t)
        cp = ref.candidates(init.source_author, t)

        def side(pair):
            author, site = pair
            txt = ref.site_text(emb.embed, site, t, cache)
            return list(np.zeros(d) if txt is None else txt) + ref.activity(author, t) + ref.network(snap, author)

        want = np.array([side(p) + side(c) + ref.dyadic(snap, p[0], c[0]) for p in sp for c in cp])
        assert np.array_equal(X, want)
        checked += 1
    assert checked > 3


def test_column_standardizer():
    X = np.array([[1.0, 5.0, 2.0], [3.0, 5.0, 4.0]])
    sc = ColumnStandardizer([0, 1]).fit(X)
    Z = sc.transform(X)
    assert Z[:, 0].tolist() == [-1.0, 1.0]
    assert Z[:, 1].tolist() == [0.0, 0.0]
    assert Z[:, 2].tolist() == [2.0, 4.0]
    with pytest.raises(ValueError):
        sc.transform(np.zeros((1, 4)))
