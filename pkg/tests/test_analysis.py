import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.special import expit

from peerrec.analysis import (OutcomePanel, PowerRequest, achieved_power, build_outcome_panel, cles, effect_size,
                              effect_size_from_samples, estimate, group_difference_report, required_sample_size)
from peerrec.analysis.estimators import (PROPENSITY_CLIP, ConvergenceError, RankDeficientError, bootstrap_rows,
                                         dr_point, irls_logistic)
from peerrec.analysis.groups import format_group_report
from peerrec.analysis.outcomes import ActionIndex, fabricate_event_times
from peerrec.analysis.panel import PanelError
from peerrec.events import EventKind, EventLog, EventRecord
from peerrec.history import DAY_MS, WEEK_MS

U, V, R = EventKind.JOURNAL_UPDATE, EventKind.VISIT, EventKind.REACTION


def panel(T, Y, A=None, names=None):
    n = len(T)
    A = np.zeros((n, 0)) if A is None else np.asarray(A, dtype=float).reshape(n, -1)
    names = names or [f"a{j}" for j in range(A.shape[1])]
    return OutcomePanel([f"u{i}" for i in range(n)], T, A, Y, names)


# -- estimators -----------------------------------------------------------------------------

def test_raw_examples():
    p = panel([1, 1, 0, 0], [3.0, 3.0, 1.0, 1.0])
    assert estimate(p, "raw", n_bootstrap=0).point == 2.0
    same = panel([1, 0, 1, 0], [2.0, 2.0, 5.0, 5.0])
    assert estimate(same, "raw", n_bootstrap=0).point == 0.0


def test_constant_treatment_rejected():
    with pytest.raises(PanelError, match="constant"):
        estimate(panel([1, 1, 1], [1.0, 2.0, 3.0]), "raw")
    with pytest.raises(ValueError, match="unknown method"):
        estimate(panel([1, 0], [1.0, 2.0]), "magic")


def test_reduction_chain():
    rng = np.random.default_rng(4)
    T = rng.integers(0, 2, 300)
    Y = 1.5 * T + rng.normal(size=300)
    p = panel(T, Y)
    raw = estimate(p, "raw", n_bootstrap=0).point
    assert abs(estimate(p, "ols", n_bootstrap=0).point - raw) < 1e-10
    assert abs(estimate(p, "doubly_robust", n_bootstrap=0).point - raw) < 1e-10


def test_dr_zero_when_arms_match():
    A = np.tile([[0.0], [1.0]], (10, 1))
    T = np.tile([1, 1, 0, 0], 5)
    Y = A[:, 0] * 2 + 1
    assert dr_point(panel(T, Y, A)) == pytest.approx(0.0, abs=1e-12)


def test_duplicated_covariate_named():
    rng = np.random.default_rng(0)
    a = rng.normal(size=50)
    p = panel(rng.integers(0, 2, 50), rng.normal(size=50), np.column_stack([a, rng.normal(size=50), a]),
              ["visits", "updates", "visits_copy"])
    for method in ("ols", "doubly_robust"):
        with pytest.raises(RankDeficientError, match="visits_copy"):
            estimate(p, method, n_bootstrap=0)


def test_ols_adjusts_for_confounding():
    rng = np.random.default_rng(12)
    n = 600
    a = rng.normal(size=n)
    T = (rng.random(n) < expit(1.5 * a)).astype(float)
    Y = 2.0 * a + rng.normal(size=n)  # no treatment effect
    p = panel(T, Y, a[:, None])
    ols = estimate(p, "ols", n_bootstrap=300, seed=1)
    raw = estimate(p, "raw", n_bootstrap=300, seed=1)
    sd = (ols.ci_high - ols.ci_low) / (2 * 1.96)
    assert abs(ols.point) < 2 * sd
    assert raw.ci_low > 0.5


def test_bootstrap_deterministic_and_stratified():
    rng = np.random.default_rng(1)
    p = panel(rng.integers(0, 2, 80), rng.normal(size=80), rng.normal(size=(80, 2)))
    a = estimate(p, "doubly_robust", n_bootstrap=50, seed=9)
    b = estimate(p, "doubly_robust", n_bootstrap=50, seed=9)
    c = estimate(p, "doubly_robust", n_bootstrap=50, seed=10)
    assert (a.ci_low, a.ci_high) == (b.ci_low, b.ci_high) != (c.ci_low, c.ci_high)
    assert a.ci_low <= a.point <= a.ci_high
    rows = bootstrap_rows(p.T, 3, 9)
    assert p.T[rows].sum() == p.n_treated and len(rows) == len(p)


def test_raw_bootstrap_coverage():
    hits = 0
    for rep in range(200):
        rng = np.random.default_rng([5, rep])
        T = np.repeat([1, 0], 40)
        Y = 0.7 * T + rng.normal(size=80)
        e = estimate(panel(T, Y), "raw", n_bootstrap=1000, seed=rep)
        hits += e.ci_low <= 0.7 <= e.ci_high
    assert 180 <= hits <= 198


def test_irls_matches_known_fit():
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(4000), rng.normal(size=4000)])
    t = (rng.random(4000) < expit(X @ [-0.5, 1.2])).astype(float)
    beta = irls_logistic(X, t)
    # the score equations hold at the maximum likelihood fit
    assert np.abs(X.T @ (t - expit(X @ beta))).max() < 1e-6
    assert beta == pytest.approx([-0.5, 1.2], abs=0.15)


def test_irls_separable_terminates():
    x = np.linspace(-1, 1, 40)
    X = np.column_stack([np.ones(40), x])
    t = (x > 0).astype(float)
    try:
        beta = irls_logistic(X, t)
    except ConvergenceError as e:
        assert "gradient norm" in str(e)
    else:
        assert np.isfinite(beta).all()
    # DR stays finite: clipped propensities bound each weight by 100
    Y = t + x
    assert np.isfinite(dr_point(panel(t, Y, x[:, None])))
    e = np.clip(expit(np.clip(X @ irls_logistic(X, t, max_iter=1000), -30, 30)), *PROPENSITY_CLIP)
    assert (1 / e).max() <= 100 + 1e-9 and (1 / (1 - e)).max() <= 100 + 1e-9


def test_effect_estimate_json():
    e = estimate(panel([1, 0, 1, 0], [2.0, 1.0, 3.0, 1.0]), "raw", n_bootstrap=20, seed=4)
    d = json.loads(e.to_json())
    assert set(d) >= {"method", "point", "ci", "n", "seed"} and d["n"] == 4 and d["seed"] == 4


# -- power ----------------------------------------------------------------------------------

def power_by_quadrature(n, rho, alpha=0.05):
    """One-tailed power, integrating the normal tail over the chi-square mixing density."""
    df = n - 2
    delta = rho * math.sqrt(n / (1 - rho * rho))
    crit = stats.t.ppf(1 - alpha, df)
    f = lambda v: stats.norm.sf(crit * math.sqrt(v / df) - delta) * stats.chi2.pdf(v, df)  # noqa: E731
    lo, hi = stats.chi2.ppf([1e-13, 1 - 1e-13], df)
    return integrate.quad(f, lo, hi, limit=200)[0]


@pytest.mark.parametrize("n, rho", [(10, 0.5), (75, 0.28), (444, 0.12), (30, 0.05)])
def test_power_matches_quadrature(n, rho):
    assert achieved_power(n, rho) == pytest.approx(power_by_quadrature(n, rho), abs=1e-6)


@pytest.mark.parametrize("rho, n_expected", [(0.28, 75), (0.12, 444)])
def test_sample_size_examples(rho, n_expected):
    n = required_sample_size(PowerRequest(rho))
    assert abs(n - n_expected) <= 0.1 * n_expected
    assert achieved_power(n, rho) >= 0.8 > achieved_power(n - 1, rho)


def test_sample_size_monotone():
    n9, n5, n1 = (required_sample_size(PowerRequest(r)) for r in (0.9, 0.5, 0.1))
    assert 4 <= n9 < n5 < n1
    assert required_sample_size(PowerRequest(0.3, power=0.9)) > required_sample_size(PowerRequest(0.3))
    assert required_sample_size(PowerRequest(0.3, tails=2)) > required_sample_size(PowerRequest(0.3))


@pytest.mark.parametrize("kw", [dict(effect_size_rho=1.0), dict(effect_size_rho=0.0), dict(effect_size_rho=0.2,
                                                                                            alpha=1.0),
                                dict(effect_size_rho=0.2, tails=3)])
def test_power_request_validation(kw):
    with pytest.raises(ValueError):
        PowerRequest(**kw)


def test_effect_size_examples():
    assert effect_size(0.0, 1.0) == 0.0
    assert effect_size(0.5, 0.25) == 1.0
    # rounded table inputs land near, not on, the full-precision value
    assert round(effect_size(0.06, 0.06), 2) == 0.24
    with pytest.raises(ValueError):
        effect_size(1.0, 0.0)
    # comparison group declined by 2, participants by 1; pooled SD 1
    assert effect_size(1.0, 1.0, 2.0, 1.0, 10, 10) == 1.0
    with pytest.raises(ValueError):
        effect_size(1.0, 1.0, 2.0)


def test_effect_size_from_samples():
    after_p = [1.0, 2.0, 3.0]
    assert effect_size_from_samples(after_p) == pytest.approx(2.0)
    before_p, before_c, after_c = [2.0, 3.0, 5.0], [4.0, 4.0, 6.0], [1.0, 2.0, 2.0]
    dp = np.subtract(before_p, after_p)
    dc = np.subtract(before_c, after_c)
    want = (dc.mean() - dp.mean()) / math.sqrt((dp.var(ddof=1) + dc.var(ddof=1)) / 2)
    assert effect_size_from_samples(after_p, before_p, after_c, before_c) == pytest.approx(want)


# -- group comparisons ----------------------------------------------------------------------

def test_cles_examples():
    assert cles([1, 2, 3], [1, 2, 3]) == 0.5
    assert cles([1, 2], [5, 6, 7]) == 0.0
    assert cles([5, 6, 7], [1, 2]) == 1.0
    with pytest.raises(ValueError):
        cles([], [1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=50), st.lists(st.integers(0, 5), min_size=1, max_size=50))
def test_cles_equals_pairwise_fraction(a, b):
    pairs = [(x > y) + 0.5 * (x == y) for x in a for y in b]
    assert cles(a, b) == pytest.approx(sum(pairs) / len(pairs), abs=1e-12)


def test_group_report():
    rows = group_difference_report({"visits": [1, 2, 3, 10], "updates": [0, 0, 1, 1]},
                                   {"visits": [1, 1, 2], "updates": [1, 0, 1]})
    assert [r.metric for r in rows] == ["updates", "visits"]
    v = rows[1]
    assert (v.median_a, v.median_b) == (2.5, 1.0)
    assert v.mean_difference == pytest.approx(4 - 4 / 3)
    assert v.welch_p == pytest.approx(stats.ttest_ind([1, 2, 3, 10], [1, 1, 2], equal_var=False).pvalue)
    assert 0.5 < v.cles < 1
    text = format_group_report(rows, "P", "C")
    assert "median P" in text and text.count("\n") == 4


# -- panels from logs -----------------------------------------------------------------------

def rec(t, kind, actor, site):
    return EventRecord(t, kind, actor, site, None, "x" if kind is U else None)


BASE = 100 * WEEK_MS


def test_peer_actions_on_hand_log():
    log = EventLog([rec(BASE, U, "a", "A"), rec(BASE + 1, U, "b", "B"),
                    rec(BASE + DAY_MS, V, "b", "A"), rec(BASE + 2 * DAY_MS, V, "b", "A"),
                    rec(BASE + 3 * DAY_MS, R, "b", "A"), rec(BASE + 4 * DAY_MS, R, "b", "B")])
    ix = ActionIndex(log)
    lo, hi = BASE, BASE + WEEK_MS
    cov = dict(zip(("journal_updates", "first_visits_other", "repeat_visits_other", "unique_days_visiting_other",
                    "interactions_other", "interactions_own", "self_sites_interacted"),
                   ix.author_covariates("b", lo, hi)))
    assert cov == {"journal_updates": 1, "first_visits_other": 1, "repeat_visits_other": 1,
                   "unique_days_visiting_other": 2, "interactions_other": 1, "interactions_own": 1,
                   "self_sites_interacted": 1}
    site = ix.site_covariates("A", lo, hi)
    assert site[:8] == [1, 1, 1, 1, 1, 2, 1, 1]
    assert ix.outcome("A", "peer_initiations", lo, hi, "site") == 1.0


def _unit_log(offset):
    """Author u with updates in two consecutive weeks around BASE, shifted by ``offset``."""
    times = [BASE - 5 * DAY_MS, BASE - 2 * DAY_MS, BASE + DAY_MS, BASE + 2 * DAY_MS, BASE + 3 * DAY_MS,
             BASE + 8 * DAY_MS]
    rows = [rec(t + offset, U, "u", "S") for t in times]
    return EventLog(rows + [rec(BASE - 20 * WEEK_MS, U, "w", "W")])


def test_window_shift_swaps_covariate_and_outcome():
    def values(offset):
        p = build_outcome_panel(_unit_log(offset), ["u"], ["w"], {"u": BASE, "w": BASE}, pre_weeks=1,
                                post_weeks=1)
        return p.A[0, 0], p.Y[0]

    pre, post = values(0)
    assert (pre, post) == (2.0, 3.0)
    assert values(WEEK_MS)[1] == pre
    assert values(-WEEK_MS)[0] == post


def test_panel_defaults_and_zero_outcome():
    log = EventLog([rec(BASE - WEEK_MS, U, "u", "S"), rec(BASE - WEEK_MS, U, "v", "T")])
    p = build_outcome_panel(log, ["u"], ["v", "ghost"], {"u": BASE})
    assert (p.pre_weeks, p.post_weeks) == (5.0, 13.0)
    assert p.Y.tolist() == [0.0, 0.0]
    assert p.units == ["u", "v"] and p.meta["excluded_no_events"] == 1
    with pytest.raises(ValueError):
        build_outcome_panel(log, ["u"], ["u"], {"u": BASE})
    with pytest.raises(ValueError):
        build_outcome_panel(log, ["u"], [], {"u": BASE}, pre_weeks=0)


def test_fabricated_times_come_from_same_batch():
    times = {"t1": 100, "t2": 200, "t3": 900}
    batches = {"t1": "b1", "t2": "b1", "t3": "b2", "c1": "b1", "c2": "b2"}
    out = fabricate_event_times(["c1", "c2", "c3"], times, ["t1", "t2", "t3"], batches, seed=0)
    assert out["c1"] in (100, 200) and out["c2"] == 900 and out["c3"] in (100, 200, 900)
    assert out == fabricate_event_times(["c1", "c2", "c3"], times, ["t1", "t2", "t3"], batches, seed=0)


def test_panel_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    p = panel(rng.integers(0, 2, 10), rng.normal(size=10), rng.normal(size=(10, 2)), ["x", "y"])
    p.pre_weeks, p.post_weeks = 4.0, 9.0
    path = tmp_path / "panel.csv"
    p.to_csv(path)
    q = OutcomePanel.from_csv(path)
    assert q.units == p.units and q.covariates == ["x", "y"]
    assert np.array_equal(q.A, p.A) and np.array_equal(q.Y, p.Y) and np.array_equal(q.T, p.T)
    assert (q.pre_weeks, q.post_weeks) == (4.0, 9.0)
    lines = path.read_text().splitlines()
    lines[3] = ",".join(lines[3].split(",")[:-2] + ["", lines[3].split(",")[-1]])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(PanelError, match="missing"):
        OutcomePanel.from_csv(path)


def test_panel_validation():
    with pytest.raises(PanelError):
        panel([0, 2], [1.0, 1.0])
    with pytest.raises(PanelError):
        panel([0, 1], [1.0, np.nan])
    with pytest.raises(PanelError):
        OutcomePanel(["a"], [1], [[1.0]], [1.0], ["x", "y"])
