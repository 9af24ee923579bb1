"""Two-group descriptive comparisons with Welch's t and the common-language effect size."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


def cles(a, b):
    """P(a > b) + 0.5 P(a == b) over all cross-group pairs, via the Mann-Whitney U rank sum."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    if not n1 or not n2:
        raise ValueError("both groups must be nonempty")
    ranks = stats.rankdata(np.concatenate([a, b]))
    u = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n2))


@dataclass
class GroupDifference:
    metric: str
    n_a: int
    n_b: int
    median_a: float
    median_b: float
    mean_a: float
    sd_a: float
    mean_b: float
    sd_b: float
    mean_difference: float
    welch_p: float
    cles: float

    def to_dict(self):
        return asdict(self)


def group_difference_report(group_a: dict, group_b: dict, metrics=None):
    """Per-metric comparison of two groups; ``group_*`` map metric -> values.

    ``cles`` is the probability a random unit of A exceeds one of B.
    """
    metrics = sorted(set(group_a) & set(group_b)) if metrics is None else list(metrics)
    rows = []
    for m in metrics:
        a = np.asarray(group_a[m], dtype=float)
        b = np.asarray(group_b[m], dtype=float)
        if not len(a) or not len(b):
            raise ValueError(f"metric {m!r}: both groups must be nonempty")
        if len(a) > 1 and len(b) > 1 and (a.var() > 0 or b.var() > 0):
            p = float(stats.ttest_ind(a, b, equal_var=False).pvalue)
        else:
            p = float("nan")
        rows.append(GroupDifference(
            metric=m, n_a=len(a), n_b=len(b),
            median_a=float(np.median(a)), median_b=float(np.median(b)),
            mean_a=float(a.mean()), sd_a=float(a.std(ddof=1)) if len(a) > 1 else 0.0,
            mean_b=float(b.mean()), sd_b=float(b.std(ddof=1)) if len(b) > 1 else 0.0,
            mean_difference=float(a.mean() - b.mean()), welch_p=p, cles=cles(a, b)))
    return rows


def format_group_report(rows, label_a="A", label_b="B"):
    head = f"{'metric':<28}{'median ' + label_a:>14}{'median ' + label_b:>14}{'mean (SD) ' + label_a:>22}" \
           f"{'mean (SD) ' + label_b:>22}{'diff':>10}{'p':>9}{'CLES':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.metric:<28}{r.median_a:>14.3g}{r.median_b:>14.3g}"
                     f"{f'{r.mean_a:.3g} ({r.sd_a:.3g})':>22}{f'{r.mean_b:.3g} ({r.sd_b:.3g})':>22}"
                     f"{r.mean_difference:>10.3g}{r.welch_p:>9.3g}{100 * r.cles:>7.1f}%")
    return "\n".join(lines) + "\n"
