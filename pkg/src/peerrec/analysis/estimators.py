"""Raw, regression-adjusted and doubly robust effect estimates with bootstrap CIs."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .panel import OutcomePanel, PanelError

logger = logging.getLogger(__name__)

N_BOOTSTRAP = 1000
PROPENSITY_CLIP = (0.01, 0.99)


class RankDeficientError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class EffectEstimate:
    method: str
    point: float
    ci_low: float
    ci_high: float
    n_treated: int
    n_control: int
    n_bootstrap: int
    seed: int

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        d = {"method": self.method, "point": self.point, "ci": [self.ci_low, self.ci_high],
             "n": self.n_treated + self.n_control, "n_treated": self.n_treated,
             "n_control": self.n_control, "n_bootstrap": self.n_bootstrap, "seed": self.seed}
        return json.dumps(d, sort_keys=True)


def design_matrix(panel: OutcomePanel, with_treatment=True):
    cols = [np.ones(len(panel))]
    names = ["intercept"]
    if with_treatment:
        cols.append(panel.T)
        names.append("T")
    cols.extend(panel.A.T)
    names.extend(panel.covariates)
    return np.column_stack(cols), names


def collinear_columns(X, names, tol=None):
    """Names of columns that add no rank beyond the columns to their left."""
    out = []
    kept = []
    for j in range(X.shape[1]):
        trial = X[:, kept + [j]]
        if np.linalg.matrix_rank(trial, tol=tol) <= len(kept):
            out.append(names[j])
        else:
            kept.append(j)
    return out


def _check_rank(X, names):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError(f"design matrix is rank deficient; collinear columns: {collinear_columns(X, names)}")


def _lstsq(X, y):
    return np.linalg.lstsq(X, y, rcond=None)[0]


def irls_logistic(X, t, max_iter=100, tol=1e-10):
    """Logistic regression coefficients by iteratively reweighted least squares.

    Linear predictors are clipped to [-30, 30], which bounds the weights away
    from zero on separable data; convergence is declared on a negligible
    change in deviance or gradient norm.
    """
    beta = np.zeros(X.shape[1])
    dev_old = np.inf
    grad_norm = np.inf
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -30.0, 30.0)
        mu = expit(eta)
        w = mu * (1.0 - mu)
        grad = X.T @ (t - mu)
        grad_norm = float(np.linalg.norm(grad))
        dev = -2.0 * float(np.sum(t * np.log(mu) + (1 - t) * np.log1p(-mu)))
        if grad_norm < tol or abs(dev_old - dev) < tol * (abs(dev) + 0.1):
            return beta
        dev_old = dev
        H = X.T @ (X * w[:, None])
        try:
            beta = beta + np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            beta = beta + np.linalg.lstsq(H, grad, rcond=None)[0]
    raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations (gradient norm {grad_norm:.3g})")


def raw_point(panel: OutcomePanel):
    return float(panel.Y[panel.T == 1].mean() - panel.Y[panel.T == 0].mean())


def ols_point(panel: OutcomePanel):
    X, names = design_matrix(panel)
    _check_rank(X, names)
    return float(_lstsq(X, panel.Y)[1])


def dr_point(panel: OutcomePanel, clip=PROPENSITY_CLIP):
    T, Y = panel.T, panel.Y
    X, names = design_matrix(panel, with_treatment=False)
    _check_rank(X, names)
    e = np.clip(expit(np.clip(X @ irls_logistic(X, T), -30.0, 30.0)), *clip)
    treated, control = T == 1, T == 0
    for arm, name in ((treated, "treated"), (control, "control")):
        if np.linalg.matrix_rank(X[arm]) < X.shape[1]:
            raise RankDeficientError(f"outcome regression on the {name} arm is rank deficient; "
                                     f"collinear columns: {collinear_columns(X[arm], names)}")
    m1 = X @ _lstsq(X[treated], Y[treated])
    m0 = X @ _lstsq(X[control], Y[control])
    mu1 = np.mean(T * (Y - m1) / e + m1)
    mu0 = np.mean((1 - T) * (Y - m0) / (1 - e) + m0)
    return float(mu1 - mu0)


POINT_ESTIMATORS = {"raw": raw_point, "ols": ols_point, "doubly_robust": dr_point}


def bootstrap_rows(T, i, seed):
    """Row indices of bootstrap resample ``i``, resampling within each treatment arm."""
    rng = np.random.default_rng([int(seed), int(i)])
    idx_t = np.flatnonzero(T == 1)
    idx_c = np.flatnonzero(T == 0)
    return np.concatenate([rng.choice(idx_t, size=len(idx_t)), rng.choice(idx_c, size=len(idx_c))])


def bootstrap_distribution(panel, point_fn, n_bootstrap=N_BOOTSTRAP, seed=0):
    out = np.empty(n_bootstrap)
    for i in range(n_bootstrap):
        out[i] = point_fn(panel.take(bootstrap_rows(panel.T, i, seed)))
    return out


def estimate(panel: OutcomePanel, method, n_bootstrap=N_BOOTSTRAP, seed=0, alpha=0.05) -> EffectEstimate:
    """Point estimate plus percentile bootstrap interval."""
    try:
        fn = POINT_ESTIMATORS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(POINT_ESTIMATORS)}") from None
    panel.check_treatment_varies()
    point = fn(panel)
    if n_bootstrap:
        draws = bootstrap_distribution(panel, fn, n_bootstrap, seed)
        lo, hi = np.quantile(draws, [alpha / 2, 1 - alpha / 2])
    else:
        lo = hi = float("nan")
    if n_bootstrap and not lo <= point <= hi:
        logger.warning("%s point estimate %.4g lies outside its percentile interval [%.4g, %.4g]",
                       method, point, lo, hi)
    return EffectEstimate(method, point, float(lo), float(hi), panel.n_treated, panel.n_control,
                          int(n_bootstrap), int(seed))


def raw_effect(panel, n_bootstrap=N_BOOTSTRAP, seed=0):
    return estimate(panel, "raw", n_bootstrap, seed)


def ols_effect(panel, n_bootstrap=N_BOOTSTRAP, seed=0):
    return estimate(panel, "ols", n_bootstrap, seed)


def doubly_robust_effect(panel, n_bootstrap=N_BOOTSTRAP, seed=0):
    return estimate(panel, "doubly_robust", n_bootstrap, seed)


__all__ = ["ConvergenceError", "EffectEstimate", "PanelError", "RankDeficientError", "bootstrap_rows",
           "doubly_robust_effect", "dr_point", "estimate", "irls_logistic", "ols_effect", "ols_point",
           "raw_effect", "raw_point"]
